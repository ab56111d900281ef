#pragma once

#include <exception>
#include <functional>
#include <thread>
#include <utility>
#include <vector>

namespace stnn {

/// Contiguous partition of [0, n) into at most `workers` non-empty chunks.
inline std::vector<std::pair<int, int>> partition_chunks(int n, int workers) {
    std::vector<std::pair<int, int>> chunks;
    if (n <= 0 || workers < 1) return chunks;
    const int k = std::min(workers, n);
    int begin = 0;
    for (int i = 0; i < k; ++i) {
        const int count = n / k + (i < n % k ? 1 : 0);
        chunks.emplace_back(begin, begin + count);
        begin += count;
    }
    return chunks;
}

/// Run fn(chunk_index, begin, end) over a contiguous partition of [0, n).
/// Chunk 0 runs on the calling thread. Results must be reduced by the caller
/// in chunk order when determinism matters.
inline void parallel_chunks(int n, int workers,
                            const std::function<void(int, int, int)>& fn) {
    const auto chunks = partition_chunks(n, workers);
    if (chunks.empty()) return;
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(chunks.size());
    for (std::size_t c = 1; c < chunks.size(); ++c)
        threads.emplace_back([&, c] {
            try {
                fn(int(c), chunks[c].first, chunks[c].second);
            } catch (...) {
                errors[c] = std::current_exception();
            }
        });
    try {
        fn(0, chunks[0].first, chunks[0].second);
    } catch (...) {
        errors[0] = std::current_exception();
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace stnn
