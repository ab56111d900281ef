#pragma once

// Tensor-train linear layer: a chain of 4-way cores Q_k with shape
// [r_{k-1} x L_k x U_k x r_k] acting as a (prod L) x (prod U) matrix.
// Forward/backward never materialize the dense matrix; the sweep holds a
// [rank x processed-output x remaining-input] intermediate.

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stnn {

struct TtSpec {
    int d = 0;
    std::vector<int> out_modes;  // L_k, product = output length
    std::vector<int> in_modes;   // U_k, product = input length
    std::vector<int> ranks;      // r_0 .. r_d, with r_0 = r_d = 1

    std::int64_t output_len() const {
        std::int64_t p = 1;
        for (int v : out_modes) p *= v;
        return p;
    }
    std::int64_t input_len() const {
        std::int64_t p = 1;
        for (int v : in_modes) p *= v;
        return p;
    }
    std::int64_t core_size(int k) const {
        return std::int64_t(ranks[k]) * out_modes[k] * in_modes[k] * ranks[k + 1];
    }
    std::int64_t parameter_count() const {
        std::int64_t n = 0;
        for (int k = 0; k < d; ++k) n += core_size(k);
        return n;
    }

    void validate() const {
        if (d < 1) throw std::invalid_argument("TtSpec: d must be >= 1");
        if (int(out_modes.size()) != d || int(in_modes.size()) != d ||
            int(ranks.size()) != d + 1)
            throw std::invalid_argument("TtSpec: mode/rank list sizes inconsistent with d");
        if (ranks.front() != 1 || ranks.back() != 1)
            throw std::invalid_argument("TtSpec: boundary ranks must be 1");
        for (int v : out_modes)
            if (v < 1) throw std::invalid_argument("TtSpec: output modes must be >= 1");
        for (int v : in_modes)
            if (v < 1) throw std::invalid_argument("TtSpec: input modes must be >= 1");
        for (int v : ranks)
            if (v < 1) throw std::invalid_argument("TtSpec: ranks must be >= 1");
    }
};

/// Balanced power-of-two mode factorization of the input and output lengths,
/// padded with trailing 1s. Ranks are left unset (all 1).
inline TtSpec plan_modes(std::int64_t input_len, std::int64_t output_len, int d) {
    auto factorize = [d](std::int64_t len, const char* what) {
        if (len < 1 || (len & (len - 1)) != 0)
            throw std::invalid_argument(std::string("plan_modes: ") + what +
                                        " length has no power-of-two factorization");
        int e = 0;
        while ((std::int64_t(1) << e) < len) ++e;
        std::vector<int> modes(d, 1);
        const int base = e / d, rem = e % d;
        for (int k = 0; k < d; ++k) modes[k] = 1 << (base + (k < rem ? 1 : 0));
        return modes;
    };
    if (d < 1) throw std::invalid_argument("plan_modes: d must be >= 1");
    TtSpec spec;
    spec.d = d;
    spec.out_modes = factorize(output_len, "output");
    spec.in_modes = factorize(input_len, "input");
    spec.ranks.assign(d + 1, 1);
    spec.validate();
    return spec;
}

/// Core k is stored row-major as [r_{k-1}][L_k][U_k][r_k].
struct TtCores {
    TtSpec spec;
    std::vector<std::vector<double>> cores;

    void validate() const {
        spec.validate();
        if (int(cores.size()) != spec.d) throw std::invalid_argument("TtCores: core count mismatch");
        for (int k = 0; k < spec.d; ++k)
            if (std::int64_t(cores[k].size()) != spec.core_size(k))
                throw std::invalid_argument("TtCores: core " + std::to_string(k) + " size mismatch");
    }
};

/// Glorot-normal cores: per-core stddev sqrt(2 / (r_{k-1} U_k + r_k L_k)).
inline TtCores init_cores(const TtSpec& spec, std::mt19937_64& rng) {
    spec.validate();
    TtCores tt;
    tt.spec = spec;
    tt.cores.resize(spec.d);
    for (int k = 0; k < spec.d; ++k) {
        const double fan_in = double(spec.ranks[k]) * spec.in_modes[k];
        const double fan_out = double(spec.ranks[k + 1]) * spec.out_modes[k];
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (fan_in + fan_out)));
        tt.cores[k].resize(spec.core_size(k));
        for (auto& v : tt.cores[k]) v = dist(rng);
    }
    return tt;
}

namespace ttdetail {

// One contraction step. T_prev is [r_prev][O][U*R] flat, T_next is
// [r_next][O*L][R] flat; the inner axpy runs over the contiguous R block.
inline void sweep_step(const double* core, const double* t_prev, double* t_next, int r_prev,
                       int r_next, int l, int u, std::int64_t o, std::int64_t rrem) {
    for (int a = 0; a < r_prev; ++a)
        for (std::int64_t oo = 0; oo < o; ++oo)
            for (int uu = 0; uu < u; ++uu) {
                const double* src = t_prev + ((a * o + oo) * u + uu) * rrem;
                for (int i = 0; i < l; ++i) {
                    const double* q = core + ((std::int64_t(a) * l + i) * u + uu) * r_next;
                    for (int b = 0; b < r_next; ++b) {
                        const double qv = q[b];
                        double* dst = t_next + ((std::int64_t(b) * o * l) + oo * l + i) * rrem;
                        for (std::int64_t j = 0; j < rrem; ++j) dst[j] += qv * src[j];
                    }
                }
            }
}

}  // namespace ttdetail

/// Workspace holding the sweep intermediates; reusable across calls and
/// required by tt_backward.
struct TtWorkspace {
    int batch = 1;
    std::vector<std::vector<double>> stages;  // stages[k] = T_k, k = 0..d
};

/// Batched forward: x is [input_len x batch] with the batch index fastest,
/// y likewise [output_len x batch]. The batch dimension rides through the
/// sweep as a trailing uncontracted mode, so the innermost loops stream
/// batch-contiguous memory.
inline void tt_forward_batch(const TtCores& tt, const double* x, int batch, double* y,
                             TtWorkspace& ws) {
    const TtSpec& s = tt.spec;
    ws.batch = batch;
    ws.stages.resize(s.d + 1);
    const std::int64_t in_len = s.input_len();

    ws.stages[0].assign(x, x + in_len * batch);
    std::int64_t o = 1;         // processed output size
    std::int64_t rem = in_len;  // remaining input size (incl. current mode)
    for (int k = 0; k < s.d; ++k) {
        const std::int64_t rrem = rem / s.in_modes[k];
        ws.stages[k + 1].assign(std::size_t(s.ranks[k + 1]) * o * s.out_modes[k] * rrem * batch,
                                0.0);
        ttdetail::sweep_step(tt.cores[k].data(), ws.stages[k].data(), ws.stages[k + 1].data(),
                             s.ranks[k], s.ranks[k + 1], s.out_modes[k], s.in_modes[k], o,
                             rrem * batch);
        o *= s.out_modes[k];
        rem = rrem;
    }
    const auto& out = ws.stages[s.d];
    std::copy(out.begin(), out.end(), y);
}

inline void tt_forward(const TtCores& tt, const double* x, double* y, TtWorkspace& ws) {
    tt_forward_batch(tt, x, 1, y, ws);
}

inline std::vector<double> tt_forward(const TtCores& tt, const std::vector<double>& x) {
    if (std::int64_t(x.size()) != tt.spec.input_len())
        throw std::invalid_argument("tt_forward: input length mismatch");
    TtWorkspace ws;
    std::vector<double> y(tt.spec.output_len());
    tt_forward(tt, x.data(), y.data(), ws);
    return y;
}

/// Reverse-mode gradients of tt_forward_batch. `ws` must hold the
/// intermediates of the matching forward call. Core gradients (summed over
/// the batch) are accumulated (+=) into `core_grads`; per-sample input
/// gradients are written to x_grad ([input_len x batch], batch fastest).
inline void tt_backward_batch(const TtCores& tt, const TtWorkspace& ws, const double* upstream,
                              std::span<std::vector<double>> core_grads, double* x_grad) {
    const TtSpec& s = tt.spec;
    const std::int64_t batch = ws.batch;
    if (int(core_grads.size()) != s.d)
        throw std::invalid_argument("tt_backward: core_grads shape mismatch");

    // sizes at each stage
    std::vector<std::int64_t> o_sizes(s.d + 1), rem_sizes(s.d + 1);
    o_sizes[0] = 1;
    rem_sizes[0] = s.input_len();
    for (int k = 0; k < s.d; ++k) {
        o_sizes[k + 1] = o_sizes[k] * s.out_modes[k];
        rem_sizes[k + 1] = rem_sizes[k] / s.in_modes[k];
    }

    std::vector<double> grad(upstream, upstream + s.output_len() * batch);
    for (int k = s.d - 1; k >= 0; --k) {
        const int r_prev = s.ranks[k], r_next = s.ranks[k + 1];
        const int l = s.out_modes[k], u = s.in_modes[k];
        const std::int64_t o = o_sizes[k], rrem = rem_sizes[k + 1] * batch;
        const double* t_prev = ws.stages[k].data();
        auto& cg = core_grads[k];
        if (std::int64_t(cg.size()) != s.core_size(k))
            throw std::invalid_argument("tt_backward: core_grads size mismatch");

        std::vector<double> next_grad(std::size_t(r_prev) * o * u * rrem, 0.0);
        for (int a = 0; a < r_prev; ++a)
            for (std::int64_t oo = 0; oo < o; ++oo)
                for (int uu = 0; uu < u; ++uu) {
                    const double* src = t_prev + ((a * o + oo) * u + uu) * rrem;
                    double* ng = next_grad.data() + ((a * o + oo) * u + uu) * rrem;
                    for (int i = 0; i < l; ++i) {
                        const double* q =
                            tt.cores[k].data() + ((std::int64_t(a) * l + i) * u + uu) * r_next;
                        double* qg = cg.data() + ((std::int64_t(a) * l + i) * u + uu) * r_next;
                        for (int b = 0; b < r_next; ++b) {
                            const double* g =
                                grad.data() + ((std::int64_t(b) * o * l) + oo * l + i) * rrem;
                            double acc = 0.0;
                            const double qv = q[b];
                            for (std::int64_t j = 0; j < rrem; ++j) {
                                acc += g[j] * src[j];
                                ng[j] += qv * g[j];
                            }
                            qg[b] += acc;
                        }
                    }
                }
        grad = std::move(next_grad);
    }
    std::copy(grad.begin(), grad.end(), x_grad);
}

inline void tt_backward(const TtCores& tt, const TtWorkspace& ws, const double* upstream,
                        std::span<std::vector<double>> core_grads, double* x_grad) {
    tt_backward_batch(tt, ws, upstream, core_grads, x_grad);
}

/// Materialize the full (prod L) x (prod U) matrix, row-major.
inline std::vector<double> tt_to_dense(const TtCores& tt, std::int64_t max_entries = 1 << 26) {
    const TtSpec& s = tt.spec;
    const std::int64_t rows = s.output_len(), cols = s.input_len();
    if (rows * cols > max_entries)
        throw std::invalid_argument("tt_to_dense: size ceiling exceeded");

    // progressive contraction; g is [(out_done x in_done)][rank]
    std::vector<double> g{1.0};
    std::int64_t od = 1, id = 1;
    for (int k = 0; k < s.d; ++k) {
        const int r_prev = s.ranks[k], r_next = s.ranks[k + 1];
        const int l = s.out_modes[k], u = s.in_modes[k];
        std::vector<double> next(od * l * id * u * r_next, 0.0);
        for (std::int64_t oo = 0; oo < od; ++oo)
            for (int i = 0; i < l; ++i)
                for (std::int64_t jj = 0; jj < id; ++jj)
                    for (int uu = 0; uu < u; ++uu) {
                        double* dst =
                            next.data() +
                            (((oo * l + i) * id + jj) * u + uu) * r_next;
                        for (int a = 0; a < r_prev; ++a) {
                            const double gv = g[(oo * id + jj) * r_prev + a];
                            if (gv == 0.0) continue;
                            const double* q =
                                tt.cores[k].data() + ((std::int64_t(a) * l + i) * u + uu) * r_next;
                            for (int b = 0; b < r_next; ++b) dst[b] += gv * q[b];
                        }
                    }
        g = std::move(next);
        od *= l;
        id *= u;
    }
    return g;  // [rows x cols][1] row-major
}

}  // namespace stnn
