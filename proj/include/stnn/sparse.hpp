#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace stnn {

/// Compressed sparse row matrix. Built from per-row entry lists; rows keep
/// their insertion order (duplicates within a row are merged on push).
struct CsrMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<std::int64_t> row_ptr;  // size rows + 1
    std::vector<std::int32_t> col_idx;
    std::vector<double> values;

    void apply(const double* x, double* y) const {
        for (int i = 0; i < rows; ++i) {
            double acc = 0.0;
            for (std::int64_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
                acc += values[k] * x[col_idx[k]];
            y[i] = acc;
        }
    }

    std::vector<double> apply(const std::vector<double>& x) const {
        if (int(x.size()) != cols) throw std::invalid_argument("CsrMatrix::apply: size mismatch");
        std::vector<double> y(rows);
        apply(x.data(), y.data());
        return y;
    }

    std::vector<std::vector<double>> to_dense() const {
        std::vector<std::vector<double>> d(rows, std::vector<double>(cols, 0.0));
        for (int i = 0; i < rows; ++i)
            for (std::int64_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
                d[i][col_idx[k]] += values[k];
        return d;
    }
};

/// Row-wise builder; entries for one row are accumulated in a small scratch
/// buffer and flushed in one go.
class CsrBuilder {
  public:
    CsrBuilder(int rows, int cols) : rows_(rows), cols_(cols) {
        m_.rows = rows;
        m_.cols = cols;
        m_.row_ptr.assign(1, 0);
    }

    void add(int col, double v) { entries_.emplace_back(col, v); }

    void finish_row() {
        // merge duplicate columns within the row (stencils are tiny, O(k^2) is fine)
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            bool dup = false;
            for (std::size_t j = 0; j < i; ++j) {
                if (entries_[j].first == entries_[i].first) {
                    dup = true;
                    break;
                }
            }
            if (dup) continue;
            double v = entries_[i].second;
            for (std::size_t j = i + 1; j < entries_.size(); ++j)
                if (entries_[j].first == entries_[i].first) v += entries_[j].second;
            m_.col_idx.push_back(entries_[i].first);
            m_.values.push_back(v);
        }
        m_.row_ptr.push_back(std::int64_t(m_.col_idx.size()));
        entries_.clear();
    }

    CsrMatrix take() {
        if (int(m_.row_ptr.size()) != rows_ + 1)
            throw std::logic_error("CsrBuilder: row count mismatch at take()");
        return std::move(m_);
    }

  private:
    int rows_, cols_;
    CsrMatrix m_;
    std::vector<std::pair<int, double>> entries_;
};

}  // namespace stnn
