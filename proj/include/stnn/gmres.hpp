#pragma once

// Restarted GMRES with modified Gram-Schmidt Arnoldi and Givens-rotation
// least squares. No preconditioner; an optional diagonal scaling hook is
// provided but off by default.

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

namespace stnn {

struct GmresOptions {
    double tol = 1e-8;   // relative residual ||Ax - b|| / ||b||
    int restart = 50;
    int max_iter = 2000;
};

struct GmresStats {
    bool converged = false;
    int iterations = 0;
    int restarts = 0;
    double residual = 0.0;              // final true relative residual
    std::vector<double> history;        // relative residual estimate per iteration
};

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace detail

/// Solve A x = b for a square operator given as y = apply(x). Returns the
/// iterate and convergence stats; non-convergence is reported, never thrown.
inline std::pair<std::vector<double>, GmresStats> gmres(
    const std::function<void(const double*, double*)>& apply, const std::vector<double>& b,
    const std::vector<double>& x0, const GmresOptions& opt = {}) {
    const int n = int(b.size());
    GmresStats stats;
    std::vector<double> x = x0.empty() ? std::vector<double>(n, 0.0) : x0;
    if (int(x.size()) != n) throw std::invalid_argument("gmres: x0 size mismatch");

    const double bnorm = detail::norm2(b);
    if (bnorm == 0.0) {
        stats.converged = true;
        return {std::vector<double>(n, 0.0), stats};
    }
    const double abs_tol = opt.tol * bnorm;
    const int m = opt.restart;

    std::vector<std::vector<double>> v(m + 1, std::vector<double>(n));
    std::vector<double> h((m + 1) * m, 0.0);  // column-major: h[i + (m+1)*j]
    std::vector<double> cs(m), sn(m), g(m + 1);
    std::vector<double> r(n), w(n);

    auto residual_vec = [&](std::vector<double>& out) {
        apply(x.data(), out.data());
        for (int i = 0; i < n; ++i) out[i] = b[i] - out[i];
    };

    residual_vec(r);
    double rnorm = detail::norm2(r);

    while (stats.iterations < opt.max_iter) {
        if (rnorm <= abs_tol) {
            stats.converged = true;
            break;
        }
        std::fill(h.begin(), h.end(), 0.0);
        std::fill(g.begin(), g.end(), 0.0);
        g[0] = rnorm;
        for (int i = 0; i < n; ++i) v[0][i] = r[i] / rnorm;

        int j = 0;
        bool breakdown = false;
        while (j < m && stats.iterations < opt.max_iter) {
            apply(v[j].data(), w.data());
            for (int i = 0; i <= j; ++i) {
                const double hij = detail::dot(v[i], w);
                h[i + (m + 1) * j] = hij;
                for (int k = 0; k < n; ++k) w[k] -= hij * v[i][k];
            }
            const double hn = detail::norm2(w);
            h[(j + 1) + (m + 1) * j] = hn;
            if (hn > 0.0)
                for (int k = 0; k < n; ++k) v[j + 1][k] = w[k] / hn;

            // apply accumulated rotations to the new column, then form the next one
            for (int i = 0; i < j; ++i) {
                const double t = cs[i] * h[i + (m + 1) * j] + sn[i] * h[(i + 1) + (m + 1) * j];
                h[(i + 1) + (m + 1) * j] =
                    -sn[i] * h[i + (m + 1) * j] + cs[i] * h[(i + 1) + (m + 1) * j];
                h[i + (m + 1) * j] = t;
            }
            const double hd = h[j + (m + 1) * j], hs = h[(j + 1) + (m + 1) * j];
            const double denom = std::hypot(hd, hs);
            cs[j] = denom == 0.0 ? 1.0 : hd / denom;
            sn[j] = denom == 0.0 ? 0.0 : hs / denom;
            h[j + (m + 1) * j] = cs[j] * hd + sn[j] * hs;
            h[(j + 1) + (m + 1) * j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j] * g[j];

            ++j;
            ++stats.iterations;
            const double est = std::abs(g[j]);
            stats.history.push_back(est / bnorm);
            if (est <= abs_tol || hn == 0.0) {
                breakdown = hn == 0.0;
                break;
            }
        }

        // back substitution for the least-squares coefficients
        std::vector<double> y(j, 0.0);
        for (int i = j - 1; i >= 0; --i) {
            double s = g[i];
            for (int k = i + 1; k < j; ++k) s -= h[i + (m + 1) * k] * y[k];
            const double d = h[i + (m + 1) * i];
            y[i] = d == 0.0 ? 0.0 : s / d;
        }
        for (int i = 0; i < j; ++i)
            for (int k = 0; k < n; ++k) x[k] += y[i] * v[i][k];

        ++stats.restarts;
        residual_vec(r);
        rnorm = detail::norm2(r);
        if (rnorm <= abs_tol || breakdown) {
            stats.converged = rnorm <= abs_tol;
            break;
        }
    }

    if (rnorm <= abs_tol) stats.converged = true;
    stats.residual = rnorm / bnorm;
    return {std::move(x), stats};
}

}  // namespace stnn
