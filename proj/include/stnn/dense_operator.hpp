#pragma once

// Dense solution operator B mapping stacked boundary data [g1; g2] to the
// density vector, built column-by-column from unit boundary vectors through
// one LU factorization of the assembled system. Small grids only.

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "stnn/solver.hpp"

namespace stnn {

struct DenseOperatorOptions {
    int max_unknowns = 6000;
};

/// B has shape (n_rad * n_eta) x (2 * n_eta * n_w); columns at outflow
/// positions are zero, matching the BoundaryData storage convention.
inline Eigen::MatrixXd dense_solution_operator(const DomainParams& params, const Grid& grid,
                                               const DenseOperatorOptions& opt = {}) {
    const auto geometry = build_geometry(params);
    const auto op = assemble(geometry, grid, params.ell);
    const int n = op.n_unknowns();
    if (n > opt.max_unknowns)
        throw std::invalid_argument("dense_solution_operator: grid exceeds the size ceiling");

    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (std::int64_t k = op.a.row_ptr[i]; k < op.a.row_ptr[i + 1]; ++k)
            a(i, op.a.col_idx[k]) += op.a.values[k];
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);

    const int n_cols = 2 * grid.n_boundary();
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, n_cols);
    for (int i = 0; i < n; ++i)
        for (std::int64_t k = op.rhs_map.row_ptr[i]; k < op.rhs_map.row_ptr[i + 1]; ++k)
            rhs(i, op.rhs_map.col_idx[k]) += op.rhs_map.values[k];
    Eigen::MatrixXd x = lu.solve(rhs);

    const int n_out = grid.n_rad * grid.n_eta;
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n_out, n_cols);
    const double dw = grid.d_w();
    const int nb = grid.n_boundary();
    for (int uid = 0; uid < n; ++uid) {
        const int node = op.node_of_unknown[uid];
        const int ir = node / nb;
        if (ir < 1 || ir > grid.n_rad) continue;
        const int rem = node % nb;
        const int ie = rem / grid.n_w;
        const int out_row = (ir - 1) * grid.n_eta + ie;
        for (int col = 0; col < n_cols; ++col) b(out_row, col) += dw * x(uid, col);
    }
    return b;
}

}  // namespace stnn
