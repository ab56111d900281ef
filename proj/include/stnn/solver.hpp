#pragma once

// Steady-state discretization of  ell * (cos w df/dx + sin w df/dy) = d2f/dw2
// on the annulus: first-order upwind differences in the radial and angular
// directions, fourth-order central differences in w, inflow boundary values
// eliminated into the right-hand side. Outflow boundary nodes are unknowns
// closed with the same upwind stencil, which only references upstream nodes.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "stnn/geometry.hpp"
#include "stnn/gmres.hpp"
#include "stnn/sparse.hpp"

namespace stnn {

/// Inflow boundary values g1 (inner) and g2 (outer) on the (eta, w) grid.
/// Entries at outflow nodes are stored as 0 and ignored by the solver.
struct BoundaryData {
    int n_eta = 0;
    int n_w = 0;
    std::vector<double> inner;  // n_eta * n_w, eta-major
    std::vector<double> outer;

    static BoundaryData zeros(const Grid& grid) {
        BoundaryData g;
        g.n_eta = grid.n_eta;
        g.n_w = grid.n_w;
        g.inner.assign(grid.n_boundary(), 0.0);
        g.outer.assign(grid.n_boundary(), 0.0);
        return g;
    }

    /// Stacked [inner; outer] vector of length 2 * n_eta * n_w.
    std::vector<double> stacked() const {
        std::vector<double> v;
        v.reserve(inner.size() * 2);
        v.insert(v.end(), inner.begin(), inner.end());
        v.insert(v.end(), outer.begin(), outer.end());
        return v;
    }
};

/// f on interior nodes plus both boundary shells, (n_rad + 2) x n_eta x n_w.
struct Field {
    int n_rad = 0;
    int n_eta = 0;
    int n_w = 0;
    std::vector<double> values;

    double& at(int ir, int ie, int iw) { return values[(ir * n_eta + ie) * n_w + iw]; }
    double at(int ir, int ie, int iw) const { return values[(ir * n_eta + ie) * n_w + iw]; }
};

/// rho at interior radial nodes, n_rad x n_eta.
struct Density {
    int n_rad = 0;
    int n_eta = 0;
    std::vector<double> values;

    double& at(int ir, int ie) { return values[ir * n_eta + ie]; }
    double at(int ir, int ie) const { return values[ir * n_eta + ie]; }
};

/// Assembled linear system: A x = rhs_map * [g1; g2], where x holds the
/// unknowns (interior + outflow boundary nodes). Immutable after assembly.
struct SparseOperator {
    DomainGeometry geometry;
    Grid grid;
    double ell = 0.0;
    CsrMatrix a;
    CsrMatrix rhs_map;
    std::vector<std::int32_t> unknown_of_node;  // field node -> unknown id, or -1 if prescribed
    std::vector<std::int32_t> node_of_unknown;
    std::vector<std::uint8_t> mask_inner, mask_outer;

    int n_unknowns() const { return a.rows; }

    std::vector<double> rhs(const BoundaryData& g) const { return rhs_map.apply(g.stacked()); }

    /// Scatter a solution vector plus the prescribed data into a full Field.
    Field compose_field(const std::vector<double>& x, const BoundaryData& g) const {
        Field f;
        f.n_rad = grid.n_rad;
        f.n_eta = grid.n_eta;
        f.n_w = grid.n_w;
        f.values.resize(grid.n_field());
        const int nb = grid.n_boundary();
        for (int node = 0; node < grid.n_field(); ++node) {
            const int uid = unknown_of_node[node];
            if (uid >= 0) {
                f.values[node] = x[uid];
            } else {
                const int ir = node / nb;
                const int rem = node % nb;
                f.values[node] = (ir == 0) ? g.inner[rem] : g.outer[rem];
            }
        }
        return f;
    }

    /// Extract the unknown-vector entries of a full field (test utility).
    std::vector<double> restrict_field(const Field& f) const {
        std::vector<double> x(n_unknowns());
        for (int node = 0; node < grid.n_field(); ++node)
            if (unknown_of_node[node] >= 0) x[unknown_of_node[node]] = f.values[node];
        return x;
    }
};

inline SparseOperator assemble(const DomainGeometry& geometry, const Grid& grid, double ell) {
    if (grid.n_rad < 2) throw std::invalid_argument("assemble: n_rad must be >= 2");
    if (grid.n_w < 5) throw std::invalid_argument("assemble: n_w must be >= 5 (w stencil width)");

    SparseOperator op;
    op.geometry = geometry;
    op.grid = grid;
    op.ell = ell;
    op.mask_inner = build_inflow_mask(geometry, grid, BoundarySide::Inner);
    op.mask_outer = build_inflow_mask(geometry, grid, BoundarySide::Outer);

    const int n_eta = grid.n_eta, n_w = grid.n_w, n_rad = grid.n_rad;
    const int nb = grid.n_boundary();

    op.unknown_of_node.assign(grid.n_field(), -1);
    for (int node = 0; node < grid.n_field(); ++node) {
        const int ir = node / nb;
        const int rem = node % nb;
        const bool prescribed = (ir == 0 && op.mask_inner[rem]) ||
                                (ir == n_rad + 1 && op.mask_outer[rem]);
        if (!prescribed) {
            op.unknown_of_node[node] = std::int32_t(op.node_of_unknown.size());
            op.node_of_unknown.push_back(node);
        }
    }
    const int n = int(op.node_of_unknown.size());

    CsrBuilder a_builder(n, n);
    CsrBuilder rhs_builder(n, 2 * nb);

    const double d_eta = grid.d_eta();
    const double inv_12dw2 = 1.0 / (12.0 * grid.d_w() * grid.d_w());

    for (int row = 0; row < n; ++row) {
        const int node = op.node_of_unknown[row];
        const int ir = node / nb;
        const int rem = node % nb;
        const int ie = rem / n_w;
        const int iw = rem % n_w;

        auto add_term = [&](int jr, int je, int jw, double coef) {
            const int target = grid.field_index(jr, je, jw);
            const int uid = op.unknown_of_node[target];
            if (uid >= 0) {
                a_builder.add(uid, coef);
            } else {
                const int gidx = (jr == 0 ? 0 : nb) + grid.boundary_index(je, jw);
                rhs_builder.add(gidx, -coef);
            }
        };

        const double rad = grid.rad_nodes[ir];
        const auto adv = advection_coeffs(geometry, rad, grid.eta_nodes[ie], grid.w_nodes[iw]);

        // radial advection, first-order upwind on the nonuniform grid
        if (ir == 0) {
            const double h = grid.rad_nodes[1] - grid.rad_nodes[0];
            const double c = ell * adv.a_rad / h;
            add_term(1, ie, iw, c);
            add_term(0, ie, iw, -c);
        } else if (ir == n_rad + 1) {
            const double h = grid.rad_nodes[ir] - grid.rad_nodes[ir - 1];
            const double c = ell * adv.a_rad / h;
            add_term(ir, ie, iw, c);
            add_term(ir - 1, ie, iw, -c);
        } else if (adv.a_rad > 0.0) {
            const double h = grid.rad_nodes[ir] - grid.rad_nodes[ir - 1];
            const double c = ell * adv.a_rad / h;
            add_term(ir, ie, iw, c);
            add_term(ir - 1, ie, iw, -c);
        } else if (adv.a_rad < 0.0) {
            const double h = grid.rad_nodes[ir + 1] - grid.rad_nodes[ir];
            const double c = ell * adv.a_rad / h;
            add_term(ir + 1, ie, iw, c);
            add_term(ir, ie, iw, -c);
        }

        // angular advection, first-order upwind on the uniform periodic grid
        if (adv.a_ang > 0.0) {
            const double c = ell * adv.a_ang / d_eta;
            add_term(ir, ie, iw, c);
            add_term(ir, (ie + n_eta - 1) % n_eta, iw, -c);
        } else if (adv.a_ang < 0.0) {
            const double c = ell * adv.a_ang / d_eta;
            add_term(ir, (ie + 1) % n_eta, iw, c);
            add_term(ir, ie, iw, -c);
        }

        // minus the w second derivative, fourth-order central, periodic
        add_term(ir, ie, (iw + n_w - 2) % n_w, inv_12dw2);
        add_term(ir, ie, (iw + n_w - 1) % n_w, -16.0 * inv_12dw2);
        add_term(ir, ie, iw, 30.0 * inv_12dw2);
        add_term(ir, ie, (iw + 1) % n_w, -16.0 * inv_12dw2);
        add_term(ir, ie, (iw + 2) % n_w, inv_12dw2);

        a_builder.finish_row();
        rhs_builder.finish_row();
    }

    op.a = a_builder.take();
    op.rhs_map = rhs_builder.take();
    return op;
}

/// Residual-style application of the discrete operator to a full field:
/// returns A * x - rhs_map * g with x and g both read off `f`. For an exact
/// discrete solution this is zero; for a manufactured field it exposes the
/// local truncation error.
inline std::vector<double> apply_to_field(const SparseOperator& op, const Field& f) {
    std::vector<double> x = op.restrict_field(f);
    std::vector<double> y(op.n_unknowns());
    op.a.apply(x.data(), y.data());

    const int nb = op.grid.n_boundary();
    std::vector<double> g(2 * nb);
    for (int i = 0; i < nb; ++i) {
        g[i] = f.values[i];                                       // inner shell is ir = 0
        g[nb + i] = f.values[(op.grid.n_rad + 1) * nb + i];       // outer shell
    }
    std::vector<double> r(op.n_unknowns());
    op.rhs_map.apply(g.data(), r.data());
    for (int i = 0; i < op.n_unknowns(); ++i) y[i] -= r[i];
    return y;
}

struct SolveResult {
    Field field;
    GmresStats stats;
};

inline void validate_boundary_data(const SparseOperator& op, const BoundaryData& g) {
    if (g.n_eta != op.grid.n_eta || g.n_w != op.grid.n_w ||
        int(g.inner.size()) != op.grid.n_boundary() || int(g.outer.size()) != op.grid.n_boundary())
        throw std::invalid_argument("BoundaryData: shape mismatch");
    for (int i = 0; i < op.grid.n_boundary(); ++i) {
        if (!(g.inner[i] >= 0.0) || !(g.outer[i] >= 0.0))
            throw std::invalid_argument("BoundaryData: entries must be non-negative and finite");
        if (!op.mask_inner[i] && g.inner[i] != 0.0)
            throw std::invalid_argument("BoundaryData: nonzero entry at an outflow node (inner)");
        if (!op.mask_outer[i] && g.outer[i] != 0.0)
            throw std::invalid_argument("BoundaryData: nonzero entry at an outflow node (outer)");
    }
}

/// Solve with a pre-assembled operator; skips the BoundaryData invariants so
/// linear combinations can be formed internally. x0 may be empty.
inline SolveResult solve_with_operator(const SparseOperator& op, const BoundaryData& g,
                                       const GmresOptions& opt = {},
                                       const std::vector<double>& x0 = {}) {
    const auto rhs = op.rhs(g);
    auto apply = [&op](const double* x, double* y) { op.a.apply(x, y); };
    auto [x, stats] = gmres(apply, rhs, x0, opt);
    return {op.compose_field(x, g), std::move(stats)};
}

inline SolveResult solve_steady(const DomainParams& params, const BoundaryData& g, const Grid& grid,
                                const GmresOptions& opt = {}) {
    const auto geometry = build_geometry(params);
    const auto op = assemble(geometry, grid, params.ell);
    validate_boundary_data(op, g);
    return solve_with_operator(op, g, opt);
}

/// Linear interpolation of a coarse-grid field onto a finer grid: piecewise
/// linear in the radial coordinate, periodic linear in eta, nearest in w
/// (the w grids must match).
inline Field prolongate_field(const Field& coarse, const Grid& cgrid, const Grid& fgrid) {
    if (cgrid.n_w != fgrid.n_w)
        throw std::invalid_argument("prolongate_field: w grids must match");
    Field fine;
    fine.n_rad = fgrid.n_rad;
    fine.n_eta = fgrid.n_eta;
    fine.n_w = fgrid.n_w;
    fine.values.resize(fgrid.n_field());

    // radial interpolation weights per fine node
    std::vector<int> seg(fgrid.n_rad + 2);
    std::vector<double> frac(fgrid.n_rad + 2);
    for (int ir = 0; ir < fgrid.n_rad + 2; ++ir) {
        const double x = fgrid.rad_nodes[ir];
        int s = int(std::upper_bound(cgrid.rad_nodes.begin(), cgrid.rad_nodes.end(), x) -
                    cgrid.rad_nodes.begin()) -
                1;
        s = std::clamp(s, 0, cgrid.n_rad);
        seg[ir] = s;
        frac[ir] = std::clamp(
            (x - cgrid.rad_nodes[s]) / (cgrid.rad_nodes[s + 1] - cgrid.rad_nodes[s]), 0.0, 1.0);
    }
    const int ratio = fgrid.n_eta / cgrid.n_eta;
    for (int ir = 0; ir < fgrid.n_rad + 2; ++ir)
        for (int ie = 0; ie < fgrid.n_eta; ++ie) {
            const double eta = fgrid.eta_nodes[ie];
            const int ce = (ie / ratio) % cgrid.n_eta;
            const int ce1 = (ce + 1) % cgrid.n_eta;
            const double t = (eta - cgrid.eta_nodes[ce]) / cgrid.d_eta();
            for (int iw = 0; iw < fgrid.n_w; ++iw) {
                const auto lerp_eta = [&](int cr) {
                    return (1.0 - t) * coarse.at(cr, ce, iw) + t * coarse.at(cr, ce1, iw);
                };
                fine.at(ir, ie, iw) =
                    (1.0 - frac[ir]) * lerp_eta(seg[ir]) + frac[ir] * lerp_eta(seg[ir] + 1);
            }
        }
    return fine;
}

/// Restrict boundary data onto a coarser (eta-subsampled) grid, re-masked
/// against the coarse inflow sets.
inline BoundaryData restrict_boundary(const BoundaryData& g, const SparseOperator& coarse_op) {
    const Grid& cgrid = coarse_op.grid;
    const int ratio = g.n_eta / cgrid.n_eta;
    BoundaryData out = BoundaryData::zeros(cgrid);
    for (int ie = 0; ie < cgrid.n_eta; ++ie)
        for (int iw = 0; iw < cgrid.n_w; ++iw) {
            const int src = (ie * ratio) * g.n_w + iw;
            const int dst = cgrid.boundary_index(ie, iw);
            if (coarse_op.mask_inner[dst]) out.inner[dst] = g.inner[src];
            if (coarse_op.mask_outer[dst]) out.outer[dst] = g.outer[src];
        }
    return out;
}

/// Warm-started solve: recursively solves on radially/angularly coarsened
/// grids and prolongates upward, so the fine GMRES only has to remove the
/// interpolation error. This stands in for the operator-generated initial
/// guesses that make unpreconditioned GMRES reliable on this problem.
inline SolveResult solve_nested(const SparseOperator& op, const BoundaryData& g,
                                const GmresOptions& opt = {}, int min_rad = 16) {
    const Grid& grid = op.grid;
    if (grid.n_rad <= min_rad || grid.n_rad % 2 != 0 || grid.n_eta / 2 < 4)
        return solve_with_operator(op, g, opt);

    const auto cgrid = make_grid(op.geometry, grid.n_rad / 2, grid.n_eta / 2, grid.n_w);
    const auto cop = assemble(op.geometry, cgrid, op.ell);
    GmresOptions copt = opt;
    copt.tol = std::max(opt.tol, 1e-8);
    auto coarse = solve_nested(cop, restrict_boundary(g, cop), copt, min_rad);
    auto guess = prolongate_field(coarse.field, cgrid, grid);
    return solve_with_operator(op, g, opt, op.restrict_field(guess));
}

/// rho = integral of f dw by the periodic rectangle rule, interior radial
/// nodes only.
inline Density density(const Field& f, const Grid& grid) {
    Density rho;
    rho.n_rad = grid.n_rad;
    rho.n_eta = grid.n_eta;
    rho.values.assign(grid.n_rad * grid.n_eta, 0.0);
    const double dw = grid.d_w();
    for (int ir = 1; ir <= grid.n_rad; ++ir)
        for (int ie = 0; ie < grid.n_eta; ++ie) {
            double s = 0.0;
            for (int iw = 0; iw < grid.n_w; ++iw) s += f.at(ir, ie, iw);
            rho.at(ir - 1, ie) = s * dw;
        }
    return rho;
}

/// Surface integral of (n . u) f over one boundary, n the inward normal.
/// Positive values mean net influx.
inline double net_flux(const Field& f, const DomainGeometry& geom, const Grid& grid,
                       BoundarySide side) {
    const int ir = (side == BoundarySide::Inner) ? 0 : grid.n_rad + 1;
    const double de = grid.d_eta(), dw = grid.d_w();
    double total = 0.0;
    for (int ie = 0; ie < grid.n_eta; ++ie) {
        const double arc = boundary_arc_weight(geom, side, grid.eta_nodes[ie]);
        double s = 0.0;
        for (int iw = 0; iw < grid.n_w; ++iw)
            s += boundary_normal_dot_u(geom, grid, side, ie, iw) * f.at(ir, ie, iw);
        total += arc * s;
    }
    return total * de * dw;
}

/// Same integral with both factors taken in absolute value; the natural
/// scale against which a net flux is judged small.
inline double gross_flux(const Field& f, const DomainGeometry& geom, const Grid& grid,
                         BoundarySide side) {
    const int ir = (side == BoundarySide::Inner) ? 0 : grid.n_rad + 1;
    const double de = grid.d_eta(), dw = grid.d_w();
    double total = 0.0;
    for (int ie = 0; ie < grid.n_eta; ++ie) {
        const double arc = boundary_arc_weight(geom, side, grid.eta_nodes[ie]);
        double s = 0.0;
        for (int iw = 0; iw < grid.n_w; ++iw)
            s += std::abs(boundary_normal_dot_u(geom, grid, side, ie, iw) * f.at(ir, ie, iw));
        total += arc * s;
    }
    return total * de * dw;
}

/// Constant boundary data: `value` at every inflow node, 0 elsewhere.
inline BoundaryData constant_boundary(const DomainGeometry& geom, const Grid& grid, double value) {
    auto g = BoundaryData::zeros(grid);
    const auto mi = build_inflow_mask(geom, grid, BoundarySide::Inner);
    const auto mo = build_inflow_mask(geom, grid, BoundarySide::Outer);
    for (int i = 0; i < grid.n_boundary(); ++i) {
        if (mi[i]) g.inner[i] = value;
        if (mo[i]) g.outer[i] = value;
    }
    return g;
}

}  // namespace stnn
