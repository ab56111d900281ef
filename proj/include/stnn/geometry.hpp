#pragma once

// Confocal-elliptical annulus: domain parameters, curvilinear grids,
// advection coefficients of cos(w) d/dx + sin(w) d/dy, and the
// inflow/outflow classification of boundary nodes.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace stnn {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// The parameter triple (ell, a1, a2). The inner ellipse has minor axis a1
/// and major axis 1 (fixed by preprocessing); the outer minor axis is a2.
struct DomainParams {
    double ell = 1.0;
    double a1 = 1.0;
    double a2 = 2.0;

    /// Outer major axis fixed by confocality with the inner ellipse.
    double b2() const { return std::sqrt(a2 * a2 + 1.0 - a1 * a1); }

    void validate() const {
        if (!(ell > 0.0)) throw std::invalid_argument("DomainParams: ell must be > 0");
        if (!(a1 > 0.0 && a1 <= 1.0)) throw std::invalid_argument("DomainParams: a1 must be in (0, 1]");
        if (!(a2 > 1.0)) throw std::invalid_argument("DomainParams: a2 must be > 1");
    }
};

enum class Branch { Elliptic, Polar };

// Below this distance of a1 from 1 the elliptic coordinates degenerate
// (mu1 -> inf), so the circular branch is used instead.
inline constexpr double kCircularThreshold = 1e-6;

/// Derived geometry: coordinate branch, focal half-distance, and the radial
/// coordinate limits (mu1 < mu2 or r1 < r2). Immutable after construction.
struct DomainGeometry {
    DomainParams params;
    Branch branch = Branch::Polar;
    double c = 0.0;     // focal half-distance sqrt(1 - a1^2); 0 on the polar branch
    double rad1 = 0.0;  // inner boundary coordinate (mu1 or r1)
    double rad2 = 0.0;  // outer boundary coordinate (mu2 or r2)

    bool polar() const { return branch == Branch::Polar; }

    /// Cartesian position of a (radial, angular) coordinate pair.
    std::array<double, 2> to_cartesian(double rad, double ang) const {
        if (polar()) return {rad * std::cos(ang), rad * std::sin(ang)};
        return {c * std::cosh(rad) * std::cos(ang), c * std::sinh(rad) * std::sin(ang)};
    }
};

inline DomainGeometry build_geometry(const DomainParams& params) {
    params.validate();
    DomainGeometry g;
    g.params = params;
    if (1.0 - params.a1 < kCircularThreshold) {
        g.branch = Branch::Polar;
        g.c = 0.0;
        g.rad1 = 1.0;
        g.rad2 = params.a2;
    } else {
        g.branch = Branch::Elliptic;
        g.c = std::sqrt(1.0 - params.a1 * params.a1);
        g.rad1 = std::atanh(params.a1);             // tanh(mu1) = a1 / b1, b1 = 1
        g.rad2 = std::atanh(params.a2 / params.b2());
    }
    return g;
}

inline bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

/// Finite-difference node set. rad_nodes holds n_rad interior nodes plus the
/// two boundary nodes; eta and w are uniform periodic grids on [0, 2pi).
struct Grid {
    int n_rad = 0;
    int n_eta = 0;
    int n_w = 0;
    std::vector<double> rad_nodes;  // size n_rad + 2, strictly increasing
    std::vector<double> eta_nodes;
    std::vector<double> w_nodes;

    double d_eta() const { return two_pi / n_eta; }
    double d_w() const { return two_pi / n_w; }

    int n_boundary() const { return n_eta * n_w; }           // nodes per boundary shell
    int n_interior() const { return n_rad * n_eta * n_w; }
    int n_field() const { return (n_rad + 2) * n_eta * n_w; }

    int field_index(int ir, int ie, int iw) const { return (ir * n_eta + ie) * n_w + iw; }
    int boundary_index(int ie, int iw) const { return ie * n_w + iw; }
};

/// Sine-stretched radial nodes clustering at both boundaries. On the polar
/// branch the map is applied to r in [r1, r2]; on the elliptic branch the
/// same map is applied to e^mu, which makes the grid transform continuously
/// into the polar one as a1 -> 1.
inline std::vector<double> radial_grid(const DomainGeometry& geom, int n_rad) {
    if (n_rad < 2) throw std::invalid_argument("radial_grid: n_rad must be >= 2");
    const int n = n_rad + 2;
    std::vector<double> nodes(n);
    const double lo = geom.polar() ? geom.rad1 : std::exp(geom.rad1);
    const double hi = geom.polar() ? geom.rad2 : std::exp(geom.rad2);
    for (int i = 0; i < n; ++i) {
        const double nu = -0.5 * std::numbers::pi + std::numbers::pi * double(i) / double(n - 1);
        double v = (hi - lo) * (std::sin(nu) + 1.0) / 2.0 + lo;
        nodes[i] = geom.polar() ? v : std::log(v);
    }
    // endpoints exact
    nodes.front() = geom.rad1;
    nodes.back() = geom.rad2;
    return nodes;
}

inline Grid make_grid(const DomainGeometry& geom, int n_rad, int n_eta, int n_w) {
    if (!is_power_of_two(n_eta) || !is_power_of_two(n_w))
        throw std::invalid_argument("make_grid: n_eta and n_w must be powers of two");
    Grid g;
    g.n_rad = n_rad;
    g.n_eta = n_eta;
    g.n_w = n_w;
    g.rad_nodes = radial_grid(geom, n_rad);
    g.eta_nodes.resize(n_eta);
    for (int i = 0; i < n_eta; ++i) g.eta_nodes[i] = two_pi * double(i) / double(n_eta);
    g.w_nodes.resize(n_w);
    for (int i = 0; i < n_w; ++i) g.w_nodes[i] = two_pi * double(i) / double(n_w);
    return g;
}

/// Coefficients (a_rad, a_ang) such that a_rad d/d(rad) + a_ang d/d(ang)
/// equals cos(w) d/dx + sin(w) d/dy at the given point.
struct AdvectionCoeffs {
    double a_rad;
    double a_ang;
};

inline AdvectionCoeffs advection_coeffs(const DomainGeometry& geom, double rad, double ang, double w) {
    if (geom.polar()) {
        return {std::cos(w - ang), std::sin(w - ang) / rad};
    }
    const double sh = std::sinh(rad), ch = std::cosh(rad);
    const double se = std::sin(ang), ce = std::cos(ang);
    const double cw = std::cos(w), sw = std::sin(w);
    const double c = geom.c;
    const double jac = c * c * (sh * sh + se * se);  // > 0 since mu >= mu1 > 0
    return {c / jac * (sh * ce * cw + ch * se * sw),
            c / jac * (-ch * se * cw + sh * ce * sw)};
}

enum class BoundarySide { Inner, Outer };

/// n-hat . u-hat at a boundary node, with n-hat the inward normal. Positive
/// means inflow. On the polar branch the sign is decided in exact integer
/// arithmetic so that nodes with w - theta = +-pi/2 are classified
/// tangential (outflow) regardless of rounding in cos().
inline double boundary_normal_dot_u(const DomainGeometry& geom, const Grid& grid,
                                    BoundarySide side, int ie, int iw) {
    const double sign = (side == BoundarySide::Inner) ? 1.0 : -1.0;
    if (geom.polar()) {
        // delta = (w - theta) / 2pi as an exact fraction with denominator n_eta * n_w
        const std::int64_t den = std::int64_t(grid.n_eta) * grid.n_w;
        std::int64_t num = (std::int64_t(iw) * grid.n_eta - std::int64_t(ie) * grid.n_w) % den;
        if (num < 0) num += den;
        const std::int64_t quarter = den / 4;
        if (num == quarter || num == 3 * quarter) return 0.0;
        return sign * std::cos(two_pi * double(num) / double(den));
    }
    const double mu = (side == BoundarySide::Inner) ? geom.rad1 : geom.rad2;
    const double eta = grid.eta_nodes[ie], w = grid.w_nodes[iw];
    const double j = geom.c * geom.c * (std::sinh(mu) * std::sinh(mu) + std::sin(eta) * std::sin(eta));
    const auto a = advection_coeffs(geom, mu, eta, w);
    return sign * a.a_rad * std::sqrt(j);
}

inline bool inflow_mask(const DomainGeometry& geom, const Grid& grid,
                        BoundarySide side, int ie, int iw) {
    return boundary_normal_dot_u(geom, grid, side, ie, iw) > 0.0;
}

/// Full (n_eta x n_w) inflow mask for one boundary shell.
inline std::vector<std::uint8_t> build_inflow_mask(const DomainGeometry& geom, const Grid& grid,
                                                   BoundarySide side) {
    std::vector<std::uint8_t> mask(grid.n_boundary());
    for (int ie = 0; ie < grid.n_eta; ++ie)
        for (int iw = 0; iw < grid.n_w; ++iw)
            mask[grid.boundary_index(ie, iw)] = inflow_mask(geom, grid, side, ie, iw) ? 1 : 0;
    return mask;
}

/// Arc-length line element |d(x,y)/d eta| on a boundary shell.
inline double boundary_arc_weight(const DomainGeometry& geom, BoundarySide side, double eta) {
    if (geom.polar()) return (side == BoundarySide::Inner) ? geom.rad1 : geom.rad2;
    const double mu = (side == BoundarySide::Inner) ? geom.rad1 : geom.rad2;
    return geom.c * std::sqrt(std::sinh(mu) * std::sinh(mu) + std::sin(eta) * std::sin(eta));
}

}  // namespace stnn
