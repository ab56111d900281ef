#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "stnn/geometry.hpp"

using namespace stnn;
using Catch::Approx;

TEST_CASE("build_geometry selects the branch and derived quantities") {
    SECTION("circular case") {
        auto g = build_geometry({1.0, 1.0, 2.0});
        REQUIRE(g.branch == Branch::Polar);
        REQUIRE(g.rad1 == 1.0);
        REQUIRE(g.rad2 == 2.0);
        REQUIRE(g.c == 0.0);
    }
    SECTION("elliptic case, closed forms") {
        // high-precision reference values for (ell=1, a1=0.6, a2=2)
        auto g = build_geometry({1.0, 0.6, 2.0});
        REQUIRE(g.branch == Branch::Elliptic);
        REQUIRE(g.c == Approx(0.8).epsilon(1e-15));
        REQUIRE(g.params.b2() == Approx(2.15406592285380161).epsilon(1e-15));
        REQUIRE(g.rad1 == Approx(0.69314718055994531).epsilon(1e-15));
        REQUIRE(g.rad2 == Approx(1.64723114637109571).epsilon(1e-15));
        REQUIRE(g.rad1 < g.rad2);
    }
    SECTION("near-circular threshold uses polar branch") {
        auto g = build_geometry({1.0, 1.0 - 1e-8, 2.0});
        REQUIRE(g.branch == Branch::Polar);
    }
    SECTION("invalid parameters are rejected") {
        REQUIRE_THROWS_AS(build_geometry({1.0, 0.0, 2.0}), std::invalid_argument);
        REQUIRE_THROWS_AS(build_geometry({1.0, 1.5, 2.0}), std::invalid_argument);
        REQUIRE_THROWS_AS(build_geometry({1.0, 0.5, 1.0}), std::invalid_argument);
        REQUIRE_THROWS_AS(build_geometry({0.0, 0.5, 2.0}), std::invalid_argument);
        REQUIRE_THROWS_AS(build_geometry({-1.0, 0.5, 2.0}), std::invalid_argument);
    }
}

TEST_CASE("radial_grid endpoints and interior nodes") {
    SECTION("polar interior nodes, n_rad = 2") {
        auto g = build_geometry({1.0, 1.0, 2.0});
        auto r = radial_grid(g, 2);
        REQUIRE(r.size() == 4);
        REQUIRE(r.front() == 1.0);
        REQUIRE(r.back() == 2.0);
        REQUIRE(r[1] == Approx(1.25).epsilon(1e-14));
        REQUIRE(r[2] == Approx(1.75).epsilon(1e-14));
    }
    SECTION("elliptic endpoints are the boundary coordinates") {
        auto g = build_geometry({1.0, 0.6, 2.0});
        auto mu = radial_grid(g, 7);
        REQUIRE(mu.front() == g.rad1);
        REQUIRE(mu.back() == g.rad2);
    }
    SECTION("strictly monotone") {
        for (double a1 : {0.3, 0.7, 1.0}) {
            auto g = build_geometry({1.0, a1, 5.0});
            auto r = radial_grid(g, 16);
            for (std::size_t i = 1; i < r.size(); ++i) REQUIRE(r[i] > r[i - 1]);
        }
    }
    SECTION("rejects n_rad < 2") {
        auto g = build_geometry({1.0, 1.0, 2.0});
        REQUIRE_THROWS_AS(radial_grid(g, 1), std::invalid_argument);
    }
}

TEST_CASE("advection coefficients, polar special cases") {
    auto g = build_geometry({1.0, 1.0, 2.0});
    SECTION("radially aligned advection") {
        auto a = advection_coeffs(g, 1.5, 0.3, 0.3);
        REQUIRE(a.a_rad == Approx(1.0).epsilon(1e-14));
        REQUIRE(a.a_ang == Approx(0.0).margin(1e-14));
    }
    SECTION("tangential advection at r = 2") {
        const double theta = 0.4;
        auto a = advection_coeffs(g, 2.0, theta, theta + std::numbers::pi / 2);
        REQUIRE(a.a_rad == Approx(0.0).margin(1e-14));
        REQUIRE(a.a_ang == Approx(0.5).epsilon(1e-14));
    }
}

namespace {

double test_function(double x, double y) {
    return std::sin(1.3 * x) * std::cos(0.7 * y) + 0.25 * x * y;
}

}  // namespace

TEST_CASE("advection coefficients reproduce Cartesian directional derivatives") {
    // central differences in curvilinear coordinates vs central differences
    // along the advection direction in Cartesian coordinates
    auto geom = build_geometry({1.0, 0.6, 2.5});
    std::mt19937_64 rng(91);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    double worst_ratio = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const double mu = geom.rad1 + (geom.rad2 - geom.rad1) * (0.2 + 0.6 * unit(rng));
        const double eta = two_pi * unit(rng);
        const double w = two_pi * unit(rng);
        const auto a = advection_coeffs(geom, mu, eta, w);

        auto value = [&](double m, double e) {
            auto xy = geom.to_cartesian(m, e);
            return test_function(xy[0], xy[1]);
        };
        auto directional = [&](double h) {
            return a.a_rad * (value(mu + h, eta) - value(mu - h, eta)) / (2 * h) +
                   a.a_ang * (value(mu, eta + h) - value(mu, eta - h)) / (2 * h);
        };
        auto cartesian = [&](double h) {
            auto xy = geom.to_cartesian(mu, eta);
            return (test_function(xy[0] + h * std::cos(w), xy[1] + h * std::sin(w)) -
                    test_function(xy[0] - h * std::cos(w), xy[1] - h * std::sin(w))) /
                   (2 * h);
        };
        const double h = 1e-5;
        const double diff = std::abs(directional(h) - cartesian(h));
        const double scale = std::abs(cartesian(h)) + 1.0;
        worst_ratio = std::max(worst_ratio, diff / scale);
    }
    REQUIRE(worst_ratio < 1e-8);  // both sides are O(h^2) approximations of the same derivative
}

TEST_CASE("inflow classification") {
    auto geom = build_geometry({1.0, 1.0, 2.0});
    auto grid = make_grid(geom, 4, 8, 8);

    SECTION("polar trivial cases at theta = 0") {
        REQUIRE(inflow_mask(geom, grid, BoundarySide::Inner, 0, 0));
        REQUIRE_FALSE(inflow_mask(geom, grid, BoundarySide::Outer, 0, 0));
        // w = pi/2 exactly: tangential, classified outflow
        REQUIRE_FALSE(inflow_mask(geom, grid, BoundarySide::Inner, 0, 2));
        REQUIRE_FALSE(inflow_mask(geom, grid, BoundarySide::Outer, 0, 2));
    }
    SECTION("per-eta inflow count on a circular boundary") {
        // with n_eta = n_w = 8 every row contains two exactly tangential
        // nodes, so the strict-inequality count is n_w/2 - 1
        for (int ie = 0; ie < grid.n_eta; ++ie) {
            int count = 0;
            for (int iw = 0; iw < grid.n_w; ++iw)
                count += inflow_mask(geom, grid, BoundarySide::Inner, ie, iw);
            REQUIRE(count == grid.n_w / 2 - 1);
        }
    }
    SECTION("inner and outer masks are complementary away from tangentials") {
        auto geom_e = build_geometry({1.0, 0.5, 3.0});
        auto grid_e = make_grid(geom_e, 4, 16, 8);
        for (int ie = 0; ie < grid_e.n_eta; ++ie)
            for (int iw = 0; iw < grid_e.n_w; ++iw) {
                const double d = boundary_normal_dot_u(geom_e, grid_e, BoundarySide::Inner, ie, iw);
                if (std::abs(d) > 1e-12) {
                    REQUIRE(inflow_mask(geom_e, grid_e, BoundarySide::Inner, ie, iw) ==
                            !inflow_mask(geom_e, grid_e, BoundarySide::Outer, ie, iw));
                }
            }
    }
}

TEST_CASE("elliptic grid converges to the polar grid as a1 -> 1") {
    const double a1 = 1.0 - 1e-8, a2 = 2.0;
    DomainParams params{1.0, a1, a2};

    // force the elliptic branch; build_geometry would pick polar here
    DomainGeometry ell;
    ell.params = params;
    ell.branch = Branch::Elliptic;
    ell.c = std::sqrt(1.0 - a1 * a1);
    ell.rad1 = std::atanh(a1);
    ell.rad2 = std::atanh(a2 / params.b2());

    auto pol = build_geometry({1.0, 1.0, a2});

    const int n_rad = 16, n_eta = 8;
    auto g_e = make_grid(ell, n_rad, n_eta, 8);
    auto g_p = make_grid(pol, n_rad, n_eta, 8);

    for (int ir = 0; ir < n_rad + 2; ++ir)
        for (int ie = 0; ie < n_eta; ++ie) {
            auto pe = ell.to_cartesian(g_e.rad_nodes[ir], g_e.eta_nodes[ie]);
            auto pp = pol.to_cartesian(g_p.rad_nodes[ir], g_p.eta_nodes[ie]);
            const double dist = std::hypot(pe[0] - pp[0], pe[1] - pp[1]);
            const double scale = std::hypot(pp[0], pp[1]);
            REQUIRE(dist / scale < 1e-3);
        }
}

TEST_CASE("grid construction validates angular sizes") {
    auto geom = build_geometry({1.0, 1.0, 2.0});
    REQUIRE_THROWS_AS(make_grid(geom, 4, 12, 8), std::invalid_argument);
    REQUIRE_THROWS_AS(make_grid(geom, 4, 16, 6), std::invalid_argument);
}
