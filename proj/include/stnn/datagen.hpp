#pragma once

// Boundary-condition generators (truncated Fourier series with decaying
// coefficients, piecewise-linear products, boundary-layer and noise stress
// inputs), parameter sampling, and dataset synthesis through the direct
// solver with per-sample normalization.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "stnn/parallel.hpp"
#include "stnn/serialize.hpp"
#include "stnn/solver.hpp"
#include "stnn/training.hpp"
#include "stnn/version.hpp"

namespace stnn {

struct LambdaVolume {
    double ell_lo = 0.01, ell_hi = 100.0;
    double a1_lo = 0.2, a1_hi = 1.0;
    double a2_lo = 2.0, a2_hi = 20.0;
};

inline LambdaVolume training_volume() { return {}; }

/// Out-of-range volume used for the generalization test group.
inline LambdaVolume extrapolation_volume() { return {100.0, 200.0, 0.2, 1.0, 1.5, 50.0}; }

/// ell is sampled log-uniformly (its range spans four decades); a1 and a2
/// uniformly. The a1 upper bound is inclusive so the circular case appears.
inline DomainParams sample_lambda(std::mt19937_64& rng, const LambdaVolume& v) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    DomainParams p;
    p.ell = std::exp(std::log(v.ell_lo) + unit(rng) * (std::log(v.ell_hi) - std::log(v.ell_lo)));
    p.a1 = v.a1_hi - (v.a1_hi - v.a1_lo) * unit(rng);
    p.a2 = v.a2_lo + (v.a2_hi - v.a2_lo) * unit(rng);
    return p;
}

// ---------------------------------------------------------------------------
// function generators

struct GeneratorSpec {
    enum class Kind { PowerLaw, Exponential, PiecewiseLinear, BoundaryLayer };
    Kind kind = Kind::PowerLaw;
    double power = 0.0;  // i in q_i(n, m) = (n m)^{-i/2}
    double s11 = 0.1, s22 = 0.1, s12 = 0.1;
    int term_count = 12;
    double damping_probability = 0.3;

    std::string label() const {
        switch (kind) {
            case Kind::PowerLaw: {
                // fgen0, fgen1, ... (integer powers in practice)
                const long long i = llround(power);
                return "fgen" + std::to_string(i);
            }
            case Kind::Exponential: return "fgenexp";
            case Kind::PiecewiseLinear: return "pwl";
            case Kind::BoundaryLayer: return "blayer";
        }
        return "?";
    }
};

inline double coeff_decay_power(double i, int n, int m) {
    return std::pow(double(n) * double(m), -i / 2.0);
}

inline double coeff_decay_exp(double s11, double s22, double s12, int n, int m) {
    return std::exp(-s11 * n * n - s22 * m * m - 2.0 * s12 * n * m);
}

namespace datadetail {

// smooth periodic window that zeroes an eta-arc of the given width, with
// raised-cosine ramps on both sides
struct DampingWindow {
    double center, half_width, ramp;
    double operator()(double eta) const {
        double d = std::fmod(std::abs(eta - center), two_pi);
        d = std::min(d, two_pi - d);
        if (d <= half_width) return 0.0;
        if (d >= half_width + ramp) return 1.0;
        return 0.5 * (1.0 - std::cos(std::numbers::pi * (d - half_width) / ramp));
    }
};

inline DampingWindow draw_damping_window(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double width = std::numbers::pi / 4 + unit(rng) * (std::numbers::pi - std::numbers::pi / 4);
    const double ramp = std::min(std::numbers::pi / 4, (two_pi - width) / 4);
    return {two_pi * unit(rng), width / 2, ramp};
}

// one boundary shell of a truncated Fourier draw, masked to inflow
inline void fill_fourier_shell(const GeneratorSpec& spec, std::mt19937_64& rng,
                               const DomainGeometry& geom, const Grid& grid, BoundarySide side,
                               std::vector<double>& out) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<int> modes(2, grid.n_w);
    struct Term {
        int n, m;
        double a, b, c, d;
    };
    std::vector<Term> terms(spec.term_count);
    for (auto& t : terms) {
        t.n = modes(rng);
        t.m = modes(rng);
        const double q = spec.kind == GeneratorSpec::Kind::PowerLaw
                             ? coeff_decay_power(spec.power, t.n, t.m)
                             : coeff_decay_exp(spec.s11, spec.s22, spec.s12, t.n, t.m);
        t.a = q * u(rng);
        t.b = q * u(rng);
        t.c = q * u(rng);
        t.d = q * u(rng);
    }

    out.assign(grid.n_boundary(), 0.0);
    double lo = 0.0;
    for (int ie = 0; ie < grid.n_eta; ++ie) {
        const double eta = grid.eta_nodes[ie];
        for (int iw = 0; iw < grid.n_w; ++iw) {
            const double phi = eta - grid.w_nodes[iw];
            double s = 0.0;
            for (const auto& t : terms)
                s += (t.a * std::cos(t.n * eta) + t.b * std::sin(t.n * eta)) *
                     (t.c * std::cos(t.m * phi) + t.d * std::sin(t.m * phi));
            out[grid.boundary_index(ie, iw)] = s;
            lo = std::min(lo, s);
        }
    }
    // a0 is the smallest value making the draw non-negative on the grid
    const double half_a0 = -lo;
    const auto mask = build_inflow_mask(geom, grid, side);
    for (int i = 0; i < grid.n_boundary(); ++i)
        out[i] = mask[i] ? out[i] + half_a0 : 0.0;
}

// periodic piecewise-linear profile on [0, 2pi): random breakpoints, slopes
// drawn from U[-1,1] (the closing piece's slope is implied), shifted
// non-negative
struct PiecewiseProfile {
    std::vector<double> xs, vs;  // breakpoints and values, xs sorted

    double operator()(double x) const {
        const int k = int(xs.size());
        if (k == 1) return vs[0];
        x = std::fmod(x, two_pi);
        if (x < 0) x += two_pi;
        int seg = int(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin()) - 1;
        double x0, v0, x1, v1;
        if (seg < 0) {  // wrap-around segment before the first breakpoint
            x0 = xs.back() - two_pi;
            v0 = vs.back();
            x1 = xs.front();
            v1 = vs.front();
        } else if (seg == k - 1) {
            x0 = xs.back();
            v0 = vs.back();
            x1 = xs.front() + two_pi;
            v1 = vs.front();
        } else {
            x0 = xs[seg];
            v0 = vs[seg];
            x1 = xs[seg + 1];
            v1 = vs[seg + 1];
        }
        return v0 + (v1 - v0) * (x - x0) / (x1 - x0);
    }
};

inline PiecewiseProfile draw_piecewise_profile(std::mt19937_64& rng, int pieces) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> slope(-1.0, 1.0);
    PiecewiseProfile p;
    p.xs.resize(pieces);
    for (auto& x : p.xs) x = two_pi * unit(rng);
    std::sort(p.xs.begin(), p.xs.end());
    p.vs.resize(pieces, 0.0);
    for (int i = 1; i < pieces; ++i)
        p.vs[i] = p.vs[i - 1] + slope(rng) * (p.xs[i] - p.xs[i - 1]);
    const double lo = *std::min_element(p.vs.begin(), p.vs.end());
    if (lo < 0)
        for (auto& v : p.vs) v -= lo;
    return p;
}

}  // namespace datadetail

/// Truncated Fourier draw with decaying coefficients, independent per
/// boundary, optionally damped over a random eta-arc.
inline BoundaryData fgen_sample(const GeneratorSpec& spec, std::mt19937_64& rng,
                                const DomainGeometry& geom, const Grid& grid) {
    BoundaryData g;
    g.n_eta = grid.n_eta;
    g.n_w = grid.n_w;
    datadetail::fill_fourier_shell(spec, rng, geom, grid, BoundarySide::Inner, g.inner);
    datadetail::fill_fourier_shell(spec, rng, geom, grid, BoundarySide::Outer, g.outer);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (unit(rng) < spec.damping_probability) {
        const auto window = datadetail::draw_damping_window(rng);
        for (int ie = 0; ie < grid.n_eta; ++ie) {
            const double wgt = window(grid.eta_nodes[ie]);
            for (int iw = 0; iw < grid.n_w; ++iw) {
                g.inner[grid.boundary_index(ie, iw)] *= wgt;
                g.outer[grid.boundary_index(ie, iw)] *= wgt;
            }
        }
    }
    return g;
}

/// Product of independent periodic piecewise-linear profiles in eta and phi
/// (held-out test family).
inline BoundaryData piecewise_linear_sample(std::mt19937_64& rng, const DomainGeometry& geom,
                                            const Grid& grid, int min_pieces = 2,
                                            int max_pieces = 8) {
    std::uniform_int_distribution<int> pieces(min_pieces, max_pieces);
    const auto mask_i = build_inflow_mask(geom, grid, BoundarySide::Inner);
    const auto mask_o = build_inflow_mask(geom, grid, BoundarySide::Outer);
    BoundaryData g = BoundaryData::zeros(grid);
    for (int side = 0; side < 2; ++side) {
        const auto p_eta = datadetail::draw_piecewise_profile(rng, pieces(rng));
        const auto p_phi = datadetail::draw_piecewise_profile(rng, pieces(rng));
        auto& shell = side == 0 ? g.inner : g.outer;
        const auto& mask = side == 0 ? mask_i : mask_o;
        for (int ie = 0; ie < grid.n_eta; ++ie)
            for (int iw = 0; iw < grid.n_w; ++iw) {
                const int idx = grid.boundary_index(ie, iw);
                if (!mask[idx]) continue;
                const double phi = grid.eta_nodes[ie] - grid.w_nodes[iw];
                shell[idx] = p_eta(grid.eta_nodes[ie]) * p_phi(phi);
            }
    }
    return g;
}

/// Rotationally symmetric boundary-layer stress input, g = exp(-10 sin^2 phi).
inline BoundaryData boundary_layer_case(const DomainGeometry& geom, const Grid& grid) {
    BoundaryData g = BoundaryData::zeros(grid);
    const auto mask_i = build_inflow_mask(geom, grid, BoundarySide::Inner);
    const auto mask_o = build_inflow_mask(geom, grid, BoundarySide::Outer);
    for (int ie = 0; ie < grid.n_eta; ++ie)
        for (int iw = 0; iw < grid.n_w; ++iw) {
            const int idx = grid.boundary_index(ie, iw);
            const double s = std::sin(grid.eta_nodes[ie] - grid.w_nodes[iw]);
            const double v = std::exp(-10.0 * s * s);
            if (mask_i[idx]) g.inner[idx] = v;
            if (mask_o[idx]) g.outer[idx] = v;
        }
    return g;
}

/// Spatially uncorrelated stress input, i.i.d. U[0,1] at inflow nodes.
inline BoundaryData noise_case(std::mt19937_64& rng, const DomainGeometry& geom,
                               const Grid& grid) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    BoundaryData g = BoundaryData::zeros(grid);
    const auto mask_i = build_inflow_mask(geom, grid, BoundarySide::Inner);
    const auto mask_o = build_inflow_mask(geom, grid, BoundarySide::Outer);
    for (int i = 0; i < grid.n_boundary(); ++i) {
        if (mask_i[i]) g.inner[i] = unit(rng);
        if (mask_o[i]) g.outer[i] = unit(rng);
    }
    return g;
}

// ---------------------------------------------------------------------------
// zero-flux construction (test group 2)

struct ZeroFluxCase {
    BoundaryData g;
    Field field;
    double outer_constant = 0.0;
};

/// Builds a solution whose inner-boundary net flux vanishes by choosing the
/// outer-boundary constant via linearity: solve once with the given inner
/// data, once with unit outer data, and combine.
inline ZeroFluxCase zero_flux_case(const DomainParams& params, const BoundaryData& inner_g,
                                   const Grid& grid, const GmresOptions& opt = {}) {
    const auto geom = build_geometry(params);
    const auto op = assemble(geom, grid, params.ell);

    BoundaryData g0 = BoundaryData::zeros(grid);
    g0.inner = inner_g.inner;
    auto r0 = solve_nested(op, g0, opt);
    if (!r0.stats.converged) throw std::runtime_error("zero_flux_case: base solve diverged");
    const double phi0 = net_flux(r0.field, geom, grid, BoundarySide::Inner);

    auto g1 = BoundaryData::zeros(grid);
    for (int i = 0; i < grid.n_boundary(); ++i)
        if (op.mask_outer[i]) g1.outer[i] = 1.0;
    auto r1 = solve_nested(op, g1, opt);
    if (!r1.stats.converged) throw std::runtime_error("zero_flux_case: unit-outer solve diverged");
    const double phi1 = net_flux(r1.field, geom, grid, BoundarySide::Inner);

    const double scale = gross_flux(r1.field, geom, grid, BoundarySide::Inner);
    if (std::abs(phi1) < 1e-12 * std::max(scale, 1e-300))
        throw std::runtime_error("zero_flux_case: degenerate geometry, outer data has no leverage");

    ZeroFluxCase out;
    out.outer_constant = phi0 == 0.0 ? 0.0 : -phi0 / phi1;
    out.g = g0;
    for (int i = 0; i < grid.n_boundary(); ++i)
        if (op.mask_outer[i]) out.g.outer[i] = out.outer_constant;
    out.field = r0.field;
    for (std::size_t i = 0; i < out.field.values.size(); ++i)
        out.field.values[i] += out.outer_constant * r1.field.values[i];
    return out;
}

// ---------------------------------------------------------------------------
// dataset synthesis and the on-disk format

struct DatasetSpec {
    int count = 0;
    int n_rad = 64, n_eta = 32, n_w = 16;
    LambdaVolume volume;
    std::vector<GeneratorSpec> mix;  // cycled per sample for exact equal shares
    GmresOptions solver;
    std::uint64_t seed = 0;
    int workers = 1;
};

/// Equal shares of fgen_0, fgen_1, fgen_2, fgen_4 and fgen_exp.
inline std::vector<GeneratorSpec> default_generator_mix(double damping_probability = 0.3) {
    std::vector<GeneratorSpec> mix;
    for (double i : {0.0, 1.0, 2.0, 4.0}) {
        GeneratorSpec s;
        s.kind = GeneratorSpec::Kind::PowerLaw;
        s.power = i;
        s.damping_probability = damping_probability;
        mix.push_back(s);
    }
    GeneratorSpec e;
    e.kind = GeneratorSpec::Kind::Exponential;
    e.damping_probability = damping_probability;
    mix.push_back(e);
    return mix;
}

inline std::uint64_t per_sample_seed(std::uint64_t base, std::uint64_t id) {
    // splitmix64 scramble of (base, id)
    std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (id + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

struct SampleMeta {
    int id = 0;
    DomainParams lambda;
    double norm = 1.0;
    std::string generator;
    std::uint64_t g_offset = 0, rho_offset = 0;
    std::uint32_t crc_g = 0, crc_rho = 0;
};

struct DatasetSummary {
    int written = 0;
    std::vector<std::pair<int, std::string>> skipped;  // (id, reason)
};

inline constexpr int kDatasetFormatVersion = 1;

/// Draw boundary data for sample `id` of the given spec (the generator is
/// chosen by cycling through the mix).
inline BoundaryData draw_boundary(const DatasetSpec& spec, int id, const DomainGeometry& geom,
                                  const Grid& grid, std::mt19937_64& rng) {
    const auto& gen = spec.mix[id % spec.mix.size()];
    switch (gen.kind) {
        case GeneratorSpec::Kind::PowerLaw:
        case GeneratorSpec::Kind::Exponential: return fgen_sample(gen, rng, geom, grid);
        case GeneratorSpec::Kind::PiecewiseLinear: return piecewise_linear_sample(rng, geom, grid);
        case GeneratorSpec::Kind::BoundaryLayer: return boundary_layer_case(geom, grid);
    }
    throw std::logic_error("draw_boundary: unreachable");
}

/// Generate `spec.count` labeled samples into `dir` (manifest.json +
/// samples.bin). Sample i is fully determined by (seed, i) regardless of the
/// worker count; solves that fail to converge are recorded and skipped.
inline DatasetSummary make_dataset(const DatasetSpec& spec, const std::string& dir) {
    if (spec.count <= 0) throw std::invalid_argument("make_dataset: count must be positive");
    if (spec.mix.empty()) throw std::invalid_argument("make_dataset: empty generator mix");
    std::filesystem::create_directories(dir);

    struct Slot {
        bool ok = false;
        std::string reason;
        DomainParams lambda;
        std::string generator;
        double norm = 1.0;
        std::vector<double> g;    // stacked, normalized
        std::vector<double> rho;  // normalized
    };
    std::vector<Slot> slots(spec.count);

    parallel_chunks(spec.count, spec.workers, [&](int, int begin, int end) {
        for (int id = begin; id < end; ++id) {
            Slot& slot = slots[id];
            std::mt19937_64 rng(per_sample_seed(spec.seed, std::uint64_t(id)));
            slot.lambda = sample_lambda(rng, spec.volume);
            slot.generator = spec.mix[id % spec.mix.size()].label();
            try {
                const auto geom = build_geometry(slot.lambda);
                const auto grid = make_grid(geom, spec.n_rad, spec.n_eta, spec.n_w);
                const auto g = draw_boundary(spec, id, geom, grid, rng);
                const auto op = assemble(geom, grid, slot.lambda.ell);
                auto res = solve_nested(op, g, spec.solver);
                if (!res.stats.converged) {
                    slot.reason = "gmres did not converge (residual " +
                                  std::to_string(res.stats.residual) + ")";
                    continue;
                }
                auto rho = density(res.field, grid);
                double norm = 0.0;
                for (double v : rho.values) norm += std::abs(v);
                norm /= double(rho.values.size());
                if (!(norm > 1e-300)) {
                    slot.reason = "degenerate sample, |rho| ~ 0";
                    continue;
                }
                slot.norm = norm;
                slot.g = g.stacked();
                for (auto& v : slot.g) v /= norm;
                slot.rho = std::move(rho.values);
                for (auto& v : slot.rho) v /= norm;
                slot.ok = true;
            } catch (const std::exception& e) {
                slot.reason = e.what();
            }
        }
    });

    // serialize in id order
    const auto bin_path = (std::filesystem::path(dir) / "samples.bin").string();
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw std::runtime_error("make_dataset: cannot open " + bin_path);

    DatasetSummary summary;
    nlohmann::json msamples = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (int id = 0; id < spec.count; ++id) {
        auto& slot = slots[id];
        if (!slot.ok) {
            summary.skipped.emplace_back(id, slot.reason);
            continue;
        }
        SampleMeta meta;
        meta.id = id;
        meta.lambda = slot.lambda;
        meta.norm = slot.norm;
        meta.generator = slot.generator;
        meta.g_offset = offset;
        meta.crc_g = crc32(slot.g);
        bin.write(reinterpret_cast<const char*>(slot.g.data()), slot.g.size() * sizeof(double));
        offset += slot.g.size() * sizeof(double);
        meta.rho_offset = offset;
        meta.crc_rho = crc32(slot.rho);
        bin.write(reinterpret_cast<const char*>(slot.rho.data()),
                  slot.rho.size() * sizeof(double));
        offset += slot.rho.size() * sizeof(double);

        msamples.push_back({{"id", meta.id},
                            {"lambda", {meta.lambda.ell, meta.lambda.a1, meta.lambda.a2}},
                            {"norm", meta.norm},
                            {"generator", meta.generator},
                            {"g_offset", meta.g_offset},
                            {"rho_offset", meta.rho_offset},
                            {"crc_g", meta.crc_g},
                            {"crc_rho", meta.crc_rho}});
        ++summary.written;
        slot.g.clear();
        slot.g.shrink_to_fit();
        slot.rho.clear();
        slot.rho.shrink_to_fit();
    }
    if (!bin) throw std::runtime_error("make_dataset: write failed for " + bin_path);
    bin.close();

    nlohmann::json manifest;
    manifest["format_version"] = kDatasetFormatVersion;
    manifest["code_version"] = kVersion;
    manifest["seed"] = spec.seed;
    manifest["grid"] = {{"n_rad", spec.n_rad}, {"n_eta", spec.n_eta}, {"n_w", spec.n_w}};
    manifest["volume"] = {{"ell", {spec.volume.ell_lo, spec.volume.ell_hi}},
                          {"a1", {spec.volume.a1_lo, spec.volume.a1_hi}},
                          {"a2", {spec.volume.a2_lo, spec.volume.a2_hi}}};
    {
        nlohmann::json mix = nlohmann::json::array();
        for (const auto& g : spec.mix) mix.push_back(g.label());
        manifest["generators"] = mix;
    }
    manifest["solver"] = {{"tol", spec.solver.tol},
                          {"restart", spec.solver.restart},
                          {"max_iter", spec.solver.max_iter}};
    {
        nlohmann::json skipped = nlohmann::json::array();
        for (const auto& [id, reason] : summary.skipped)
            skipped.push_back({{"id", id}, {"reason", reason}});
        manifest["skipped"] = skipped;
    }
    manifest["samples"] = std::move(msamples);

    std::ofstream mf(std::filesystem::path(dir) / "manifest.json");
    mf << manifest.dump(2) << '\n';
    if (!mf) throw std::runtime_error("make_dataset: manifest write failed");
    return summary;
}

struct Dataset {
    nlohmann::json manifest;
    int n_rad = 0, n_eta = 0, n_w = 0;
    std::vector<Sample> samples;
};

inline Dataset load_dataset(const std::string& dir) {
    Dataset ds;
    std::ifstream mf(std::filesystem::path(dir) / "manifest.json");
    if (!mf) throw std::runtime_error("load_dataset: missing manifest in " + dir);
    mf >> ds.manifest;
    if (ds.manifest.at("format_version").get<int>() != kDatasetFormatVersion)
        throw std::runtime_error("load_dataset: unsupported dataset format version");
    ds.n_rad = ds.manifest.at("grid").at("n_rad").get<int>();
    ds.n_eta = ds.manifest.at("grid").at("n_eta").get<int>();
    ds.n_w = ds.manifest.at("grid").at("n_w").get<int>();

    const auto bin_path = (std::filesystem::path(dir) / "samples.bin").string();
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw std::runtime_error("load_dataset: missing samples.bin in " + dir);

    const int nb = ds.n_eta * ds.n_w;
    const int n_rho = ds.n_rad * ds.n_eta;
    for (const auto& meta : ds.manifest.at("samples")) {
        Sample s;
        const auto& lam = meta.at("lambda");
        s.lambda = {lam[0].get<double>(), lam[1].get<double>(), lam[2].get<double>()};
        s.norm = meta.at("norm").get<double>();
        std::vector<double> g(2 * nb);
        bin.seekg(std::int64_t(meta.at("g_offset").get<std::uint64_t>()));
        bin.read(reinterpret_cast<char*>(g.data()), g.size() * sizeof(double));
        s.rho.n_rad = ds.n_rad;
        s.rho.n_eta = ds.n_eta;
        s.rho.values.resize(n_rho);
        bin.seekg(std::int64_t(meta.at("rho_offset").get<std::uint64_t>()));
        bin.read(reinterpret_cast<char*>(s.rho.values.data()), n_rho * sizeof(double));
        if (!bin) throw std::runtime_error("load_dataset: truncated samples.bin");
        if (crc32(g) != meta.at("crc_g").get<std::uint32_t>() ||
            crc32(s.rho.values) != meta.at("crc_rho").get<std::uint32_t>())
            throw std::runtime_error("load_dataset: checksum mismatch for sample " +
                                     std::to_string(meta.at("id").get<int>()));
        s.g.n_eta = ds.n_eta;
        s.g.n_w = ds.n_w;
        s.g.inner.assign(g.begin(), g.begin() + nb);
        s.g.outer.assign(g.begin() + nb, g.end());
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

// raw little-endian boundary file: 2 * n_eta * n_w doubles, inner shell
// first, eta-major
inline void write_boundary_bin(const std::string& path, const BoundaryData& g) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_boundary_bin: cannot open " + path);
    const auto v = g.stacked();
    out.write(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
}

inline BoundaryData read_boundary_bin(const std::string& path, const Grid& grid) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_boundary_bin: cannot open " + path);
    const int nb = grid.n_boundary();
    std::vector<double> v(2 * nb);
    in.read(reinterpret_cast<char*>(v.data()), v.size() * sizeof(double));
    if (!in || in.gcount() != std::streamsize(v.size() * sizeof(double)))
        throw std::runtime_error("read_boundary_bin: file size does not match the grid");
    BoundaryData g;
    g.n_eta = grid.n_eta;
    g.n_w = grid.n_w;
    g.inner.assign(v.begin(), v.begin() + nb);
    g.outer.assign(v.begin() + nb, v.end());
    return g;
}

}  // namespace stnn
