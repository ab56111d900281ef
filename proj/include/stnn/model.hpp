#pragma once

// The stacked tensorial network: K tensor networks (preprocessing
// contraction + tensor-train layer), a parameter-embedding MLP with softmax
// gating, and the stacking sum. Linear in the boundary data by construction;
// the parameters enter only through the gate weights.

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "stnn/geometry.hpp"
#include "stnn/serialize.hpp"
#include "stnn/solver.hpp"
#include "stnn/ttcore.hpp"
#include "stnn/version.hpp"

namespace stnn {

/// Index maps realizing the (eta, w) -> (eta, phi) permutation with
/// inflow masking: entry (i, j) selects g(eta_i, w = eta_i - phi_j) when that
/// w is an on-grid inflow node, else -1 (contributes exactly 0).
struct PermutationMaps {
    int n_eta = 0;
    std::vector<std::int32_t> inner;  // n_eta x n_eta, row-major
    std::vector<std::int32_t> outer;
};

inline PermutationMaps build_permutation(const Grid& grid, const DomainGeometry& geom) {
    if (grid.n_eta % grid.n_w != 0)
        throw std::invalid_argument("build_permutation: n_eta must be a multiple of n_w");
    const int ratio = grid.n_eta / grid.n_w;
    PermutationMaps maps;
    maps.n_eta = grid.n_eta;
    maps.inner.assign(std::size_t(grid.n_eta) * grid.n_eta, -1);
    maps.outer.assign(std::size_t(grid.n_eta) * grid.n_eta, -1);
    for (int i = 0; i < grid.n_eta; ++i)
        for (int j = 0; j < grid.n_eta; ++j) {
            const int diff = ((i - j) % grid.n_eta + grid.n_eta) % grid.n_eta;
            if (diff % ratio != 0) continue;  // w off-grid
            const int iw = diff / ratio;
            const int bidx = grid.boundary_index(i, iw);
            if (inflow_mask(geom, grid, BoundarySide::Inner, i, iw))
                maps.inner[std::size_t(i) * grid.n_eta + j] = bidx;
            if (inflow_mask(geom, grid, BoundarySide::Outer, i, iw))
                maps.outer[std::size_t(i) * grid.n_eta + j] = bidx;
        }
    return maps;
}

/// Trainable contraction of the permuted boundary data against W weight-
/// vector pairs h+ (inner) and h- (outer); output length W * n_eta.
struct PreprocessLayer {
    int n_weight_pairs = 0;  // W
    int n_eta = 0;
    std::vector<std::vector<double>> h_plus;   // W vectors of length n_eta
    std::vector<std::vector<double>> h_minus;
};

inline void preprocess(const PreprocessLayer& layer, const PermutationMaps& maps,
                       const BoundaryData& g, double* out) {
    const int ne = layer.n_eta;
    for (int wv = 0; wv < layer.n_weight_pairs; ++wv) {
        const double* hp = layer.h_plus[wv].data();
        const double* hm = layer.h_minus[wv].data();
        for (int i = 0; i < ne; ++i) {
            const std::int32_t* rin = maps.inner.data() + std::size_t(i) * ne;
            const std::int32_t* rout = maps.outer.data() + std::size_t(i) * ne;
            double acc = 0.0;
            for (int j = 0; j < ne; ++j) {
                if (rin[j] >= 0) acc += hp[j] * g.inner[rin[j]];
                if (rout[j] >= 0) acc += hm[j] * g.outer[rout[j]];
            }
            out[wv * ne + i] = acc;
        }
    }
}

inline std::vector<double> preprocess(const PreprocessLayer& layer, const PermutationMaps& maps,
                                      const BoundaryData& g) {
    if (g.n_eta != layer.n_eta) throw std::invalid_argument("preprocess: grid mismatch");
    std::vector<double> out(std::size_t(layer.n_weight_pairs) * layer.n_eta);
    preprocess(layer, maps, g, out.data());
    return out;
}

/// Dense layer stack mapping the normalized parameter triple to K softmax
/// gate weights: 3 -> 30, then (depth - 1) ReLU layers at width 30, then a
/// K-logit layer.
struct EmbeddingHead {
    int depth = 0;      // number of 30-wide trainable layers (incl. the embedding)
    int n_embed = 30;
    int n_out = 0;      // K
    std::vector<std::vector<double>> weights;  // row-major [out x in]
    std::vector<std::vector<double>> biases;
    std::array<std::array<double, 2>, 3> lambda_bounds{};  // per-component (min, max)

    int n_layers() const { return int(weights.size()); }
};

struct HeadActivations {
    std::vector<std::vector<double>> pre;   // pre-activation per layer
    std::vector<std::vector<double>> post;  // post-activation per layer (input at index 0)
    std::vector<double> gates;
};

inline std::vector<double> normalized_lambda(const EmbeddingHead& head, const DomainParams& p) {
    const std::array<double, 3> raw{p.ell, p.a1, p.a2};
    std::vector<double> z(3);
    for (int i = 0; i < 3; ++i) {
        const auto [lo, hi] = head.lambda_bounds[i];
        z[i] = (raw[i] - lo) / (hi - lo);  // not clipped: out-of-range inputs extrapolate
    }
    return z;
}

inline void head_forward(const EmbeddingHead& head, const DomainParams& lambda,
                         HeadActivations& acts) {
    const int n_layers = head.n_layers();
    acts.pre.assign(n_layers, {});
    acts.post.assign(n_layers + 1, {});
    acts.post[0] = normalized_lambda(head, lambda);
    for (int layer = 0; layer < n_layers; ++layer) {
        const auto& w = head.weights[layer];
        const auto& b = head.biases[layer];
        const auto& in = acts.post[layer];
        const int n_in = int(in.size());
        const int n_out = int(b.size());
        auto& pre = acts.pre[layer];
        pre.resize(n_out);
        for (int o = 0; o < n_out; ++o) {
            double s = b[o];
            const double* row = w.data() + std::size_t(o) * n_in;
            for (int i = 0; i < n_in; ++i) s += row[i] * in[i];
            pre[o] = s;
        }
        auto& post = acts.post[layer + 1];
        post = pre;
        const bool relu = layer > 0 && layer < n_layers - 1;  // hidden layers only
        if (relu)
            for (auto& v : post) v = std::max(v, 0.0);
    }
    // softmax over the final logits
    const auto& logits = acts.post[n_layers];
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    acts.gates.resize(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        acts.gates[i] = std::exp(logits[i] - mx);
        sum += acts.gates[i];
    }
    for (auto& v : acts.gates) v /= sum;
}

inline std::vector<double> gate_weights(const EmbeddingHead& head, const DomainParams& lambda) {
    HeadActivations acts;
    head_forward(head, lambda, acts);
    return acts.gates;
}

/// Named configuration of one model shape.
struct TrialConfig {
    std::string name;
    int n_networks = 1;   // K
    int head_depth = 10;  // d, 30-wide layers in the embedding head
    int n_weight_pairs = 1;  // W; 0 disables the preprocessing layer
    int tt_d = 7;
    std::vector<int> ranks;
    int n_rad = 256, n_eta = 64, n_w = 32;
};

struct TensorNetwork {
    PreprocessLayer pre;  // unused when config.n_weight_pairs == 0
    TtCores tt;
};

struct StnnModel {
    TrialConfig config;
    TtSpec ttspec;
    PermutationMaps perm;
    std::vector<TensorNetwork> networks;
    EmbeddingHead head;
    std::uint64_t seed = 0;

    bool uses_preprocess() const { return config.n_weight_pairs > 0; }
    int input_len() const {
        return uses_preprocess() ? config.n_weight_pairs * config.n_eta
                                 : 2 * config.n_eta * config.n_w;
    }
    int output_len() const { return config.n_rad * config.n_eta; }

    std::int64_t parameter_count() const {
        std::int64_t n = 0;
        for (const auto& net : networks) {
            if (uses_preprocess())
                n += 2 * std::int64_t(config.n_weight_pairs) * config.n_eta;
            n += net.tt.spec.parameter_count();
        }
        for (const auto& w : head.weights) n += std::int64_t(w.size());
        for (const auto& b : head.biases) n += std::int64_t(b.size());
        return n;
    }
};

/// Training-volume bounds used to normalize the embedding input.
inline std::array<std::array<double, 2>, 3> default_lambda_bounds() {
    return {{{0.01, 100.0}, {0.2, 1.0}, {2.0, 20.0}}};
}

inline StnnModel init_model(const TrialConfig& config, std::uint64_t seed) {
    StnnModel m;
    m.config = config;
    m.seed = seed;

    // the permutation is built against the circular reference geometry; the
    // per-sample inflow masks are honored by the outflow-zero data convention
    auto geom = build_geometry({1.0, 1.0, 2.0});
    auto grid = make_grid(geom, config.n_rad, config.n_eta, config.n_w);
    m.perm = build_permutation(grid, geom);

    const std::int64_t in_len =
        config.n_weight_pairs > 0 ? std::int64_t(config.n_weight_pairs) * config.n_eta
                                  : std::int64_t(2) * config.n_eta * config.n_w;
    m.ttspec = plan_modes(in_len, std::int64_t(config.n_rad) * config.n_eta, config.tt_d);
    if (int(config.ranks.size()) != config.tt_d + 1)
        throw std::invalid_argument("init_model: rank list must have tt_d + 1 entries");
    m.ttspec.ranks = config.ranks;
    m.ttspec.validate();

    std::mt19937_64 rng(seed);
    auto glorot_uniform = [&rng](std::vector<double>& v, int fan_in, int fan_out) {
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (auto& x : v) x = dist(rng);
    };

    m.networks.resize(config.n_networks);
    for (auto& net : m.networks) {
        if (config.n_weight_pairs > 0) {
            net.pre.n_weight_pairs = config.n_weight_pairs;
            net.pre.n_eta = config.n_eta;
            net.pre.h_plus.assign(config.n_weight_pairs, std::vector<double>(config.n_eta));
            net.pre.h_minus.assign(config.n_weight_pairs, std::vector<double>(config.n_eta));
            for (auto& h : net.pre.h_plus) glorot_uniform(h, config.n_eta, 1);
            for (auto& h : net.pre.h_minus) glorot_uniform(h, config.n_eta, 1);
        }
        net.tt = init_cores(m.ttspec, rng);
    }

    auto& head = m.head;
    head.depth = config.head_depth;
    head.n_out = config.n_networks;
    head.lambda_bounds = default_lambda_bounds();
    std::vector<std::pair<int, int>> shapes;  // (out, in)
    shapes.emplace_back(head.n_embed, 3);
    for (int i = 1; i < config.head_depth; ++i) shapes.emplace_back(head.n_embed, head.n_embed);
    shapes.emplace_back(config.n_networks, head.n_embed);
    for (auto [out, in] : shapes) {
        head.weights.emplace_back(std::size_t(out) * in);
        glorot_uniform(head.weights.back(), in, out);
        head.biases.emplace_back(out, 0.0);
    }
    return m;
}

/// rho = sum_k gate_k(lambda) * TT_k(preprocess_k(g)), reshaped n_rad x n_eta.
inline Density stnn_forward(const StnnModel& m, const DomainParams& lambda,
                            const BoundaryData& g) {
    if (g.n_eta != m.config.n_eta || g.n_w != m.config.n_w)
        throw std::invalid_argument("stnn_forward: boundary data shape mismatch");
    const auto gw = gate_weights(m.head, lambda);
    Density rho;
    rho.n_rad = m.config.n_rad;
    rho.n_eta = m.config.n_eta;
    rho.values.assign(std::size_t(m.output_len()), 0.0);

    std::vector<double> input;
    std::vector<double> y(m.output_len());
    TtWorkspace ws;
    for (int k = 0; k < m.config.n_networks; ++k) {
        const auto& net = m.networks[k];
        if (m.uses_preprocess()) {
            input.resize(std::size_t(m.input_len()));
            preprocess(net.pre, m.perm, g, input.data());
        } else {
            input = g.stacked();
        }
        tt_forward(net.tt, input.data(), y.data(), ws);
        const double wk = gw[k];
        for (int i = 0; i < m.output_len(); ++i) rho.values[i] += wk * y[i];
    }
    return rho;
}

// ---------------------------------------------------------------------------
// batched inference: the batch index is fastest in every packed array, so
// the contraction kernels stream contiguous memory across samples

/// Pack boundary shells as [n_boundary x batch] (batch fastest); the stacked
/// layout is the inner block followed by the outer block.
inline std::vector<double> pack_boundary_batch(std::span<const BoundaryData> gs) {
    const int batch = int(gs.size());
    const int nb = int(gs[0].inner.size());
    std::vector<double> packed(std::size_t(2 * nb) * batch);
    for (int b = 0; b < batch; ++b)
        for (int i = 0; i < nb; ++i) {
            packed[std::size_t(i) * batch + b] = gs[b].inner[i];
            packed[std::size_t(nb + i) * batch + b] = gs[b].outer[i];
        }
    return packed;
}

/// Batched preprocessing contraction; `packed` as from pack_boundary_batch
/// with shells of `n_boundary` nodes, out is [W * n_eta x batch] (batch
/// fastest).
inline void preprocess_batch(const PreprocessLayer& layer, const PermutationMaps& maps,
                             const double* packed, int n_boundary, int batch, double* out) {
    const int ne = layer.n_eta;
    for (int wv = 0; wv < layer.n_weight_pairs; ++wv) {
        const double* hp = layer.h_plus[wv].data();
        const double* hm = layer.h_minus[wv].data();
        for (int i = 0; i < ne; ++i) {
            double* dst = out + (std::size_t(wv) * ne + i) * batch;
            std::fill(dst, dst + batch, 0.0);
            const std::int32_t* rin = maps.inner.data() + std::size_t(i) * ne;
            const std::int32_t* rout = maps.outer.data() + std::size_t(i) * ne;
            for (int j = 0; j < ne; ++j) {
                if (rin[j] >= 0) {
                    const double* src = packed + std::size_t(rin[j]) * batch;
                    const double h = hp[j];
                    for (int b = 0; b < batch; ++b) dst[b] += h * src[b];
                }
                if (rout[j] >= 0) {
                    const double* src = packed + std::size_t(n_boundary + rout[j]) * batch;
                    const double h = hm[j];
                    for (int b = 0; b < batch; ++b) dst[b] += h * src[b];
                }
            }
        }
    }
}

/// Batched prediction over per-sample parameter triples and boundary data.
inline std::vector<Density> stnn_forward_batch(const StnnModel& m,
                                               std::span<const DomainParams> lambdas,
                                               std::span<const BoundaryData> gs) {
    if (lambdas.size() != gs.size())
        throw std::invalid_argument("stnn_forward_batch: length mismatch");
    const int batch = int(gs.size());
    if (batch == 0) return {};
    for (const auto& g : gs)
        if (g.n_eta != m.config.n_eta || g.n_w != m.config.n_w)
            throw std::invalid_argument("stnn_forward_batch: boundary data shape mismatch");
    const int n_out = m.output_len();
    const int n_in = m.input_len();

    const auto packed = pack_boundary_batch(gs);
    std::vector<std::vector<double>> gates(batch);
    for (int b = 0; b < batch; ++b) gates[b] = gate_weights(m.head, lambdas[b]);

    std::vector<double> x(std::size_t(n_in) * batch);
    std::vector<double> y(std::size_t(n_out) * batch);
    std::vector<double> rho(std::size_t(n_out) * batch, 0.0);
    TtWorkspace ws;
    const int nb = m.config.n_eta * m.config.n_w;
    for (int k = 0; k < m.config.n_networks; ++k) {
        if (m.uses_preprocess())
            preprocess_batch(m.networks[k].pre, m.perm, packed.data(), nb, batch, x.data());
        else
            x = packed;
        tt_forward_batch(m.networks[k].tt, x.data(), batch, y.data(), ws);
        for (int i = 0; i < n_out; ++i) {
            const double* yi = y.data() + std::size_t(i) * batch;
            double* ri = rho.data() + std::size_t(i) * batch;
            for (int b = 0; b < batch; ++b) ri[b] += gates[b][k] * yi[b];
        }
    }

    std::vector<Density> out(batch);
    for (int b = 0; b < batch; ++b) {
        out[b].n_rad = m.config.n_rad;
        out[b].n_eta = m.config.n_eta;
        out[b].values.resize(n_out);
        for (int i = 0; i < n_out; ++i) out[b].values[i] = rho[std::size_t(i) * batch + b];
    }
    return out;
}

// ---------------------------------------------------------------------------
// serialization

inline constexpr char kModelMagic[4] = {'S', 'T', 'N', 'N'};
inline constexpr int kModelFormatVersion = 1;

inline void save_model(const StnnModel& m, const std::string& path) {
    nlohmann::json header;
    header["format_version"] = kModelFormatVersion;
    header["code_version"] = kVersion;
    header["seed"] = m.seed;
    header["config"] = {{"name", m.config.name},
                        {"n_networks", m.config.n_networks},
                        {"head_depth", m.config.head_depth},
                        {"n_weight_pairs", m.config.n_weight_pairs},
                        {"tt_d", m.config.tt_d},
                        {"ranks", m.config.ranks},
                        {"n_rad", m.config.n_rad},
                        {"n_eta", m.config.n_eta},
                        {"n_w", m.config.n_w}};
    header["ttspec"] = {{"out_modes", m.ttspec.out_modes}, {"in_modes", m.ttspec.in_modes}};
    header["lambda_bounds"] = {m.head.lambda_bounds[0], m.head.lambda_bounds[1],
                               m.head.lambda_bounds[2]};

    std::vector<NamedArray> arrays;
    for (int k = 0; k < m.config.n_networks; ++k) {
        const auto& net = m.networks[k];
        const std::string prefix = "net" + std::to_string(k) + "/";
        for (int wv = 0; wv < m.config.n_weight_pairs; ++wv) {
            arrays.push_back({prefix + "h_plus" + std::to_string(wv), &net.pre.h_plus[wv]});
            arrays.push_back({prefix + "h_minus" + std::to_string(wv), &net.pre.h_minus[wv]});
        }
        for (int c = 0; c < m.ttspec.d; ++c)
            arrays.push_back({prefix + "core" + std::to_string(c), &net.tt.cores[c]});
    }
    for (int l = 0; l < m.head.n_layers(); ++l) {
        arrays.push_back({"head/w" + std::to_string(l), &m.head.weights[l]});
        arrays.push_back({"head/b" + std::to_string(l), &m.head.biases[l]});
    }
    write_container(path, kModelMagic, std::move(header), arrays);
}

inline StnnModel load_model(const std::string& path) {
    auto c = read_container(path, kModelMagic);
    const int version = c.header.at("format_version").get<int>();
    if (version != kModelFormatVersion)
        throw std::runtime_error("load_model: unsupported format version " +
                                 std::to_string(version));

    TrialConfig cfg;
    const auto& j = c.header.at("config");
    cfg.name = j.at("name").get<std::string>();
    cfg.n_networks = j.at("n_networks").get<int>();
    cfg.head_depth = j.at("head_depth").get<int>();
    cfg.n_weight_pairs = j.at("n_weight_pairs").get<int>();
    cfg.tt_d = j.at("tt_d").get<int>();
    cfg.ranks = j.at("ranks").get<std::vector<int>>();
    cfg.n_rad = j.at("n_rad").get<int>();
    cfg.n_eta = j.at("n_eta").get<int>();
    cfg.n_w = j.at("n_w").get<int>();

    StnnModel m = init_model(cfg, c.header.at("seed").get<std::uint64_t>());
    for (int i = 0; i < 3; ++i) {
        m.head.lambda_bounds[i][0] = c.header.at("lambda_bounds")[i][0].get<double>();
        m.head.lambda_bounds[i][1] = c.header.at("lambda_bounds")[i][1].get<double>();
    }
    for (int k = 0; k < cfg.n_networks; ++k) {
        auto& net = m.networks[k];
        const std::string prefix = "net" + std::to_string(k) + "/";
        for (int wv = 0; wv < cfg.n_weight_pairs; ++wv) {
            net.pre.h_plus[wv] = c.array(prefix + "h_plus" + std::to_string(wv));
            net.pre.h_minus[wv] = c.array(prefix + "h_minus" + std::to_string(wv));
        }
        for (int cc = 0; cc < cfg.tt_d; ++cc)
            net.tt.cores[cc] = c.array(prefix + "core" + std::to_string(cc));
        net.tt.validate();
    }
    for (int l = 0; l < m.head.n_layers(); ++l) {
        m.head.weights[l] = c.array("head/w" + std::to_string(l));
        m.head.biases[l] = c.array("head/b" + std::to_string(l));
    }
    return m;
}

// ---------------------------------------------------------------------------
// presets

/// Model shapes from the hyperparameter trials, plus a desk-scale preset
/// sized for quick end-to-end runs on the 64x32x16 grid.
inline TrialConfig trial_preset(const std::string& name) {
    auto full = [](TrialConfig c) {
        c.n_rad = 256;
        c.n_eta = 64;
        c.n_w = 32;
        c.tt_d = 7;
        c.head_depth = 10;
        return c;
    };
    TrialConfig c;
    c.name = name;
    if (name == "trial1" || name == "trial2" || name == "trial3") {
        c.n_networks = name == "trial1" ? 10 : (name == "trial2" ? 20 : 30);
        c.n_weight_pairs = 1;
        c.ranks = {1, 7, 16, 16, 16, 16, 7, 1};
        return full(c);
    }
    if (name == "trial4" || name == "trial5" || name == "trial6") {
        c.n_networks = name == "trial4" ? 10 : (name == "trial5" ? 20 : 30);
        c.n_weight_pairs = 2;
        c.ranks = {1, 16, 16, 16, 16, 16, 7, 1};
        return full(c);
    }
    if (name == "trial7") {
        c.n_networks = 10;
        c.n_weight_pairs = 0;  // no preprocessing layer
        c.ranks = {1, 7, 16, 16, 16, 16, 7, 1};
        return full(c);
    }
    if (name == "trial5-desk") {
        c.n_networks = 4;
        c.head_depth = 4;
        c.n_weight_pairs = 2;
        c.tt_d = 6;
        c.ranks = {1, 8, 8, 8, 8, 8, 1};
        c.n_rad = 64;
        c.n_eta = 32;
        c.n_w = 16;
        return c;
    }
    throw std::invalid_argument("unknown trial preset: " + name);
}

}  // namespace stnn
