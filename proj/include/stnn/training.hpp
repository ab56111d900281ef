#pragma once

// Reverse-mode differentiation through the full prediction graph
// (preprocess -> tensor train -> gating -> stack -> MSE), Adam, plateau
// learning-rate scheduling, and the two-pass training protocol: pass 1 with
// a high-frequency penalty on the contraction weights, pass 2 without it at
// a reset learning rate.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stnn/model.hpp"
#include "stnn/parallel.hpp"

namespace stnn {

struct TrainConfig {
    int batch_size = 128;
    double lr_init = 0.005;
    double lr_second_pass = 0.002;
    int plateau_patience = 20;
    double plateau_factor = 0.5;
    int epochs_pass1 = 200;
    int epochs_pass2 = 200;
    double reg_strength = 1e-3;
    std::uint64_t seed = 0;
    int workers = 1;
};

/// One labeled example; g and rho are stored divided by `norm`, the mean
/// absolute value of the raw density.
struct Sample {
    DomainParams lambda;
    BoundaryData g;
    Density rho;
    double norm = 1.0;
};

inline double loss_mse(const Density& pred, const Density& target) {
    if (pred.values.size() != target.values.size())
        throw std::invalid_argument("loss_mse: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const double d = pred.values[i] - target.values[i];
        s += d * d;
    }
    return s / double(pred.values.size());
}

/// Mean squared periodic second difference of one weight vector.
inline double hf_penalty(const std::vector<double>& h) {
    const int n = int(h.size());
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d = h[(i + n - 1) % n] - 2.0 * h[i] + h[(i + 1) % n];
        s += d * d;
    }
    return s / double(n);
}

/// strength * sum over every h vector in the model of hf_penalty(h).
inline double hf_regularizer(const StnnModel& m, double strength) {
    if (!m.uses_preprocess() || strength == 0.0) return 0.0;
    double s = 0.0;
    for (const auto& net : m.networks) {
        for (const auto& h : net.pre.h_plus) s += hf_penalty(h);
        for (const auto& h : net.pre.h_minus) s += hf_penalty(h);
    }
    return strength * s;
}

// ---------------------------------------------------------------------------
// parameter registry: one entry per trainable array, in serialization order

struct ParamRefs {
    std::vector<std::string> names;
    std::vector<std::vector<double>*> arrays;

    int size() const { return int(arrays.size()); }
};

inline ParamRefs trainable_parameters(StnnModel& m) {
    ParamRefs p;
    for (int k = 0; k < m.config.n_networks; ++k) {
        auto& net = m.networks[k];
        const std::string prefix = "net" + std::to_string(k) + "/";
        for (int wv = 0; wv < m.config.n_weight_pairs; ++wv) {
            p.names.push_back(prefix + "h_plus" + std::to_string(wv));
            p.arrays.push_back(&net.pre.h_plus[wv]);
            p.names.push_back(prefix + "h_minus" + std::to_string(wv));
            p.arrays.push_back(&net.pre.h_minus[wv]);
        }
        for (int c = 0; c < m.ttspec.d; ++c) {
            p.names.push_back(prefix + "core" + std::to_string(c));
            p.arrays.push_back(&net.tt.cores[c]);
        }
    }
    for (int l = 0; l < m.head.n_layers(); ++l) {
        p.names.push_back("head/w" + std::to_string(l));
        p.arrays.push_back(&m.head.weights[l]);
        p.names.push_back("head/b" + std::to_string(l));
        p.arrays.push_back(&m.head.biases[l]);
    }
    return p;
}

struct GradientSet {
    std::vector<std::vector<double>> arrays;

    void zero() {
        for (auto& a : arrays) std::fill(a.begin(), a.end(), 0.0);
    }
    void add(const GradientSet& o) {
        for (std::size_t i = 0; i < arrays.size(); ++i)
            for (std::size_t j = 0; j < arrays[i].size(); ++j) arrays[i][j] += o.arrays[i][j];
    }
};

inline GradientSet make_gradient_set(const StnnModel& m) {
    GradientSet g;
    for (int k = 0; k < m.config.n_networks; ++k) {
        for (int wv = 0; wv < m.config.n_weight_pairs; ++wv) {
            g.arrays.emplace_back(m.config.n_eta, 0.0);
            g.arrays.emplace_back(m.config.n_eta, 0.0);
        }
        for (int c = 0; c < m.ttspec.d; ++c) g.arrays.emplace_back(m.ttspec.core_size(c), 0.0);
    }
    for (int l = 0; l < m.head.n_layers(); ++l) {
        g.arrays.emplace_back(m.head.weights[l].size(), 0.0);
        g.arrays.emplace_back(m.head.biases[l].size(), 0.0);
    }
    return g;
}

// array index bookkeeping within the registry
struct GradientLayout {
    int w_pairs, tt_d, n_networks, head_layers;
    int per_net() const { return 2 * w_pairs + tt_d; }
    int h_plus(int k, int wv) const { return k * per_net() + 2 * wv; }
    int h_minus(int k, int wv) const { return k * per_net() + 2 * wv + 1; }
    int core(int k, int c) const { return k * per_net() + 2 * w_pairs + c; }
    int head_w(int l) const { return n_networks * per_net() + 2 * l; }
    int head_b(int l) const { return n_networks * per_net() + 2 * l + 1; }
};

inline GradientLayout gradient_layout(const StnnModel& m) {
    return {m.config.n_weight_pairs, m.ttspec.d, m.config.n_networks, m.head.n_layers()};
}

// ---------------------------------------------------------------------------
// reverse mode through the prediction graph

/// Reverse mode through the embedding head for one sample, given the
/// gradient of the loss with respect to the gate weights.
inline void head_backward(const StnnModel& m, const HeadActivations& acts,
                          std::span<const double> dgw, GradientSet& grads,
                          const GradientLayout& layout) {
    const auto& gw = acts.gates;
    const int K = int(gw.size());
    double mix = 0.0;
    for (int k = 0; k < K; ++k) mix += gw[k] * dgw[k];
    const int n_layers = m.head.n_layers();
    std::vector<std::vector<double>> dpost(n_layers + 1);
    dpost[n_layers].resize(K);
    for (int k = 0; k < K; ++k) dpost[n_layers][k] = gw[k] * (dgw[k] - mix);

    for (int layer = n_layers - 1; layer >= 0; --layer) {
        const auto& w = m.head.weights[layer];
        const auto& in = acts.post[layer];
        const int ni = int(in.size());
        const int no = int(m.head.biases[layer].size());
        auto& dpre = dpost[layer + 1];
        const bool relu = layer > 0 && layer < n_layers - 1;
        if (relu)
            for (int o = 0; o < no; ++o)
                if (acts.pre[layer][o] <= 0.0) dpre[o] = 0.0;

        auto& wg = grads.arrays[layout.head_w(layer)];
        auto& bg = grads.arrays[layout.head_b(layer)];
        auto& din = dpost[layer];
        din.assign(ni, 0.0);
        for (int o = 0; o < no; ++o) {
            const double d = dpre[o];
            bg[o] += d;
            const double* row = w.data() + std::size_t(o) * ni;
            double* wrow = wg.data() + std::size_t(o) * ni;
            for (int i = 0; i < ni; ++i) {
                wrow[i] += d * in[i];
                din[i] += d * row[i];
            }
        }
    }
}

/// Batched reverse mode over a contiguous chunk of samples: forward through
/// preprocess -> tensor trains -> gating -> stack, then gradients of
/// sum(mse_sample) / batch_scale accumulated into grads. Returns the summed
/// (unscaled) MSE of the chunk.
inline double backward_chunk(const StnnModel& m, std::span<const Sample> chunk,
                             double batch_scale, GradientSet& grads) {
    const auto layout = gradient_layout(m);
    const int K = m.config.n_networks;
    const int n_out = m.output_len();
    const int n_in = m.input_len();
    const int batch = int(chunk.size());
    const int nb = m.config.n_eta * m.config.n_w;

    std::vector<BoundaryData> gs;
    gs.reserve(batch);
    for (const auto& s : chunk) gs.push_back(s.g);
    const auto packed = pack_boundary_batch(gs);

    std::vector<HeadActivations> acts(batch);
    for (int b = 0; b < batch; ++b) head_forward(m.head, chunk[b].lambda, acts[b]);

    // forward all networks, keeping intermediates
    std::vector<std::vector<double>> xs(K), ys(K);
    std::vector<TtWorkspace> ws(K);
    std::vector<double> rho(std::size_t(n_out) * batch, 0.0);
    for (int k = 0; k < K; ++k) {
        xs[k].resize(std::size_t(n_in) * batch);
        if (m.uses_preprocess())
            preprocess_batch(m.networks[k].pre, m.perm, packed.data(), nb, batch, xs[k].data());
        else
            xs[k] = packed;
        ys[k].resize(std::size_t(n_out) * batch);
        tt_forward_batch(m.networks[k].tt, xs[k].data(), batch, ys[k].data(), ws[k]);
        for (int i = 0; i < n_out; ++i) {
            const double* yi = ys[k].data() + std::size_t(i) * batch;
            double* ri = rho.data() + std::size_t(i) * batch;
            for (int b = 0; b < batch; ++b) ri[b] += acts[b].gates[k] * yi[b];
        }
    }

    // loss and its gradient at the stack output
    std::vector<double> drho(std::size_t(n_out) * batch);
    std::vector<double> mse(batch, 0.0);
    const double dscale = 2.0 / (double(n_out) * batch_scale);
    for (int i = 0; i < n_out; ++i)
        for (int b = 0; b < batch; ++b) {
            const double d = rho[std::size_t(i) * batch + b] - chunk[b].rho.values[i];
            mse[b] += d * d;
            drho[std::size_t(i) * batch + b] = dscale * d;
        }

    std::vector<double> dy(std::size_t(n_out) * batch);
    std::vector<double> dx(std::size_t(n_in) * batch);
    std::vector<std::vector<double>> dgw(batch, std::vector<double>(K, 0.0));
    for (int k = 0; k < K; ++k) {
        for (int i = 0; i < n_out; ++i) {
            const double* yi = ys[k].data() + std::size_t(i) * batch;
            const double* di = drho.data() + std::size_t(i) * batch;
            double* dyi = dy.data() + std::size_t(i) * batch;
            for (int b = 0; b < batch; ++b) {
                dgw[b][k] += di[b] * yi[b];
                dyi[b] = acts[b].gates[k] * di[b];
            }
        }
        auto cores_span = std::span<std::vector<double>>(grads.arrays.data() + layout.core(k, 0),
                                                         std::size_t(m.ttspec.d));
        tt_backward_batch(m.networks[k].tt, ws[k], dy.data(), cores_span, dx.data());

        if (m.uses_preprocess()) {
            const int ne = m.config.n_eta;
            for (int wv = 0; wv < m.config.n_weight_pairs; ++wv) {
                auto& hp_grad = grads.arrays[layout.h_plus(k, wv)];
                auto& hm_grad = grads.arrays[layout.h_minus(k, wv)];
                for (int i = 0; i < ne; ++i) {
                    const double* dgi = dx.data() + (std::size_t(wv) * ne + i) * batch;
                    const std::int32_t* rin = m.perm.inner.data() + std::size_t(i) * ne;
                    const std::int32_t* rout = m.perm.outer.data() + std::size_t(i) * ne;
                    for (int j = 0; j < ne; ++j) {
                        if (rin[j] >= 0) {
                            const double* src = packed.data() + std::size_t(rin[j]) * batch;
                            double acc = 0.0;
                            for (int b = 0; b < batch; ++b) acc += dgi[b] * src[b];
                            hp_grad[j] += acc;
                        }
                        if (rout[j] >= 0) {
                            const double* src = packed.data() + std::size_t(nb + rout[j]) * batch;
                            double acc = 0.0;
                            for (int b = 0; b < batch; ++b) acc += dgi[b] * src[b];
                            hm_grad[j] += acc;
                        }
                    }
                }
            }
        }
    }

    double chunk_mse = 0.0;
    for (int b = 0; b < batch; ++b) {
        head_backward(m, acts[b], dgw[b], grads, layout);
        chunk_mse += mse[b] / double(n_out);
    }
    return chunk_mse;
}

/// Adds the gradient of hf_regularizer to the h-vector slots.
inline void add_regularizer_gradient(const StnnModel& m, double strength, GradientSet& grads) {
    if (!m.uses_preprocess() || strength == 0.0) return;
    const auto layout = gradient_layout(m);
    auto add_for = [&](const std::vector<double>& h, std::vector<double>& g) {
        const int n = int(h.size());
        std::vector<double> d2(n);
        for (int i = 0; i < n; ++i)
            d2[i] = h[(i + n - 1) % n] - 2.0 * h[i] + h[(i + 1) % n];
        for (int i = 0; i < n; ++i) {
            const double dd = d2[(i + n - 1) % n] - 2.0 * d2[i] + d2[(i + 1) % n];
            g[i] += strength * 2.0 / double(n) * dd;
        }
    };
    for (int k = 0; k < m.config.n_networks; ++k)
        for (int wv = 0; wv < m.config.n_weight_pairs; ++wv) {
            add_for(m.networks[k].pre.h_plus[wv], grads.arrays[layout.h_plus(k, wv)]);
            add_for(m.networks[k].pre.h_minus[wv], grads.arrays[layout.h_minus(k, wv)]);
        }
}

struct BatchLoss {
    double mse = 0.0;  // mean over the batch
    double reg = 0.0;
};

/// Gradients of mean-batch MSE plus the active regularizer, accumulated into
/// grads (caller zeroes). Sample work is distributed over workers with a
/// deterministic chunk-ordered reduction.
inline BatchLoss backward(const StnnModel& m, std::span<const Sample> batch, double reg_strength,
                          GradientSet& grads, int workers = 1) {
    if (batch.empty()) throw std::invalid_argument("backward: empty batch");
    const int n = int(batch.size());
    const auto chunks = partition_chunks(n, workers);

    std::vector<GradientSet> partial(chunks.size());
    std::vector<double> partial_mse(chunks.size(), 0.0);
    for (auto& p : partial) p = make_gradient_set(m);

    parallel_chunks(n, workers, [&](int c, int begin, int end) {
        partial_mse[c] = backward_chunk(m, batch.subspan(begin, end - begin), double(n),
                                        partial[c]);
    });

    BatchLoss loss;
    for (std::size_t c = 0; c < chunks.size(); ++c) {
        grads.add(partial[c]);
        loss.mse += partial_mse[c];
    }
    loss.mse /= double(n);
    loss.reg = hf_regularizer(m, reg_strength);
    add_regularizer_gradient(m, reg_strength, grads);
    return loss;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t t = 0;
    std::vector<std::vector<double>> m1, m2;
};

inline AdamState make_adam_state(StnnModel& m) {
    AdamState st;
    for (auto* a : trainable_parameters(m).arrays) {
        st.m1.emplace_back(a->size(), 0.0);
        st.m2.emplace_back(a->size(), 0.0);
    }
    return st;
}

inline void adam_step(AdamState& st, const ParamRefs& params, const GradientSet& grads,
                      double lr) {
    if (int(st.m1.size()) != params.size())
        throw std::invalid_argument("adam_step: state shape mismatch");
    ++st.t;
    const double bc1 = 1.0 - std::pow(st.beta1, double(st.t));
    const double bc2 = 1.0 - std::pow(st.beta2, double(st.t));
    for (int a = 0; a < params.size(); ++a) {
        auto& p = *params.arrays[a];
        const auto& g = grads.arrays[a];
        auto& m1 = st.m1[a];
        auto& m2 = st.m2[a];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m1[i] = st.beta1 * m1[i] + (1.0 - st.beta1) * g[i];
            m2[i] = st.beta2 * m2[i] + (1.0 - st.beta2) * g[i] * g[i];
            const double mhat = m1[i] / bc1;
            const double vhat = m2[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// plateau scheduling

/// Halve the learning rate after `patience` consecutive epochs without a
/// relative validation-loss improvement of at least rel_improvement; the
/// wait counter resets after each halving.
class PlateauScheduler {
  public:
    PlateauScheduler(int patience, double factor, double rel_improvement = 1e-4)
        : patience_(patience), factor_(factor), rel_(rel_improvement) {}

    double observe(double val_loss, double lr) {
        if (val_loss < best_ * (1.0 - rel_)) {
            best_ = val_loss;
            wait_ = 0;
            return lr;
        }
        if (++wait_ >= patience_) {
            wait_ = 0;
            return lr * factor_;
        }
        return lr;
    }

  private:
    int patience_;
    double factor_;
    double rel_;
    double best_ = std::numeric_limits<double>::infinity();
    int wait_ = 0;
};

// ---------------------------------------------------------------------------
// training loop

struct TrainLogEntry {
    int epoch = 0;  // global, continues across passes
    int pass = 0;
    double lr = 0.0;
    double train_loss = 0.0;  // epoch-mean data MSE
    double val_loss = 0.0;
    double reg_term = 0.0;
    double wall_seconds = 0.0;  // cumulative since the start of training
};

inline double mean_mse(const StnnModel& m, std::span<const Sample> set, int workers = 1) {
    if (set.empty()) return 0.0;
    const auto chunks = partition_chunks(int(set.size()), workers);
    std::vector<double> partial(chunks.size(), 0.0);
    parallel_chunks(int(set.size()), workers, [&](int c, int begin, int end) {
        std::vector<DomainParams> lambdas;
        std::vector<BoundaryData> gs;
        for (int i = begin; i < end; ++i) {
            lambdas.push_back(set[i].lambda);
            gs.push_back(set[i].g);
        }
        const auto preds = stnn_forward_batch(m, lambdas, gs);
        for (int i = begin; i < end; ++i)
            partial[c] += loss_mse(preds[i - begin], set[i].rho);
    });
    double s = 0.0;
    for (double v : partial) s += v;
    return s / double(set.size());
}

struct TrainResult {
    std::vector<TrainLogEntry> log;
};

inline TrainResult train(StnnModel& m, std::span<const Sample> train_set,
                         std::span<const Sample> val_set, const TrainConfig& cfg) {
    if (train_set.empty()) throw std::invalid_argument("train: empty training set");
    TrainResult result;
    auto params = trainable_parameters(m);
    auto grads = make_gradient_set(m);
    std::mt19937_64 rng(cfg.seed);
    std::vector<int> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<Sample> batch;

    const auto t0 = std::chrono::steady_clock::now();
    int global_epoch = 0;
    for (int pass = 1; pass <= 2; ++pass) {
        const double reg = pass == 1 ? cfg.reg_strength : 0.0;
        double lr = pass == 1 ? cfg.lr_init : cfg.lr_second_pass;
        const int epochs = pass == 1 ? cfg.epochs_pass1 : cfg.epochs_pass2;
        auto adam = make_adam_state(m);
        PlateauScheduler scheduler(cfg.plateau_patience, cfg.plateau_factor);

        for (int epoch = 0; epoch < epochs; ++epoch) {
            ++global_epoch;
            std::shuffle(order.begin(), order.end(), rng);
            double epoch_mse = 0.0;
            for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
                const std::size_t end = std::min(begin + cfg.batch_size, order.size());
                batch.clear();
                for (std::size_t i = begin; i < end; ++i) batch.push_back(train_set[order[i]]);
                grads.zero();
                const auto bl = backward(m, batch, reg, grads, cfg.workers);
                if (!std::isfinite(bl.mse) || !std::isfinite(bl.reg))
                    throw std::runtime_error(
                        "train: non-finite loss at pass " + std::to_string(pass) + ", epoch " +
                        std::to_string(global_epoch) + ", lr " + std::to_string(lr));
                adam_step(adam, params, grads, lr);
                epoch_mse += bl.mse * double(end - begin);
            }
            epoch_mse /= double(train_set.size());

            TrainLogEntry entry;
            entry.epoch = global_epoch;
            entry.pass = pass;
            entry.lr = lr;
            entry.train_loss = epoch_mse;
            entry.val_loss = mean_mse(m, val_set, cfg.workers);
            entry.reg_term = hf_regularizer(m, reg);
            entry.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            result.log.push_back(entry);

            lr = scheduler.observe(entry.val_loss, lr);
        }
    }
    return result;
}

inline void write_training_log(const std::string& path, const std::vector<TrainLogEntry>& log) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_training_log: cannot open " + path);
    out << "epoch,pass,lr,train_loss,val_loss,reg_term,wall_seconds\n";
    out.precision(17);
    for (const auto& e : log)
        out << e.epoch << ',' << e.pass << ',' << e.lr << ',' << e.train_loss << ','
            << e.val_loss << ',' << e.reg_term << ',' << e.wall_seconds << '\n';
}

}  // namespace stnn
