#pragma once

// Relative-L2 error metrics, test-group evaluation, batch/sequential timing
// of STNN inference against warm- and cold-started GMRES, and CSV/PPM plot
// export.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "stnn/datagen.hpp"
#include "stnn/model.hpp"
#include "stnn/parallel.hpp"
#include "stnn/solver.hpp"
#include "stnn/training.hpp"

namespace stnn {

inline double relative_l2(const Density& pred, const Density& truth) {
    if (pred.values.size() != truth.values.size())
        throw std::invalid_argument("relative_l2: shape mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const double d = pred.values[i] - truth.values[i];
        num += d * d;
        den += truth.values[i] * truth.values[i];
    }
    if (den == 0.0) throw std::invalid_argument("relative_l2: zero-norm truth");
    return std::sqrt(num / den);
}

struct EvalSummary {
    double mean = 0.0, median = 0.0, p95 = 0.0, max = 0.0;
};

inline EvalSummary summarize_errors(std::vector<double> eps) {
    EvalSummary s;
    if (eps.empty()) return s;
    s.mean = std::accumulate(eps.begin(), eps.end(), 0.0) / double(eps.size());
    std::sort(eps.begin(), eps.end());
    const std::size_t n = eps.size();
    s.median = n % 2 == 1 ? eps[n / 2] : 0.5 * (eps[n / 2 - 1] + eps[n / 2]);
    s.p95 = eps[std::min(n - 1, std::size_t(std::ceil(0.95 * double(n))) - 1)];
    s.max = eps.back();
    return s;
}

struct TimingRecord {
    int n = 0;
    double mean_s = 0.0, median_s = 0.0, std_s = 0.0, total_s = 0.0;
};

inline TimingRecord summarize_times(std::vector<double> t) {
    TimingRecord r;
    r.n = int(t.size());
    if (t.empty()) return r;
    r.total_s = std::accumulate(t.begin(), t.end(), 0.0);
    r.mean_s = r.total_s / double(t.size());
    std::sort(t.begin(), t.end());
    r.median_s = t.size() % 2 == 1 ? t[t.size() / 2]
                                   : 0.5 * (t[t.size() / 2 - 1] + t[t.size() / 2]);
    double var = 0.0;
    for (double v : t) var += (v - r.mean_s) * (v - r.mean_s);
    r.std_s = t.size() > 1 ? std::sqrt(var / double(t.size() - 1)) : 0.0;
    return r;
}

struct EvalReport {
    std::string group;
    std::vector<double> per_sample;
    EvalSummary summary;
};

/// Per-sample relative L2 error of the model against the stored densities
/// (denormalized by the per-sample scale before comparison).
inline EvalReport evaluate_group(const StnnModel& m, std::span<const Sample> samples,
                                 const std::string& group, int workers = 1) {
    EvalReport report;
    report.group = group;
    report.per_sample.assign(samples.size(), 0.0);
    parallel_chunks(int(samples.size()), workers, [&](int, int begin, int end) {
        std::vector<DomainParams> lambdas;
        std::vector<BoundaryData> gs;
        for (int i = begin; i < end; ++i) {
            if (samples[i].g.n_eta != m.config.n_eta || samples[i].g.n_w != m.config.n_w ||
                samples[i].rho.n_rad != m.config.n_rad)
                throw std::invalid_argument("evaluate_group: dataset grid mismatch");
            lambdas.push_back(samples[i].lambda);
            gs.push_back(samples[i].g);
        }
        auto preds = stnn_forward_batch(m, lambdas, gs);
        for (int i = begin; i < end; ++i) {
            auto& pred = preds[i - begin];
            for (auto& v : pred.values) v *= samples[i].norm;
            auto truth = samples[i].rho;
            for (auto& v : truth.values) v *= samples[i].norm;
            report.per_sample[i] = relative_l2(pred, truth);
        }
    });
    report.summary = summarize_errors(report.per_sample);
    return report;
}

inline nlohmann::json eval_report_json(const EvalReport& r) {
    return {{"group", r.group},
            {"n", r.per_sample.size()},
            {"per_sample", r.per_sample},
            {"summary",
             {{"mean", r.summary.mean},
              {"median", r.summary.median},
              {"p95", r.summary.p95},
              {"max", r.summary.max}}}};
}

// ---------------------------------------------------------------------------
// benchmark harness

enum class BenchMode { Batch, Sequential };

struct BenchReport {
    BenchMode mode = BenchMode::Batch;
    int n_inputs = 0;
    int workers = 1;
    int repetitions = 3;
    TimingRecord stnn;        // per-sample statistics
    TimingRecord gmres_warm;  // per-solve statistics, warm-started
    TimingRecord gmres_cold;
    int gmres_warm_skipped = 0;
    int gmres_cold_skipped = 0;
    double speedup_warm = 0.0;  // gmres_warm.mean_s / stnn.mean_s
    double speedup_cold = 0.0;
};

namespace benchdetail {

inline double now_delta(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace benchdetail

/// Time a per-sample callable under the harness. Batch mode wraps the whole
/// pass in one clock pair and divides; sequential mode clocks every call.
/// Returns per-sample times, one entry per input per repetition (batch mode
/// contributes one averaged entry per repetition).
inline std::vector<double> time_per_sample(const std::function<void(int)>& run_one, int n_inputs,
                                           BenchMode mode, int repetitions) {
    std::vector<double> times;
    for (int rep = 0; rep < repetitions; ++rep) {
        if (mode == BenchMode::Batch) {
            const auto t0 = std::chrono::steady_clock::now();
            for (int i = 0; i < n_inputs; ++i) run_one(i);
            times.push_back(benchdetail::now_delta(t0) / double(n_inputs));
        } else {
            for (int i = 0; i < n_inputs; ++i) {
                const auto t0 = std::chrono::steady_clock::now();
                run_one(i);
                times.push_back(benchdetail::now_delta(t0));
            }
        }
    }
    return times;
}

/// Compare batch/sequential STNN inference against direct GMRES solves on
/// identical inputs, all at a fixed parameter triple. GMRES warm starts use
/// the previous solve's solution; failed solves are skipped and counted.
inline BenchReport bench(const StnnModel& m, const DomainParams& params,
                         std::span<const BoundaryData> inputs, BenchMode mode,
                         const GmresOptions& solver_opt = {}, int repetitions = 3,
                         int workers = 1) {
    if (inputs.empty()) throw std::invalid_argument("bench: no inputs");
    BenchReport report;
    report.mode = mode;
    report.n_inputs = int(inputs.size());
    report.workers = workers;
    report.repetitions = repetitions;

    // STNN side: batch mode goes through the vectorized batched path so the
    // shared setup really is amortized; sequential mode pays full per-call
    // cost
    if (mode == BenchMode::Batch) {
        std::vector<DomainParams> lambdas(report.n_inputs, params);
        std::vector<double> times;
        for (int rep = 0; rep < repetitions; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            if (workers > 1) {
                parallel_chunks(report.n_inputs, workers, [&](int, int begin, int end) {
                    auto preds = stnn_forward_batch(
                        m, std::span<const DomainParams>(lambdas.data() + begin, end - begin),
                        inputs.subspan(begin, end - begin));
                });
            } else {
                auto preds = stnn_forward_batch(m, lambdas, inputs);
            }
            times.push_back(benchdetail::now_delta(t0) / double(report.n_inputs));
        }
        report.stnn = summarize_times(times);
    } else {
        Density sink;
        auto run_stnn = [&](int i) { sink = stnn_forward(m, params, inputs[i]); };
        report.stnn = summarize_times(time_per_sample(run_stnn, report.n_inputs, mode, repetitions));
    }

    // GMRES side (one repetition; direct solves dominate the budget)
    const auto geom = build_geometry(params);
    const auto grid = make_grid(geom, m.config.n_rad, m.config.n_eta, m.config.n_w);
    const auto op = assemble(geom, grid, params.ell);

    std::vector<double> warm_times, cold_times;
    std::vector<double> x_prev;
    for (int i = 0; i < report.n_inputs; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        auto rw = solve_with_operator(op, inputs[i], solver_opt, x_prev);
        const double tw = benchdetail::now_delta(t0);
        if (rw.stats.converged) {
            warm_times.push_back(tw);
            x_prev = op.restrict_field(rw.field);
        } else {
            ++report.gmres_warm_skipped;
        }

        t0 = std::chrono::steady_clock::now();
        auto rc = solve_with_operator(op, inputs[i], solver_opt);
        const double tc = benchdetail::now_delta(t0);
        if (rc.stats.converged)
            cold_times.push_back(tc);
        else
            ++report.gmres_cold_skipped;
    }
    report.gmres_warm = summarize_times(warm_times);
    report.gmres_cold = summarize_times(cold_times);
    if (report.stnn.mean_s > 0.0 && report.gmres_warm.n > 0)
        report.speedup_warm = report.gmres_warm.mean_s / report.stnn.mean_s;
    if (report.stnn.mean_s > 0.0 && report.gmres_cold.n > 0)
        report.speedup_cold = report.gmres_cold.mean_s / report.stnn.mean_s;
    return report;
}

inline nlohmann::json bench_report_json(const BenchReport& r) {
    auto timing = [](const TimingRecord& t) {
        return nlohmann::json{{"n", t.n},
                              {"mean_s", t.mean_s},
                              {"median_s", t.median_s},
                              {"std_s", t.std_s},
                              {"total_s", t.total_s}};
    };
    return {{"mode", r.mode == BenchMode::Batch ? "batch" : "sequential"},
            {"n_inputs", r.n_inputs},
            {"workers", r.workers},
            {"repetitions", r.repetitions},
            {"stnn_per_sample", timing(r.stnn)},
            {"gmres_warm_per_solve", timing(r.gmres_warm)},
            {"gmres_cold_per_solve", timing(r.gmres_cold)},
            {"gmres_warm_skipped", r.gmres_warm_skipped},
            {"gmres_cold_skipped", r.gmres_cold_skipped},
            {"speedup_warm", r.speedup_warm},
            {"speedup_cold", r.speedup_cold}};
}

// ---------------------------------------------------------------------------
// plot export

/// (x, y, rho) triples at the interior radial nodes, CSV.
inline void export_density_csv(const std::string& path, const Density& rho,
                               const DomainGeometry& geom, const Grid& grid) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("export_density_csv: cannot open " + path);
    out << "x,y,rho\n";
    out.precision(17);
    for (int ir = 1; ir <= grid.n_rad; ++ir)
        for (int ie = 0; ie < grid.n_eta; ++ie) {
            const auto xy = geom.to_cartesian(grid.rad_nodes[ir], grid.eta_nodes[ie]);
            out << xy[0] << ',' << xy[1] << ',' << rho.at(ir - 1, ie) << '\n';
        }
    if (!out) throw std::runtime_error("export_density_csv: write failed");
}

/// Binary PPM heatmap over the logical (radial x angular) grid with a fixed
/// five-stop blue-white-red colormap; values are min-max normalized, and a
/// constant field maps to the midpoint color.
inline void export_density_ppm(const std::string& path, const Density& rho) {
    double lo = rho.values[0], hi = rho.values[0];
    for (double v : rho.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double range = hi - lo;
    static const double stops[5][3] = {{0.03, 0.19, 0.42},
                                       {0.40, 0.66, 0.81},
                                       {0.97, 0.97, 0.97},
                                       {0.84, 0.38, 0.30},
                                       {0.40, 0.0, 0.12}};
    auto color = [&](double t) {
        t = std::clamp(t, 0.0, 1.0) * 4.0;
        const int k = std::min(3, int(t));
        const double f = t - k;
        std::array<unsigned char, 3> c;
        for (int j = 0; j < 3; ++j)
            c[j] = (unsigned char)std::lround(255.0 * (stops[k][j] + f * (stops[k + 1][j] - stops[k][j])));
        return c;
    };
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("export_density_ppm: cannot open " + path);
    out << "P6\n" << rho.n_eta << ' ' << rho.n_rad << "\n255\n";
    for (int ir = 0; ir < rho.n_rad; ++ir)
        for (int ie = 0; ie < rho.n_eta; ++ie) {
            const double v = rho.at(ir, ie);
            const double t = range > 0.0 ? (v - lo) / range : 0.5;
            const auto c = color(t);
            out.write(reinterpret_cast<const char*>(c.data()), 3);
        }
    if (!out) throw std::runtime_error("export_density_ppm: write failed");
}

/// (eta, w, g) rows for one boundary shell, CSV.
inline void export_boundary_csv(const std::string& path, const BoundaryData& g, const Grid& grid,
                                BoundarySide side) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("export_boundary_csv: cannot open " + path);
    out << "eta,w,g\n";
    out.precision(17);
    const auto& shell = side == BoundarySide::Inner ? g.inner : g.outer;
    for (int ie = 0; ie < grid.n_eta; ++ie)
        for (int iw = 0; iw < grid.n_w; ++iw)
            out << grid.eta_nodes[ie] << ',' << grid.w_nodes[iw] << ','
                << shell[grid.boundary_index(ie, iw)] << '\n';
    if (!out) throw std::runtime_error("export_boundary_csv: write failed");
}

}  // namespace stnn
