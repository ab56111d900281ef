// Command-line driver: direct solves, dataset generation, training,
// evaluation, and benchmarking. Every run writes its resolved configuration
// next to its artifacts so outputs are reproducible from disk.
//
// Exit codes: 0 success, 2 usage/configuration error, 3 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "stnn/datagen.hpp"
#include "stnn/evalbench.hpp"
#include "stnn/model.hpp"
#include "stnn/solver.hpp"
#include "stnn/training.hpp"
#include "stnn/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct NumericalFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GridSizes {
    int n_rad = 64, n_eta = 32, n_w = 16;
};

GridSizes parse_grid(const std::string& text) {
    GridSizes g;
    if (std::sscanf(text.c_str(), "%dx%dx%d", &g.n_rad, &g.n_eta, &g.n_w) != 3)
        throw CLI::ValidationError("--grid", "expected RADxETAxW, e.g. 64x32x16");
    return g;
}

json grid_json(const GridSizes& g) {
    return {{"n_rad", g.n_rad}, {"n_eta", g.n_eta}, {"n_w", g.n_w}};
}

void write_run_config(const fs::path& dir, const std::string& command, json config) {
    json run;
    run["command"] = command;
    run["code_version"] = stnn::kVersion;
    run["config"] = std::move(config);
    std::ofstream out(dir / "run.json");
    out << run.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write " + (dir / "run.json").string());
}

void write_raw_doubles(const fs::path& path, const std::vector<double>& v) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

// boundary spec: const:V | file:PATH | fgen<i>:SEED | fgenexp:SEED |
// pwl:SEED | noise:SEED | blayer
stnn::BoundaryData make_boundary(const std::string& spec, const stnn::DomainGeometry& geom,
                                 const stnn::Grid& grid) {
    const auto colon = spec.find(':');
    const std::string kind = spec.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
    auto seed_of = [&] { return arg.empty() ? 0ull : std::stoull(arg); };

    if (kind == "const") return stnn::constant_boundary(geom, grid, arg.empty() ? 1.0 : std::stod(arg));
    if (kind == "file") return stnn::read_boundary_bin(arg, grid);
    if (kind == "blayer") return stnn::boundary_layer_case(geom, grid);
    if (kind == "noise") {
        std::mt19937_64 rng(seed_of());
        return stnn::noise_case(rng, geom, grid);
    }
    if (kind == "pwl") {
        std::mt19937_64 rng(seed_of());
        return stnn::piecewise_linear_sample(rng, geom, grid);
    }
    if (kind == "fgenexp") {
        stnn::GeneratorSpec g;
        g.kind = stnn::GeneratorSpec::Kind::Exponential;
        std::mt19937_64 rng(seed_of());
        return stnn::fgen_sample(g, rng, geom, grid);
    }
    if (kind.rfind("fgen", 0) == 0) {
        stnn::GeneratorSpec g;
        g.kind = stnn::GeneratorSpec::Kind::PowerLaw;
        g.power = std::stod(kind.substr(4));
        std::mt19937_64 rng(seed_of());
        return stnn::fgen_sample(g, rng, geom, grid);
    }
    throw CLI::ValidationError("--g", "unknown boundary spec '" + spec + "'");
}

std::vector<stnn::GeneratorSpec> parse_mix(const std::string& text, double damping) {
    std::vector<stnn::GeneratorSpec> mix;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        stnn::GeneratorSpec g;
        g.damping_probability = damping;
        if (item == "fgenexp") {
            g.kind = stnn::GeneratorSpec::Kind::Exponential;
        } else if (item == "pwl") {
            g.kind = stnn::GeneratorSpec::Kind::PiecewiseLinear;
        } else if (item == "blayer") {
            g.kind = stnn::GeneratorSpec::Kind::BoundaryLayer;
        } else if (item.rfind("fgen", 0) == 0) {
            g.kind = stnn::GeneratorSpec::Kind::PowerLaw;
            g.power = std::stod(item.substr(4));
        } else {
            throw CLI::ValidationError("--mix", "unknown generator '" + item + "'");
        }
        mix.push_back(g);
    }
    if (mix.empty()) throw CLI::ValidationError("--mix", "empty generator mix");
    return mix;
}

int default_workers() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : int(n);
}

// ---------------------------------------------------------------------------

int cmd_solve(const std::string& gspec, double ell, double a1, double a2,
              const std::string& grid_text, const std::string& out_dir,
              const stnn::GmresOptions& opt) {
    stnn::DomainParams params{ell, a1, a2};
    params.validate();
    const auto sizes = parse_grid(grid_text);
    const auto geom = stnn::build_geometry(params);
    const auto grid = stnn::make_grid(geom, sizes.n_rad, sizes.n_eta, sizes.n_w);
    const auto g = make_boundary(gspec, geom, grid);

    const auto op = stnn::assemble(geom, grid, params.ell);
    stnn::validate_boundary_data(op, g);
    auto res = stnn::solve_nested(op, g, opt);
    if (!res.stats.converged) {
        std::cerr << "gmres failed to converge: relative residual " << res.stats.residual
                  << " after " << res.stats.iterations << " iterations\n";
        std::cerr << "residual history (last 10):";
        const auto& h = res.stats.history;
        for (std::size_t i = h.size() > 10 ? h.size() - 10 : 0; i < h.size(); ++i)
            std::cerr << ' ' << h[i];
        std::cerr << '\n';
        throw NumericalFailure("solver did not converge");
    }
    const auto rho = stnn::density(res.field, grid);

    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    stnn::write_boundary_bin((dir / "boundary.bin").string(), g);
    write_raw_doubles(dir / "field.bin", res.field.values);
    write_raw_doubles(dir / "density.bin", rho.values);
    stnn::export_density_csv((dir / "density.csv").string(), rho, geom, grid);
    stnn::export_density_ppm((dir / "density.ppm").string(), rho);
    stnn::export_boundary_csv((dir / "bc_inner.csv").string(), g, grid, stnn::BoundarySide::Inner);
    stnn::export_boundary_csv((dir / "bc_outer.csv").string(), g, grid, stnn::BoundarySide::Outer);
    write_run_config(dir, "solve",
                     {{"lambda", {params.ell, params.a1, params.a2}},
                      {"grid", grid_json(sizes)},
                      {"g", gspec},
                      {"solver",
                       {{"tol", opt.tol}, {"restart", opt.restart}, {"max_iter", opt.max_iter}}},
                      {"iterations", res.stats.iterations},
                      {"residual", res.stats.residual}});

    std::cout << "solved in " << res.stats.iterations << " iterations, residual "
              << res.stats.residual << "\n";
    std::cout << "density range [" << *std::min_element(rho.values.begin(), rho.values.end())
              << ", " << *std::max_element(rho.values.begin(), rho.values.end()) << "]\n";
    return 0;
}

int cmd_gen_data(int count, const std::string& grid_text, std::uint64_t seed,
                 const std::string& out_dir, const std::string& volume_name,
                 const std::string& mix_text, double damping, int workers,
                 const stnn::GmresOptions& opt) {
    stnn::DatasetSpec spec;
    spec.count = count;
    const auto sizes = parse_grid(grid_text);
    spec.n_rad = sizes.n_rad;
    spec.n_eta = sizes.n_eta;
    spec.n_w = sizes.n_w;
    spec.seed = seed;
    spec.workers = workers;
    spec.solver = opt;
    if (volume_name == "training")
        spec.volume = stnn::training_volume();
    else if (volume_name == "test3")
        spec.volume = stnn::extrapolation_volume();
    else
        throw CLI::ValidationError("--volume", "expected 'training' or 'test3'");
    spec.mix = mix_text.empty() ? stnn::default_generator_mix(damping)
                                : parse_mix(mix_text, damping);

    const auto summary = stnn::make_dataset(spec, out_dir);
    write_run_config(fs::path(out_dir), "gen-data",
                     {{"count", count},
                      {"grid", grid_json(sizes)},
                      {"seed", seed},
                      {"volume", volume_name},
                      {"mix", mix_text.empty() ? std::string("default") : mix_text},
                      {"damping_probability", damping},
                      {"workers", workers}});
    std::cout << "wrote " << summary.written << " samples to " << out_dir;
    if (!summary.skipped.empty()) std::cout << " (" << summary.skipped.size() << " skipped)";
    std::cout << "\n";
    for (const auto& [id, reason] : summary.skipped)
        std::cerr << "skipped sample " << id << ": " << reason << "\n";
    return 0;
}

int cmd_train(const std::string& dataset_dir, const std::string& val_dir,
              const std::string& preset, const std::string& out_dir, stnn::TrainConfig tc,
              std::uint64_t model_seed) {
    auto train_ds = stnn::load_dataset(dataset_dir);
    auto val_ds = stnn::load_dataset(val_dir);
    if (train_ds.n_rad != val_ds.n_rad || train_ds.n_eta != val_ds.n_eta ||
        train_ds.n_w != val_ds.n_w)
        throw std::invalid_argument("train: train/val dataset grids differ");

    auto cfg = stnn::trial_preset(preset);
    cfg.n_rad = train_ds.n_rad;
    cfg.n_eta = train_ds.n_eta;
    cfg.n_w = train_ds.n_w;
    auto model = stnn::init_model(cfg, model_seed);
    std::cout << "training " << preset << " on " << train_ds.samples.size() << " samples ("
              << model.parameter_count() << " parameters)\n";

    auto result = stnn::train(model, train_ds.samples, val_ds.samples, tc);

    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    stnn::save_model(model, (dir / "model.stnn").string());
    stnn::write_training_log((dir / "training_log.csv").string(), result.log);
    write_run_config(dir, "train",
                     {{"dataset", dataset_dir},
                      {"val_dataset", val_dir},
                      {"preset", preset},
                      {"model_seed", model_seed},
                      {"batch_size", tc.batch_size},
                      {"lr_init", tc.lr_init},
                      {"lr_second_pass", tc.lr_second_pass},
                      {"plateau_patience", tc.plateau_patience},
                      {"plateau_factor", tc.plateau_factor},
                      {"epochs_pass1", tc.epochs_pass1},
                      {"epochs_pass2", tc.epochs_pass2},
                      {"reg_strength", tc.reg_strength},
                      {"seed", tc.seed},
                      {"workers", tc.workers}});
    std::cout << "final val loss " << result.log.back().val_loss << ", model written to "
              << (dir / "model.stnn").string() << "\n";
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& dataset_dir,
             const std::string& group, const std::string& out_path, int workers) {
    auto model = stnn::load_model(model_path);
    auto ds = stnn::load_dataset(dataset_dir);
    auto report = stnn::evaluate_group(model, ds.samples, group, workers);

    json j = stnn::eval_report_json(report);
    j["model"] = model_path;
    j["dataset"] = dataset_dir;
    j["workers"] = workers;
    j["code_version"] = stnn::kVersion;
    std::ofstream out(out_path);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write " + out_path);
    std::cout << "group " << group << ": n=" << report.per_sample.size()
              << " mean=" << report.summary.mean << " median=" << report.summary.median
              << " p95=" << report.summary.p95 << " max=" << report.summary.max << "\n";
    return 0;
}

int cmd_bench(const std::string& model_path, double ell, double a1, double a2, int count,
              const std::string& mode_text, const std::string& out_path, std::uint64_t seed,
              int reps, int workers, const stnn::GmresOptions& opt) {
    auto model = stnn::load_model(model_path);
    stnn::DomainParams params{ell, a1, a2};
    params.validate();
    const auto geom = stnn::build_geometry(params);
    const auto grid = stnn::make_grid(geom, model.config.n_rad, model.config.n_eta,
                                      model.config.n_w);

    std::mt19937_64 rng(seed);
    stnn::GeneratorSpec gen;
    gen.kind = stnn::GeneratorSpec::Kind::Exponential;
    gen.damping_probability = 0.0;
    std::vector<stnn::BoundaryData> inputs;
    for (int i = 0; i < count; ++i) inputs.push_back(stnn::fgen_sample(gen, rng, geom, grid));

    const auto mode =
        mode_text == "batch" ? stnn::BenchMode::Batch : stnn::BenchMode::Sequential;
    auto report = stnn::bench(model, params, inputs, mode, opt, reps, workers);
    if (report.gmres_warm.n == 0)
        std::cerr << "warning: every warm GMRES solve failed to converge\n";

    json j = stnn::bench_report_json(report);
    j["model"] = model_path;
    j["lambda"] = {params.ell, params.a1, params.a2};
    j["seed"] = seed;
    j["code_version"] = stnn::kVersion;
    std::ofstream out(out_path);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write " + out_path);
    std::cout << "stnn per-sample " << report.stnn.mean_s << " s; gmres warm "
              << report.gmres_warm.mean_s << " s, cold " << report.gmres_cold.mean_s
              << " s; speedup warm " << report.speedup_warm << "x, cold "
              << report.speedup_cold << "x\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stacked tensorial network solver and benchmark suite"};
    app.set_version_flag("--version", std::string("stnn ") + stnn::kVersion);
    app.require_subcommand(1);

    stnn::GmresOptions opt;
    double ell = 1.0, a1 = 1.0, a2 = 2.0;
    std::string grid_text = "64x32x16";
    std::string gspec = "const:1";
    std::string out_dir = "out";
    std::string out_path = "report.json";
    std::string dataset_dir, val_dir, model_path;
    std::string volume_name = "training", mix_text, mode_text = "batch";
    std::string preset = "trial5-desk";
    std::uint64_t seed = 0, model_seed = 0;
    int count = 100, workers = default_workers(), reps = 3;
    double damping = 0.3;
    stnn::TrainConfig tc;

    auto add_solver_flags = [&opt](CLI::App* cmd) {
        cmd->add_option("--tol", opt.tol, "relative residual tolerance");
        cmd->add_option("--restart", opt.restart, "GMRES restart length");
        cmd->add_option("--max-iter", opt.max_iter, "GMRES iteration cap");
    };

    auto* solve = app.add_subcommand("solve", "direct steady-state solve");
    solve->add_option("--ell", ell, "persistence length")->required();
    solve->add_option("--a1", a1, "inner minor axis")->required();
    solve->add_option("--a2", a2, "outer minor axis")->required();
    solve->add_option("--grid", grid_text, "grid RADxETAxW");
    solve->add_option("--g", gspec, "boundary spec (const:V, file:PATH, fgenI:SEED, "
                                    "fgenexp:SEED, pwl:SEED, noise:SEED, blayer)");
    solve->add_option("--out", out_dir, "output directory");
    add_solver_flags(solve);

    auto* gen = app.add_subcommand("gen-data", "generate a labeled dataset");
    gen->add_option("--count", count, "number of samples")->required();
    gen->add_option("--grid", grid_text, "grid RADxETAxW");
    gen->add_option("--seed", seed, "base seed");
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_option("--volume", volume_name, "'training' or 'test3'");
    gen->add_option("--mix", mix_text, "comma list of generators (default fgen0,fgen1,"
                                       "fgen2,fgen4,fgenexp)");
    gen->add_option("--damping-prob", damping, "damping window probability");
    gen->add_option("--workers", workers, "parallel workers");
    add_solver_flags(gen);

    auto* train = app.add_subcommand("train", "train a model on a dataset");
    train->add_option("--dataset", dataset_dir, "training dataset directory")->required();
    train->add_option("--val-dataset", val_dir, "validation dataset directory")->required();
    train->add_option("--preset", preset, "model preset (trial1..trial7, trial5-desk)");
    train->add_option("--out", out_dir, "output directory")->required();
    train->add_option("--model-seed", model_seed, "initialization seed");
    train->add_option("--seed", tc.seed, "shuffling seed");
    train->add_option("--batch-size", tc.batch_size, "batch size");
    train->add_option("--lr", tc.lr_init, "pass-1 learning rate");
    train->add_option("--lr2", tc.lr_second_pass, "pass-2 learning rate");
    train->add_option("--epochs1", tc.epochs_pass1, "pass-1 epochs");
    train->add_option("--epochs2", tc.epochs_pass2, "pass-2 epochs");
    train->add_option("--patience", tc.plateau_patience, "plateau patience (epochs)");
    train->add_option("--reg", tc.reg_strength, "high-frequency penalty strength");
    train->add_option("--workers", tc.workers, "parallel workers");

    auto* eval = app.add_subcommand("eval", "evaluate a model on a dataset");
    eval->add_option("--model", model_path, "model file")->required();
    eval->add_option("--dataset", dataset_dir, "dataset directory")->required();
    eval->add_option("--group", volume_name, "group label for the report")->required();
    eval->add_option("--out", out_path, "report path (JSON)");
    eval->add_option("--workers", workers, "parallel workers");

    auto* bench = app.add_subcommand("bench", "time inference against direct solves");
    bench->add_option("--model", model_path, "model file")->required();
    bench->add_option("--ell", ell, "persistence length")->required();
    bench->add_option("--a1", a1, "inner minor axis")->required();
    bench->add_option("--a2", a2, "outer minor axis")->required();
    bench->add_option("--count", count, "number of inputs")->required();
    bench->add_option("--mode", mode_text, "'batch' or 'sequential'");
    bench->add_option("--out", out_path, "report path (JSON)");
    bench->add_option("--seed", seed, "input generator seed");
    bench->add_option("--reps", reps, "inference repetitions");
    bench->add_option("--workers", workers, "parallel workers (default 1)")->default_val(1);
    add_solver_flags(bench);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : kExitUsage;
    }

    try {
        if (solve->parsed()) return cmd_solve(gspec, ell, a1, a2, grid_text, out_dir, opt);
        if (gen->parsed())
            return cmd_gen_data(count, grid_text, seed, out_dir, volume_name, mix_text, damping,
                                workers, opt);
        if (train->parsed())
            return cmd_train(dataset_dir, val_dir, preset, out_dir, tc, model_seed);
        if (eval->parsed())
            return cmd_eval(model_path, dataset_dir, volume_name, out_path, workers);
        if (bench->parsed())
            return cmd_bench(model_path, ell, a1, a2, count, mode_text, out_path, seed, reps,
                             workers, opt);
    } catch (const NumericalFailure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
    return 0;
}
