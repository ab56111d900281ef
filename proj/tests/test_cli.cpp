#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "stnn/datagen.hpp"
#include "stnn/model.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = STNN_CLI_PATH;

int run(const std::string& args) {
    const std::string cmd = kCli + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

fs::path work_dir() {
    const auto dir = fs::temp_directory_path() / "stnn_cli_test";
    fs::create_directories(dir);
    return dir;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("cli solve") {
    const auto dir = work_dir();
    SECTION("constant data solves and writes artifacts") {
        const auto out = dir / "solve_const";
        REQUIRE(run("solve --ell 1 --a1 1 --a2 2 --grid 8x16x8 --g const:1 --out " +
                    out.string()) == 0);
        for (const char* f : {"run.json", "boundary.bin", "field.bin", "density.bin",
                              "density.csv", "density.ppm", "bc_inner.csv", "bc_outer.csv"})
            REQUIRE(fs::exists(out / f));
        // density must be 2*pi everywhere
        std::ifstream in(out / "density.bin", std::ios::binary);
        std::vector<double> rho(8 * 16);
        in.read(reinterpret_cast<char*>(rho.data()), rho.size() * sizeof(double));
        for (double v : rho) REQUIRE(std::abs(v - stnn::two_pi) < 1e-5);
    }
    SECTION("boundary file input round-trips the documented format") {
        const auto out1 = dir / "solve_gen";
        const auto out2 = dir / "solve_file";
        REQUIRE(run("solve --ell 0.5 --a1 0.8 --a2 3 --grid 8x16x8 --g fgen2:7 --out " +
                    out1.string()) == 0);
        REQUIRE(run("solve --ell 0.5 --a1 0.8 --a2 3 --grid 8x16x8 --g file:" +
                    (out1 / "boundary.bin").string() + " --out " + out2.string()) == 0);
        REQUIRE(file_bytes(out1 / "density.bin") == file_bytes(out2 / "density.bin"));
    }
    SECTION("invalid parameters exit with the usage code") {
        REQUIRE(run("solve --ell 1 --a1 1.5 --a2 2 --g const:1 --out " +
                    (dir / "bad").string()) == 2);
        REQUIRE(run("solve --ell 1 --a1 0.5 --a2 2 --g nonsense:1 --out " +
                    (dir / "bad2").string()) == 2);
        REQUIRE(run("frobnicate") == 2);
    }
    SECTION("iteration starvation exits with the numerical code") {
        REQUIRE(run("solve --ell 5 --a1 0.5 --a2 4 --grid 8x16x8 --g fgen1:3 --max-iter 3 "
                    "--tol 1e-12 --out " +
                    (dir / "starved").string()) == 3);
    }
}

TEST_CASE("cli gen-data determinism") {
    const auto dir = work_dir();
    const auto d1 = dir / "ds1";
    const auto d2 = dir / "ds2";
    fs::remove_all(d1);
    fs::remove_all(d2);
    REQUIRE(run("gen-data --count 6 --grid 8x16x8 --seed 7 --workers 2 --out " + d1.string()) ==
            0);
    REQUIRE(run("gen-data --count 6 --grid 8x16x8 --seed 7 --workers 1 --out " + d2.string()) ==
            0);
    REQUIRE(file_bytes(d1 / "samples.bin") == file_bytes(d2 / "samples.bin"));
    REQUIRE(file_bytes(d1 / "manifest.json") == file_bytes(d2 / "manifest.json"));
    REQUIRE(fs::exists(d1 / "run.json"));
}

TEST_CASE("cli train, eval and bench pipeline") {
    const auto dir = work_dir();
    const auto train_ds = dir / "train_ds";
    const auto val_ds = dir / "val_ds";
    const auto model_dir = dir / "model_out";
    if (!fs::exists(train_ds))
        REQUIRE(run("gen-data --count 10 --grid 8x16x8 --seed 100 --out " + train_ds.string()) ==
                0);
    if (!fs::exists(val_ds))
        REQUIRE(run("gen-data --count 4 --grid 8x16x8 --seed 200 --out " + val_ds.string()) == 0);

    REQUIRE(run("train --dataset " + train_ds.string() + " --val-dataset " + val_ds.string() +
                " --preset trial5-desk --epochs1 3 --epochs2 2 --batch-size 4 --out " +
                model_dir.string()) == 0);
    REQUIRE(fs::exists(model_dir / "model.stnn"));
    REQUIRE(fs::exists(model_dir / "run.json"));

    SECTION("training log schema and scheduler monotonicity") {
        std::ifstream log(model_dir / "training_log.csv");
        std::string header;
        std::getline(log, header);
        REQUIRE(header == "epoch,pass,lr,train_loss,val_loss,reg_term,wall_seconds");
        int rows = 0;
        double prev_lr = 1e18;
        int prev_pass = 1;
        std::string line;
        while (std::getline(log, line)) {
            ++rows;
            int epoch, pass;
            double lr;
            REQUIRE(std::sscanf(line.c_str(), "%d,%d,%lf", &epoch, &pass, &lr) == 3);
            if (pass != prev_pass) prev_lr = 1e18;  // reset at the pass boundary
            REQUIRE(lr <= prev_lr);
            prev_lr = lr;
            prev_pass = pass;
        }
        REQUIRE(rows == 5);
    }

    SECTION("eval writes a summary report") {
        const auto report = dir / "eval.json";
        REQUIRE(run("eval --model " + (model_dir / "model.stnn").string() + " --dataset " +
                    val_ds.string() + " --group smoke --out " + report.string()) == 0);
        std::ifstream in(report);
        nlohmann::json j;
        in >> j;
        REQUIRE(j.at("group") == "smoke");
        REQUIRE(j.at("n").get<int>() == 4);
        REQUIRE(j.at("summary").contains("mean"));
        REQUIRE(j.at("summary").contains("median"));
        REQUIRE(j.at("summary").contains("p95"));
        REQUIRE(j.at("summary").contains("max"));
    }

    SECTION("bench reports timings and speedups") {
        const auto report = dir / "bench.json";
        REQUIRE(run("bench --model " + (model_dir / "model.stnn").string() +
                    " --ell 1 --a1 1 --a2 2 --count 2 --mode sequential --reps 1 --out " +
                    report.string()) == 0);
        std::ifstream in(report);
        nlohmann::json j;
        in >> j;
        REQUIRE(j.at("mode") == "sequential");
        REQUIRE(j.at("stnn_per_sample").at("mean_s").get<double>() > 0.0);
        REQUIRE(j.contains("speedup_warm"));
        REQUIRE(j.contains("gmres_cold_per_solve"));
    }
}
