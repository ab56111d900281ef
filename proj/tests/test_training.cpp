#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "stnn/training.hpp"

using namespace stnn;
using Catch::Approx;

namespace {

TrialConfig micro_config(int K = 2) {
    TrialConfig c;
    c.name = "micro";
    c.n_networks = K;
    c.head_depth = 3;
    c.n_weight_pairs = 2;
    c.tt_d = 3;
    c.ranks = {1, 3, 3, 1};
    c.n_rad = 4;
    c.n_eta = 8;
    c.n_w = 8;
    return c;
}

Sample random_sample(const StnnModel& m, std::uint64_t seed) {
    auto geom = build_geometry({1.0, 1.0, 2.0});
    auto grid = make_grid(geom, m.config.n_rad, m.config.n_eta, m.config.n_w);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Sample s;
    s.lambda = {std::exp(std::log(0.01) + unit(rng) * std::log(100.0 / 0.01)),
                0.2 + 0.8 * unit(rng), 2.0 + 18.0 * unit(rng)};
    s.g = BoundaryData::zeros(grid);
    auto mi = build_inflow_mask(geom, grid, BoundarySide::Inner);
    auto mo = build_inflow_mask(geom, grid, BoundarySide::Outer);
    for (int i = 0; i < grid.n_boundary(); ++i) {
        if (mi[i]) s.g.inner[i] = unit(rng);
        if (mo[i]) s.g.outer[i] = unit(rng);
    }
    s.rho.n_rad = m.config.n_rad;
    s.rho.n_eta = m.config.n_eta;
    s.rho.values.resize(std::size_t(m.config.n_rad) * m.config.n_eta);
    for (auto& v : s.rho.values) v = 0.5 + unit(rng);
    return s;
}

double full_loss(const StnnModel& m, std::span<const Sample> batch, double reg_strength) {
    double mse = 0.0;
    for (const auto& s : batch) mse += loss_mse(stnn_forward(m, s.lambda, s.g), s.rho);
    return mse / double(batch.size()) + hf_regularizer(m, reg_strength);
}

}  // namespace

TEST_CASE("loss_mse") {
    Density a, b;
    a.n_rad = b.n_rad = 2;
    a.n_eta = b.n_eta = 3;
    a.values = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
    b.values = a.values;
    REQUIRE(loss_mse(a, b) == 0.0);

    for (auto& v : b.values) v += 1.0;
    REQUIRE(loss_mse(a, b) == Approx(1.0).epsilon(1e-15));

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (auto& v : a.values) v = u(rng);
    for (auto& v : b.values) v = u(rng);
    long double ref = 0.0L;
    for (int i = 0; i < 6; ++i)
        ref += (a.values[i] - b.values[i]) * (a.values[i] - b.values[i]);
    REQUIRE(loss_mse(a, b) == Approx(double(ref / 6.0)).epsilon(1e-14));

    b.values.pop_back();
    REQUIRE_THROWS_AS(loss_mse(a, b), std::invalid_argument);
}

TEST_CASE("high-frequency penalty") {
    SECTION("constants are annihilated") {
        REQUIRE(hf_penalty(std::vector<double>(8, 3.7)) == 0.0);
    }
    SECTION("unit impulse at n = 4") {
        // second differences of (1,0,0,0) are (-2,1,0,1); mean square 6/4
        std::vector<double> h{1.0, 0.0, 0.0, 0.0};
        REQUIRE(hf_penalty(h) == Approx(1.5).epsilon(1e-15));
    }
    SECTION("non-periodic ramp picks up seam curvature") {
        std::vector<double> h(8);
        for (int i = 0; i < 8; ++i) h[i] = 0.25 * i;
        REQUIRE(hf_penalty(h) > 0.0);
    }
}

TEST_CASE("backward gradients") {
    SECTION("zero loss means zero gradients") {
        auto m = init_model(micro_config(), 3);
        auto s = random_sample(m, 10);
        s.rho = stnn_forward(m, s.lambda, s.g);  // perfect prediction
        auto grads = make_gradient_set(m);
        auto bl = backward(m, std::vector<Sample>{s}, 0.0, grads);
        REQUIRE(bl.mse == 0.0);
        for (const auto& a : grads.arrays)
            for (double v : a) REQUIRE(v == 0.0);
    }
    SECTION("K = 1 leaves the embedding head untrained") {
        auto m = init_model(micro_config(1), 4);
        auto s = random_sample(m, 11);
        auto grads = make_gradient_set(m);
        backward(m, std::vector<Sample>{s}, 0.0, grads);
        const auto layout = gradient_layout(m);
        for (int l = 0; l < m.head.n_layers(); ++l) {
            for (double v : grads.arrays[layout.head_w(l)]) REQUIRE(v == 0.0);
            for (double v : grads.arrays[layout.head_b(l)]) REQUIRE(v == 0.0);
        }
    }
    SECTION("matches central finite differences on every array") {
        auto m = init_model(micro_config(), 5);
        std::vector<Sample> batch{random_sample(m, 20), random_sample(m, 21),
                                  random_sample(m, 22)};
        const double reg = 1e-3;
        auto grads = make_gradient_set(m);
        auto bl = backward(m, batch, reg, grads);
        REQUIRE(std::isfinite(bl.mse));

        auto params = trainable_parameters(m);
        const double h = 1e-6;
        for (int a = 0; a < params.size(); ++a) {
            auto& arr = *params.arrays[a];
            const std::size_t stride = std::max<std::size_t>(1, arr.size() / 5);
            for (std::size_t i = 0; i < arr.size(); i += stride) {
                const double keep = arr[i];
                arr[i] = keep + h;
                const double lp = full_loss(m, batch, reg);
                arr[i] = keep - h;
                const double lm = full_loss(m, batch, reg);
                arr[i] = keep;
                const double fd = (lp - lm) / (2 * h);
                const double got = grads.arrays[a][i];
                INFO(params.names[a] << "[" << i << "] analytic=" << got << " fd=" << fd);
                REQUIRE(std::abs(got - fd) <=
                        1e-4 * std::max(std::abs(got), std::abs(fd)) + 1e-8);
            }
        }
    }
    SECTION("chunked parallel reduction matches the serial path") {
        auto m = init_model(micro_config(), 6);
        std::vector<Sample> batch;
        for (int i = 0; i < 7; ++i) batch.push_back(random_sample(m, 100 + i));
        auto g1 = make_gradient_set(m);
        auto g2 = make_gradient_set(m);
        auto l1 = backward(m, batch, 1e-3, g1, 1);
        auto l2 = backward(m, batch, 1e-3, g2, 3);
        REQUIRE(l1.mse == Approx(l2.mse).epsilon(1e-13));
        for (std::size_t a = 0; a < g1.arrays.size(); ++a)
            for (std::size_t i = 0; i < g1.arrays[a].size(); ++i)
                REQUIRE(g1.arrays[a][i] == Approx(g2.arrays[a][i]).margin(1e-12));
    }
}

TEST_CASE("adam") {
    auto m = init_model(micro_config(1), 8);
    auto params = trainable_parameters(m);

    SECTION("first step moves by about lr in the gradient sign direction") {
        auto st = make_adam_state(m);
        auto grads = make_gradient_set(m);
        grads.arrays[0][0] = 0.37;  // arbitrary nonzero gradient
        const double before = (*params.arrays[0])[0];
        adam_step(st, params, grads, 0.01);
        const double update = (*params.arrays[0])[0] - before;
        REQUIRE(update == Approx(-0.01).epsilon(1e-6));
    }
    SECTION("zero gradients leave parameters unchanged") {
        auto st = make_adam_state(m);
        auto grads = make_gradient_set(m);
        std::vector<std::vector<double>> before;
        for (auto* a : params.arrays) before.push_back(*a);
        adam_step(st, params, grads, 0.01);
        std::size_t idx = 0;
        for (auto* a : params.arrays) REQUIRE(*a == before[idx++]);
    }
    SECTION("identical runs produce identical trajectories") {
        auto m1 = init_model(micro_config(1), 9);
        auto m2 = init_model(micro_config(1), 9);
        auto p1 = trainable_parameters(m1);
        auto p2 = trainable_parameters(m2);
        auto s1 = make_adam_state(m1);
        auto s2 = make_adam_state(m2);
        std::mt19937_64 rng(17);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (int step = 0; step < 5; ++step) {
            auto g = make_gradient_set(m1);
            for (auto& arr : g.arrays)
                for (auto& v : arr) v = u(rng);
            adam_step(s1, p1, g, 0.005);
            adam_step(s2, p2, g, 0.005);
        }
        for (int a = 0; a < p1.size(); ++a) REQUIRE(*p1.arrays[a] == *p2.arrays[a]);
    }
}

TEST_CASE("plateau scheduler") {
    SECTION("strictly decreasing losses never halve") {
        PlateauScheduler s(20, 0.5);
        double lr = 0.005;
        double loss = 1.0;
        for (int e = 0; e < 100; ++e) {
            lr = s.observe(loss, lr);
            loss *= 0.99;
        }
        REQUIRE(lr == 0.005);
    }
    SECTION("constant loss for 21 epochs halves once, at epoch 21") {
        PlateauScheduler s(20, 0.5);
        double lr = 0.005;
        for (int e = 1; e <= 21; ++e) {
            const double before = lr;
            lr = s.observe(1.0, lr);
            if (e < 21)
                REQUIRE(lr == before);
            else
                REQUIRE(lr == Approx(0.0025));
        }
    }
    SECTION("constant loss for 42 epochs halves twice") {
        PlateauScheduler s(20, 0.5);
        double lr = 0.005;
        for (int e = 1; e <= 42; ++e) lr = s.observe(1.0, lr);
        REQUIRE(lr == Approx(0.005 * 0.25));
    }
}

TEST_CASE("two-pass training on a rank-one problem") {
    // constant boundary data: after normalization every sample is identical,
    // so a K = 1 model must drive the MSE to ~0 quickly
    TrialConfig cfg;
    cfg.name = "sanity";
    cfg.n_networks = 1;
    cfg.head_depth = 2;
    cfg.n_weight_pairs = 1;
    cfg.tt_d = 3;
    cfg.ranks = {1, 4, 4, 1};
    cfg.n_rad = 16;
    cfg.n_eta = 16;
    cfg.n_w = 8;
    auto m = init_model(cfg, 12);

    auto geom = build_geometry({1.0, 1.0, 2.0});
    auto grid = make_grid(geom, cfg.n_rad, cfg.n_eta, cfg.n_w);
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> unit(0.5, 2.0);
    std::vector<Sample> samples;
    for (int i = 0; i < 50; ++i) {
        Sample s;
        const double c = unit(rng);
        s.lambda = {1.0 + i * 0.1, 1.0, 2.0};
        s.g = constant_boundary(geom, grid, c);
        s.rho.n_rad = cfg.n_rad;
        s.rho.n_eta = cfg.n_eta;
        s.rho.values.assign(std::size_t(cfg.n_rad) * cfg.n_eta, two_pi * c);
        s.norm = two_pi * c;  // mean |rho|
        for (auto& v : s.rho.values) v /= s.norm;
        for (auto& v : s.g.inner) v /= s.norm;
        for (auto& v : s.g.outer) v /= s.norm;
        samples.push_back(std::move(s));
    }
    std::vector<Sample> val(samples.begin() + 40, samples.end());
    std::span<const Sample> train_span(samples.data(), 40);

    TrainConfig tc;
    tc.batch_size = 8;
    tc.epochs_pass1 = 150;
    tc.epochs_pass2 = 50;
    tc.seed = 99;
    auto result = train(m, train_span, val, tc);

    SECTION("validation error collapses") {
        REQUIRE(result.log.back().val_loss < 1e-4);
    }
    SECTION("training loss trend is non-increasing over pass 1") {
        std::vector<double> pass1;
        for (const auto& e : result.log)
            if (e.pass == 1) pass1.push_back(e.train_loss);
        auto window_mean = [&](std::size_t begin) {
            double s = 0.0;
            for (std::size_t i = begin; i < begin + 20; ++i) s += pass1[i];
            return s / 20.0;
        };
        REQUIRE(window_mean(pass1.size() - 20) <= window_mean(0) * 1.05);
    }
    SECTION("pass boundary resets the learning rate and drops the regularizer") {
        double prev_lr = 1e9;
        for (const auto& e : result.log) {
            if (e.pass == 2) {
                REQUIRE(e.reg_term == 0.0);
            }
            if (e.epoch == tc.epochs_pass1 + 1) {
                REQUIRE(e.lr == tc.lr_second_pass);
                prev_lr = 1e9;  // monotonicity restarts per pass
            }
            REQUIRE(e.lr <= prev_lr * 1.0000001);
            prev_lr = e.lr;
        }
    }
    SECTION("same seed reproduces the log bitwise") {
        auto m2 = init_model(cfg, 12);
        auto r2 = train(m2, train_span, val, tc);
        REQUIRE(r2.log.size() == result.log.size());
        for (std::size_t i = 0; i < r2.log.size(); ++i) {
            REQUIRE(r2.log[i].train_loss == result.log[i].train_loss);
            REQUIRE(r2.log[i].val_loss == result.log[i].val_loss);
            REQUIRE(r2.log[i].lr == result.log[i].lr);
        }
    }
}

TEST_CASE("normalization neutrality at inference") {
    auto m = init_model(micro_config(), 30);
    auto s = random_sample(m, 31);
    const double scale = 4.0;  // a power of two commutes with rounding
    auto g_scaled = s.g;
    for (auto& v : g_scaled.inner) v /= scale;
    for (auto& v : g_scaled.outer) v /= scale;
    auto a = stnn_forward(m, s.lambda, s.g);
    auto b = stnn_forward(m, s.lambda, g_scaled);
    for (std::size_t i = 0; i < a.values.size(); ++i)
        REQUIRE(a.values[i] == b.values[i] * scale);
}
