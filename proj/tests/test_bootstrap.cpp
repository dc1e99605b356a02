#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "eat/bootstrap.hpp"
#include "eat/rng.hpp"

using eat::EmaState;
using eat::ModelState;
using eat::Tensor;

TEST_CASE("tau schedule is linear between its endpoints") {
    EmaState ema;
    ema.tau_start = 0.999;
    ema.tau_end = 0.99999;
    ema.total_steps = 1000;
    CHECK(eat::tau_at(ema, 0) == 0.999);
    CHECK(eat::tau_at(ema, 1000) == 0.99999);
    CHECK(eat::tau_at(ema, 500) == Catch::Approx(0.5 * (0.999 + 0.99999)).margin(1e-15));
    // out-of-range steps clamp to the endpoints
    CHECK(eat::tau_at(ema, -5) == 0.999);
    CHECK(eat::tau_at(ema, 2000) == 0.99999);
    // non-decreasing
    double prev = -1.0;
    for (long long s = 0; s <= 1000; s += 50) {
        double t = eat::tau_at(ema, s);
        CHECK(t >= prev);
        prev = t;
    }

    EmaState bad;
    bad.tau_start = 0.9;
    bad.tau_end = 0.8;
    CHECK_THROWS_AS(eat::tau_at(bad, 0), std::invalid_argument);
}

TEST_CASE("ema fixed points") {
    ModelState teacher, student;
    teacher.add("w", Tensor({3}, {1.0, 2.0, 3.0}));
    student.add("w", Tensor({3}, {7.0, 7.0, 7.0}));

    ModelState unchanged = teacher.clone();
    eat::ema_update(unchanged, student, 1.0);
    CHECK(*unchanged.at("w").data == *teacher.at("w").data);

    ModelState copied = teacher.clone();
    eat::ema_update(copied, student, 0.0);
    CHECK(*copied.at("w").data == *student.at("w").data);
}

TEST_CASE("ema with a stationary student follows the closed form") {
    eat::CounterRng rng(5);
    for (int k : {1, 10, 100}) {
        ModelState teacher, student;
        Tensor t0({4});
        Tensor s({4});
        for (int i = 0; i < 4; ++i) {
            t0[i] = rng.next_gaussian();
            s[i] = rng.next_gaussian();
        }
        teacher.add("w", t0.clone());
        student.add("w", s);
        const double tau = 0.97;
        for (int step = 0; step < k; ++step) eat::ema_update(teacher, student, tau);
        for (int i = 0; i < 4; ++i) {
            double expect = s[i] + std::pow(tau, k) * (t0[i] - s[i]);
            CHECK(teacher.at("w")[i] == Catch::Approx(expect).margin(1e-12));
        }
    }
}

TEST_CASE("ema validates parameter structure") {
    ModelState teacher, student;
    teacher.add("w", Tensor({2}, {1.0, 2.0}));
    student.add("v", Tensor({2}, {1.0, 2.0}));
    CHECK_THROWS_AS(eat::ema_update(teacher, student, 0.5), std::invalid_argument);

    ModelState student2;
    student2.add("w", Tensor({3}));
    CHECK_THROWS_AS(eat::ema_update(teacher, student2, 0.5), std::invalid_argument);

    // shapes preserved through updates
    ModelState student3;
    student3.add("w", Tensor({2}, {5.0, 5.0}));
    eat::ema_update(teacher, student3, 0.5);
    CHECK(teacher.at("w").shape == std::vector<int>{2});
}

TEST_CASE("adamw zero gradient with zero decay leaves parameters unchanged") {
    ModelState params;
    params.add("w", eat::init_const({3}, 2.0));
    eat::GradsByName grads;
    grads.emplace("w", Tensor({3}));
    eat::OptimizerState opt;
    eat::AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    eat::adamw_step(params, grads, opt, cfg, 0.01);
    for (int i = 0; i < 3; ++i) CHECK(params.at("w")[i] == 2.0);
}

TEST_CASE("adamw first step with unit gradient moves by about minus lr") {
    ModelState params;
    params.add("w", eat::init_const({1}, 0.0));
    eat::GradsByName grads;
    grads.emplace("w", Tensor({1}, {1.0}));
    eat::OptimizerState opt;
    eat::AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    const double lr = 1e-3;
    eat::adamw_step(params, grads, opt, cfg, lr);
    // m_hat = v_hat = 1 after bias correction, so the update is -lr/(1 + eps)
    CHECK(params.at("w")[0] == Catch::Approx(-lr / (1.0 + cfg.eps)).margin(1e-15));
    CHECK(params.at("w")[0] == Catch::Approx(-lr).margin(1e-10));
}

TEST_CASE("decoupled weight decay shrinks parameters geometrically") {
    ModelState params;
    params.add("w", eat::init_const({1}, 4.0));
    eat::GradsByName grads;
    grads.emplace("w", Tensor({1}));  // zero gradient
    eat::OptimizerState opt;
    eat::AdamWConfig cfg;  // wd = 0.05
    const double lr = 0.1;
    double expect = 4.0;
    for (int step = 0; step < 5; ++step) {
        eat::adamw_step(params, grads, opt, cfg, lr);
        expect *= 1.0 - lr * 0.05;
        CHECK(params.at("w")[0] == Catch::Approx(expect).margin(1e-14));
    }
}

TEST_CASE("non-finite gradients abort the step and name the parameter") {
    ModelState params;
    params.add("encoder.w", eat::init_const({1}, 1.0));
    eat::GradsByName grads;
    grads.emplace("encoder.w", Tensor({1}, {std::nan("")}));
    eat::OptimizerState opt;
    eat::AdamWConfig cfg;
    CHECK_THROWS_AS(eat::adamw_step(params, grads, opt, cfg, 0.01), eat::NumericalError);
    CHECK_THROWS_WITH(eat::adamw_step(params, grads, opt, cfg, 0.01),
                      Catch::Matchers::ContainsSubstring("encoder.w"));
}

TEST_CASE("gradient clipping rescales to the configured global norm") {
    ModelState params;
    params.add("w", eat::init_const({2}, 0.0));
    eat::GradsByName grads;
    grads.emplace("w", Tensor({2}, {3.0, 4.0}));  // norm 5
    CHECK(eat::grad_global_norm(grads) == Catch::Approx(5.0).margin(1e-15));

    eat::OptimizerState opt;
    eat::AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    cfg.clip_norm = 1.0;
    eat::adamw_step(params, grads, opt, cfg, 1e-3);
    // both coordinates see clipped gradients with the same sign pattern
    CHECK(params.at("w")[0] < 0.0);
    CHECK(params.at("w")[1] < 0.0);
}

TEST_CASE("learning-rate schedule hits its pinned points") {
    eat::LrSchedule s;
    s.peak = 0.0005;
    s.min_lr = 0.000001;
    s.warmup_steps = 100;
    s.total_steps = 1000;
    CHECK(eat::lr_at(s, 0) == 0.0);
    CHECK(eat::lr_at(s, 100) == Catch::Approx(0.0005).margin(1e-18));
    CHECK(eat::lr_at(s, 1000) == Catch::Approx(0.000001).margin(1e-18));

    // continuity at the warmup/cosine junction: both branches give peak
    double warmup_side = s.peak * 100.0 / 100.0;
    double cosine_side = s.min_lr + 0.5 * (s.peak - s.min_lr) * (1.0 + std::cos(0.0));
    CHECK(warmup_side == Catch::Approx(cosine_side).margin(1e-18));
    CHECK(eat::lr_at(s, 99) < s.peak);
    CHECK(eat::lr_at(s, 101) < s.peak);

    // monotone rise during warmup, monotone decay after
    for (long long step = 1; step <= 100; ++step) CHECK(eat::lr_at(s, step) > eat::lr_at(s, step - 1));
    for (long long step = 107; step <= 1000; step += 7) CHECK(eat::lr_at(s, step) < eat::lr_at(s, step - 7));

    CHECK_THROWS_AS(eat::lr_at(s, -1), std::invalid_argument);
}
