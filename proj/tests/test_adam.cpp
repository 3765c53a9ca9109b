#include <cmath>
#include <limits>

#include "doctest.h"
#include "fancl/adam.hpp"
#include "fancl/rng.hpp"
#include "support/reference_adam.hpp"
#include "support/test_util.hpp"

using namespace fancl;
using namespace fancl::testing;

TEST_SUITE("adam") {

TEST_CASE("first step moves by roughly -lr * sign(g)") {
    AdamConfig cfg;
    cfg.weight_decay = 0.0;
    Adam<double> opt(cfg);
    Tensor<double> w({3}, {1.0, -2.0, 0.5});
    const Tensor<double> w0 = w;
    const Tensor<double> g({3}, {0.8, -1.5, 2.0});
    opt.step({{"w", &w, &g}}, 0.01);
    for (int i = 0; i < 3; ++i) {
        // Exact first-step identity: delta = -lr * g / (|g| + eps).
        const double expected = -0.01 * g[i] / (std::abs(g[i]) + cfg.eps);
        CHECK(w[i] - w0[i] == doctest::Approx(expected).epsilon(1e-12));
        CHECK(w[i] - w0[i] == doctest::Approx(-0.01 * (g[i] > 0 ? 1.0 : -1.0)).epsilon(1e-6));
    }
}

TEST_CASE("zero gradient with zero decay leaves parameters untouched") {
    AdamConfig cfg;
    cfg.weight_decay = 0.0;
    Adam<double> opt(cfg);
    Tensor<double> w({2}, {0.7, -0.3});
    const Tensor<double> w0 = w;
    const Tensor<double> g({2});
    opt.step({{"w", &w, &g}}, 0.05);
    opt.step({{"w", &w, &g}}, 0.05);
    CHECK(w == w0);
}

TEST_CASE("matches the scalar trace on a quadratic, decay off and on") {
    for (double wd : {0.0, 0.0005}) {
        CAPTURE(wd);
        AdamConfig cfg;
        cfg.weight_decay = wd;
        Adam<double> opt(cfg);
        Tensor<double> w({1}, {2.0});

        ScalarAdamConfig ref_cfg;
        ref_cfg.weight_decay = wd;
        ScalarAdamState ref_state;
        double ref_w = 2.0;

        for (int step = 0; step < 25; ++step) {
            // Quadratic objective 0.5 * (w - 3)^2 -> gradient w - 3.
            const Tensor<double> g({1}, {w[0] - 3.0});
            opt.step({{"w", &w, &g}}, 0.1);
            ref_w = scalar_adam_step(ref_w, ref_w - 3.0, ref_state, ref_cfg, 0.1);
            CHECK(w[0] == doctest::Approx(ref_w).epsilon(1e-12));
        }
    }
}

TEST_CASE("tensor parameters follow the same per-element trace") {
    Rng rng(9);
    AdamConfig cfg;
    cfg.weight_decay = 0.01;
    Adam<float> opt(cfg);
    Tensor<float> w = random_tensor<float>(rng, {4, 3});

    ScalarAdamConfig ref_cfg;
    ref_cfg.weight_decay = 0.01;
    std::vector<ScalarAdamState> ref_state(12);
    std::vector<double> ref_w(12);
    for (int i = 0; i < 12; ++i) ref_w[i] = w[i];

    for (int step = 0; step < 10; ++step) {
        const Tensor<float> g = random_tensor<float>(rng, {4, 3});
        opt.step({{"w", &w, &g}}, 0.02);
        for (int i = 0; i < 12; ++i) {
            // The optimizer does its arithmetic in double on float storage.
            ref_w[i] = scalar_adam_step(static_cast<double>(static_cast<float>(ref_w[i])),
                                        static_cast<double>(g[i]), ref_state[i], ref_cfg, 0.02);
            CHECK(w[i] == doctest::Approx(ref_w[i]).epsilon(1e-6));
        }
    }
}

TEST_CASE("one shared step counter across parameters") {
    Adam<double> opt;
    Tensor<double> a({1}, {1.0}), b({1}, {1.0});
    const Tensor<double> g({1}, {0.5});
    opt.step({{"a", &a, &g}, {"b", &b, &g}}, 0.01);
    CHECK(opt.steps() == 1);
    opt.step({{"a", &a, &g}}, 0.01);
    CHECK(opt.steps() == 2);
    CHECK(opt.slot_names() == std::vector<std::string>{"a", "b"});
}

TEST_CASE("non-finite gradients name the parameter") {
    Adam<double> opt;
    Tensor<double> w({1}, {1.0});
    const Tensor<double> g({1}, {std::numeric_limits<double>::quiet_NaN()});
    CHECK_THROWS_WITH_AS(opt.step({{"theta/stage0/conv_w", &w, &g}}, 0.01),
                         doctest::Contains("theta/stage0/conv_w"), NumericError);
}

TEST_CASE("gradient dims must match the parameter") {
    Adam<double> opt;
    Tensor<double> w({2});
    const Tensor<double> g({3});
    CHECK_THROWS_AS(opt.step({{"w", &w, &g}}, 0.01), ShapeError);
}

TEST_CASE("restored slots continue the trace bit-exactly") {
    Adam<double> a, b;
    Tensor<double> wa({2}, {1.0, -1.0});
    const Tensor<double> g1({2}, {0.3, 0.6});
    a.step({{"w", &wa, &g1}}, 0.1);

    // Fresh optimizer picking up from a's state and parameter values.
    Tensor<double> wb = wa;
    b.restore_slot("w", a.moment1("w"), a.moment2("w"));
    b.restore_steps(a.steps());

    const Tensor<double> g2({2}, {-0.2, 0.1});
    a.step({{"w", &wa, &g2}}, 0.1);
    b.step({{"w", &wb, &g2}}, 0.1);
    CHECK(wa == wb);
    CHECK(a.moment1("w") == b.moment1("w"));
    CHECK(a.moment2("w") == b.moment2("w"));
}

}  // TEST_SUITE
