#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mspt/adam.hpp"

using namespace mspt;

namespace {

std::vector<Param> single(double w, bool with_grad, double g = 0.0) {
    Tensor t = Tensor::from_values(1, 1, {w});
    t.set_requires_grad(true);
    if (with_grad) t.accumulate_grad(&g, 1);
    return {{"w", t}};
}

} // namespace

TEST_CASE("zero gradient and zero weight decay leave the parameter unchanged") {
    auto params = single(1.25, true, 0.0);
    AdamConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.0;
    Adam opt(cfg);
    opt.step(params);
    CHECK(params[0].value.item() == 1.25);
}

TEST_CASE("lr = 0 is the identity even with weight decay and gradients") {
    auto params = single(0.7, true, 3.0);
    AdamConfig cfg;
    cfg.lr = 0.0;
    cfg.weight_decay = 1e-2;
    Adam opt(cfg);
    opt.step(params);
    opt.step(params);
    CHECK(params[0].value.item() == 0.7);
}

TEST_CASE("first step approximates -lr * sign(g)") {
    for (double g : {2.5, -0.3, 12.0}) {
        auto params = single(0.0, true, g);
        AdamConfig cfg;
        cfg.lr = 0.01;
        cfg.weight_decay = 0.0;
        Adam opt(cfg);
        opt.step(params);
        CHECK(params[0].value.item() ==
              doctest::Approx(-cfg.lr * (g > 0 ? 1.0 : -1.0)).epsilon(1e-6));
    }
}

TEST_CASE("two steps on f(w)=w^2 match a hand-stepped scalar oracle") {
    AdamConfig cfg;
    cfg.lr = 0.1;
    cfg.beta1 = 0.9;
    cfg.beta2 = 0.999;
    cfg.eps = 1e-8;
    cfg.weight_decay = 0.0;

    // Independent scalar Adam, stepped by hand.
    double w_ref = 1.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 2; ++t) {
        const double g = 2.0 * w_ref;
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        const double mh = m / (1.0 - std::pow(cfg.beta1, t));
        const double vh = v / (1.0 - std::pow(cfg.beta2, t));
        w_ref -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }

    auto params = single(1.0, false);
    Adam opt(cfg);
    for (int t = 0; t < 2; ++t) {
        params[0].value.zero_grad();
        const double g = 2.0 * params[0].value.item();
        params[0].value.accumulate_grad(&g, 1);
        opt.step(params);
    }
    CHECK(params[0].value.item() == doctest::Approx(w_ref).epsilon(1e-12));
}

TEST_CASE("decoupled weight decay shrinks the parameter before the update") {
    auto params = single(2.0, true, 0.0);
    AdamConfig cfg;
    cfg.lr = 0.5;
    cfg.weight_decay = 0.1;
    Adam opt(cfg);
    opt.step(params);
    // zero gradient -> only the decay term acts: w -= lr*wd*w
    CHECK(params[0].value.item() == doctest::Approx(2.0 * (1.0 - 0.05)).epsilon(1e-15));
}

TEST_CASE("a missing gradient is a contract violation naming the parameter") {
    auto params = single(1.0, false);
    Adam opt(AdamConfig{});
    CHECK_THROWS_WITH_AS(opt.step(params), "adam: missing gradient for parameter 'w'", Error);
}
