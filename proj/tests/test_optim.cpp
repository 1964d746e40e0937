#include "spader/optim.hpp"

#include <doctest.h>

#include <cmath>

using namespace spader;

TEST_CASE("adam leaves parameters alone under a zero gradient") {
    Tensor p = Tensor::from({0.5, -1.0});
    const Tensor g({2});
    AdamState state;
    const ParamRef refs[] = {{"p", &p, &g}};
    for (int i = 0; i < 3; ++i) adam_step(refs, state, {});
    CHECK(p == Tensor::from({0.5, -1.0}));
    CHECK(state.step == 3);
}

TEST_CASE("adam step from a known state matches the hand formula") {
    const AdamConfig cfg{};
    Tensor p = Tensor::from({0.5});
    const Tensor g = Tensor::from({0.2});
    AdamState state;
    state.step = 3;
    state.first_moment = {Tensor::from({0.05})};
    state.second_moment = {Tensor::from({0.002})};
    const ParamRef refs[] = {{"p", &p, &g}};
    adam_step(refs, state, cfg);

    const double m = 0.9 * 0.05 + 0.1 * 0.2;
    const double v = 0.999 * 0.002 + 0.001 * 0.04;
    const double m_hat = m / (1.0 - std::pow(0.9, 4));
    const double v_hat = v / (1.0 - std::pow(0.999, 4));
    CHECK(p[0] == doctest::Approx(0.5 - 1e-3 * m_hat / (std::sqrt(v_hat) + 1e-8)).epsilon(1e-14));
    CHECK(state.first_moment[0][0] == doctest::Approx(m).epsilon(1e-15));
    CHECK(state.second_moment[0][0] == doctest::Approx(v).epsilon(1e-15));
}

TEST_CASE("adam descends a one-parameter quadratic") {
    Tensor p = Tensor::from({3.0});
    Tensor g({1});
    AdamState state;
    const ParamRef refs[] = {{"p", &p, &g}};
    const double start = (p[0] - 1.0) * (p[0] - 1.0);
    for (int i = 0; i < 100; ++i) {
        g[0] = 2.0 * (p[0] - 1.0);
        adam_step(refs, state, {.lr = 0.05});
    }
    CHECK((p[0] - 1.0) * (p[0] - 1.0) < 0.1 * start);
}

TEST_CASE("adam names the parameter with a missing gradient") {
    Tensor a = Tensor::from({1.0}), b = Tensor::from({2.0});
    const Tensor ga = Tensor::from({0.1});
    AdamState state;
    const ParamRef refs[] = {{"encoder.0.weight", &a, &ga}, {"head.bias", &b, nullptr}};
    try {
        adam_step(refs, state, {});
        FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("head.bias") != std::string::npos);
    }
    CHECK(a[0] == 1.0);  // nothing updated before the check failed
}
