#include "test_util.hpp"

#include <doctest.h>

using namespace spader;
using namespace spader::testing;
namespace ad = spader::ad;

TEST_CASE("tensor construction checks element count") {
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
    const Tensor t({2, 3}, 1.5);
    CHECK(t.size() == 6);
    CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
    CHECK_THROWS_AS(t.reshaped({4}), ShapeError);
    CHECK(Tensor::scalar(2.0).item() == 2.0);
    CHECK_THROWS(t.item());
}

TEST_CASE("conv2d window sums") {
    ad::Tape tape;
    auto x = tape.constant(Tensor({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
    auto k = tape.constant(Tensor({1, 1, 2, 2}, 1.0));
    auto b = tape.constant(Tensor({1}, 0.0));
    const Tensor y = ad::conv2d(x, k, b, 1, 0).value();
    CHECK(y == Tensor({1, 2, 2}, {12, 16, 24, 28}));
}

TEST_CASE("conv2d with a centred delta kernel is the identity") {
    Rng rng(1);
    ad::Tape tape;
    const Tensor input = random_tensor({1, 6, 7}, rng);
    Tensor delta({1, 1, 3, 3});
    delta[4] = 1.0;
    auto y = ad::conv2d(tape.constant(input), tape.constant(delta), tape.constant(Tensor({1})), 1, 1);
    CHECK(y.value().reshaped({1, 6, 7}) == input);
}

TEST_CASE("conv2d matches the naive loop on every shape up to 8x8") {
    Rng rng(2);
    for (std::size_t h = 1; h <= 8; ++h) {
        for (std::size_t w = 1; w <= 8; ++w) {
            for (std::size_t k : {1, 2, 3}) {
                for (std::size_t stride : {1, 2, 3}) {
                    for (std::size_t pad : {0, 1}) {
                        if (h + 2 * pad < k || w + 2 * pad < k) continue;
                        const Tensor x = random_tensor({2, h, w}, rng);
                        const Tensor kern = random_tensor({3, 2, k, k}, rng);
                        const Tensor bias = random_tensor({3}, rng);
                        ad::Tape tape;
                        const Tensor y = ad::conv2d(tape.constant(x), tape.constant(kern), tape.constant(bias),
                                                    stride, pad).value();
                        const Tensor ref = naive_conv(x, kern, bias, stride, pad);
                        REQUIRE(y.shape() == ref.shape());
                        CHECK(max_abs_diff(y, ref) <= 1e-12);
                    }
                }
            }
        }
    }
}

TEST_CASE("batched conv2d equals per-sample conv2d bit for bit") {
    Rng rng(3);
    const Tensor kern = random_tensor({4, 2, 3, 3}, rng);
    const Tensor bias = random_tensor({4}, rng);
    const Tensor batch = random_tensor({3, 2, 9, 9}, rng);
    ad::Tape tape;
    const Tensor all = ad::conv2d(tape.constant(batch), tape.constant(kern), tape.constant(bias), 2, 1).value();
    for (std::size_t n = 0; n < 3; ++n) {
        Tensor one({2, 9, 9});
        std::copy_n(batch.data() + n * 162, 162, one.data());
        const Tensor y = ad::conv2d(tape.constant(one), tape.constant(kern), tape.constant(bias), 2, 1).value();
        CHECK(std::equal(y.values().begin(), y.values().end(), all.data() + n * y.size()));
    }
}

TEST_CASE("conv2d rejects bad geometry with the shapes in the message") {
    ad::Tape tape;
    auto x = tape.constant(Tensor({2, 5, 5}));
    auto k = tape.constant(Tensor({1, 3, 3, 3}));
    auto b = tape.constant(Tensor({1}));
    try {
        ad::conv2d(x, k, b, 1, 0);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2,5,5]") != std::string::npos);
        CHECK(msg.find("[1,3,3,3]") != std::string::npos);
    }
    auto k1 = tape.constant(Tensor({1, 2, 7, 7}));
    CHECK_THROWS_AS(ad::conv2d(x, k1, b, 1, 0), ShapeError);
    auto k2 = tape.constant(Tensor({1, 2, 3, 3}));
    CHECK_THROWS(ad::conv2d(x, k2, b, 0, 0));
}

TEST_CASE("dense examples and loop oracle") {
    ad::Tape tape;
    auto y = ad::dense(tape.constant(Tensor::from({1, 2})), tape.constant(Tensor({2, 2}, {1, 1, 2, 0})),
                       tape.constant(Tensor::from({0, 1})));
    CHECK(y.value() == Tensor::from({3, 3}));

    Rng rng(4);
    const Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    const Tensor v = random_tensor({3}, rng);
    CHECK(ad::dense(tape.constant(v), tape.constant(eye), tape.constant(Tensor({3}))).value() == v);

    for (int trial = 0; trial < 10; ++trial) {
        const Tensor x = random_tensor({13}, rng), w = random_tensor({7, 13}, rng), b = random_tensor({7}, rng);
        const Tensor out = ad::dense(tape.constant(x), tape.constant(w), tape.constant(b)).value();
        for (std::size_t i = 0; i < 7; ++i) {
            double s = b[i];
            for (std::size_t j = 0; j < 13; ++j) s += w[i * 13 + j] * x[j];
            CHECK(out[i] == doctest::Approx(s).epsilon(1e-14));
        }
    }
    CHECK_THROWS_AS(ad::dense(tape.constant(Tensor({3})), tape.constant(Tensor({2, 2})), tape.constant(Tensor({2}))),
                    ShapeError);
}

TEST_CASE("elementwise and reduction definitions") {
    ad::Tape tape;
    auto v = tape.constant(Tensor::from({-1, 0, 2}));
    CHECK(ad::relu(v).value() == Tensor::from({0, 0, 2}));
    CHECK(ad::sigmoid(tape.constant(Tensor::from({0}))).value()[0] == 0.5);
    CHECK(ad::abs(tape.constant(Tensor::from({-3, 4}))).value() == Tensor::from({3, 4}));
    CHECK(ad::sum(tape.constant(Tensor({2, 2}, {1, 2, 3, 4}))).value().item() == 10.0);
    CHECK(ad::mean(tape.constant(Tensor::from({2, 4}))).value().item() == 3.0);
    CHECK(ad::sum(tape.constant(Tensor({5}))).value().item() == 0.0);
    CHECK(ad::reduce(ad::Reduction::mean, tape.constant(Tensor::from({2, 4}))).value().item() == 3.0);
    CHECK(ad::elementwise(ad::Elementwise::square, v).value() == Tensor::from({1, 0, 4}));
    CHECK_THROWS_AS(ad::add(v, tape.constant(Tensor({2}))), ShapeError);
    CHECK_THROWS(ad::elementwise(ad::Elementwise::mul, v));

    // sigmoid stays finite and ordered at the extremes
    const Tensor s = ad::sigmoid(tape.constant(Tensor::from({-800, 800}))).value();
    CHECK(s[0] == 0.0);
    CHECK(s[1] == 1.0);
}

TEST_CASE("backward basics") {
    ad::Tape tape;
    auto x = tape.leaf(Tensor({2, 3}, 0.7));
    tape.backward(ad::sum(x));
    CHECK(*x.grad() == Tensor({2, 3}, 1.0));

    ad::Tape t2;
    auto y = t2.leaf(Tensor::from({1, 2}));
    t2.backward(ad::sum(ad::square(y)));
    CHECK(*y.grad() == Tensor::from({2, 4}));

    auto detached = t2.constant(Tensor::from({1, 2}));
    t2.backward(ad::sum(ad::mul(y, detached)));
    CHECK(detached.grad() == nullptr);
    CHECK(*y.grad() == Tensor::from({1, 2}));

    CHECK_THROWS_AS(t2.backward(ad::square(y)), ad::TapeError);

    ad::Tape other;
    auto foreign = other.leaf(Tensor::from({1}));
    CHECK_THROWS(ad::add(y, foreign));
}

TEST_CASE("abs subgradient at zero is zero") {
    ad::Tape tape;
    auto x = tape.leaf(Tensor::from({-2, 0, 3}));
    tape.backward(ad::sum(ad::abs(x)));
    CHECK(*x.grad() == Tensor::from({-1, 0, 1}));
}

TEST_CASE("every primitive passes the finite-difference check") {
    using V = std::vector<ad::Var>;
    Rng rng(5);
    constexpr double tol = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + rng() % 6, m = 1 + rng() % 5;
        const Shape s{n, m};
        const Tensor w = random_tensor(s, rng);  // fixed downstream weights so gradients are not uniform
        auto weighted = [w](ad::Tape& t, ad::Var v) { return ad::sum(ad::mul(v, t.constant(w))); };

        CAPTURE(trial);
        CHECK(gradient_error([&](ad::Tape& t, const V& v) { return weighted(t, ad::relu(v[0])); },
                             {away_from_zero(s, rng)}) < tol);
        CHECK(gradient_error([&](ad::Tape& t, const V& v) { return weighted(t, ad::abs(v[0])); },
                             {away_from_zero(s, rng)}) < tol);
        CHECK(gradient_error([&](ad::Tape& t, const V& v) { return weighted(t, ad::sigmoid(v[0])); },
                             {random_tensor(s, rng, -4, 4)}) < tol);
        CHECK(gradient_error([&](ad::Tape& t, const V& v) { return weighted(t, ad::exp(v[0])); },
                             {random_tensor(s, rng)}) < tol);
        CHECK(gradient_error([&](ad::Tape& t, const V& v) { return weighted(t, ad::square(v[0])); },
                             {random_tensor(s, rng)}) < tol);
        CHECK(gradient_error([&](ad::Tape& t, const V& v) { return weighted(t, ad::add(v[0], v[1])); },
                             {random_tensor(s, rng), random_tensor(s, rng)}) < tol);
        CHECK(gradient_error([&](ad::Tape& t, const V& v) { return weighted(t, ad::sub(v[0], v[1])); },
                             {random_tensor(s, rng), random_tensor(s, rng)}) < tol);
        CHECK(gradient_error([&](ad::Tape& t, const V& v) { return weighted(t, ad::mul(v[0], v[1])); },
                             {random_tensor(s, rng), random_tensor(s, rng)}) < tol);
        CHECK(gradient_error([&](ad::Tape& t, const V& v) { return weighted(t, ad::scale(v[0], -2.5)); },
                             {random_tensor(s, rng)}) < tol);
        CHECK(gradient_error([&](ad::Tape& t, const V& v) { return weighted(t, ad::add_scalar(v[0], 0.3)); },
                             {random_tensor(s, rng)}) < tol);
        CHECK(gradient_error([&](ad::Tape&, const V& v) { return ad::mean(ad::square(v[0])); },
                             {random_tensor(s, rng)}) < tol);
        CHECK(gradient_error(
                  [&](ad::Tape& t, const V& v) {
                      return ad::sum(ad::mul(ad::reshape(v[0], {m, n}), t.constant(w.reshaped({m, n}))));
                  },
                  {random_tensor(s, rng)}) < tol);

        const std::size_t in = 1 + rng() % 6, out = 1 + rng() % 4, batch = 1 + rng() % 3;
        const Tensor dw = random_tensor({batch, out}, rng);
        CHECK(gradient_error(
                  [&](ad::Tape& t, const V& v) { return ad::sum(ad::mul(ad::dense(v[0], v[1], v[2]), t.constant(dw))); },
                  {random_tensor({batch, in}, rng), random_tensor({out, in}, rng), random_tensor({out}, rng)}) < tol);

        const std::size_t c = 1 + rng() % 2, co = 1 + rng() % 3, h = 3 + rng() % 4, wd = 3 + rng() % 4;
        const std::size_t stride = 1 + rng() % 2, pad = rng() % 2;
        ad::Tape probe;
        const Shape conv_out = ad::conv2d(probe.constant(Tensor({2, c, h, wd})), probe.constant(Tensor({co, c, 3, 3})),
                                          probe.constant(Tensor({co})), stride, pad).shape();
        const Tensor cw = random_tensor(conv_out, rng);
        CHECK(gradient_error(
                  [&](ad::Tape& t, const V& v) {
                      return ad::sum(ad::mul(ad::conv2d(v[0], v[1], v[2], stride, pad), t.constant(cw)));
                  },
                  {random_tensor({2, c, h, wd}, rng), random_tensor({co, c, 3, 3}, rng), random_tensor({co}, rng)}) <
              tol);

        const Tensor uw = random_tensor({c, h + 2, wd + 3}, rng);
        CHECK(gradient_error(
                  [&](ad::Tape& t, const V& v) {
                      return ad::sum(ad::mul(ad::upsample_nearest(v[0], h + 2, wd + 3), t.constant(uw)));
                  },
                  {random_tensor({c, h, wd}, rng)}) < tol);
    }
}

TEST_CASE("upsample_nearest picks floor(i*h/H)") {
    ad::Tape tape;
    const Tensor y = ad::upsample_nearest(tape.constant(Tensor({1, 2, 2}, {1, 2, 3, 4})), 3, 3).value();
    CHECK(y == Tensor({1, 3, 3}, {1, 1, 2, 1, 1, 2, 3, 3, 4}));
}

TEST_CASE("grad_wrt reaches intermediate activations only") {
    Rng rng(6);
    ad::Tape tape;
    auto w = tape.leaf(random_tensor({3, 4}, rng));
    auto x = tape.leaf(random_tensor({4}, rng));
    auto a = ad::relu(ad::dense(x, w, tape.constant(Tensor({3}))));
    CHECK(tape.grad_wrt(ad::sum(a), a) == Tensor({3}, 1.0));
    CHECK(tape.grad_wrt(ad::scale(ad::sum(a), -1.0), a) == Tensor({3}, -1.0));
    CHECK(w.grad() == nullptr);

    auto out = ad::sum(a);
    auto later = ad::square(a);
    CHECK_THROWS_AS(tape.grad_wrt(out, later), ad::TapeError);
    ad::Tape other;
    auto stranger = other.leaf(Tensor::from({1}));
    CHECK_THROWS(tape.grad_wrt(ad::sum(a), stranger));
}

TEST_CASE("grad_wrt through a convolution matches finite differences") {
    Rng rng(7);
    const Tensor k = random_tensor({2, 3, 3, 3}, rng), b = random_tensor({2}, rng), dw = random_tensor({2, 4, 4}, rng);
    auto f = [&](ad::Tape& t, ad::Var a) {
        return ad::sum(ad::mul(ad::sigmoid(ad::conv2d(a, t.constant(k), t.constant(b), 1, 1)), t.constant(dw)));
    };
    const Tensor a0 = random_tensor({3, 4, 4}, rng);
    ad::Tape tape;
    auto upstream = tape.leaf(random_tensor({3, 4, 4}, rng));
    auto a = ad::add(upstream, tape.constant(a0));
    const Tensor g = tape.grad_wrt(f(tape, a), a);

    const double err = gradient_error([&](ad::Tape& t, const std::vector<ad::Var>& v) { return f(t, v[0]); },
                                      {a.value()});
    CHECK(err < 1e-6);
    ad::Tape check;
    auto leaf = check.leaf(a.value());
    check.backward(f(check, leaf));
    CHECK(max_abs_diff(g, *leaf.grad()) == 0.0);
}

TEST_CASE("backward is deterministic and replayable") {
    Rng rng(8);
    const Tensor x0 = random_tensor({2, 1, 6, 6}, rng), k0 = random_tensor({3, 1, 3, 3}, rng);
    auto run = [&] {
        ad::Tape tape;
        auto x = tape.leaf(x0);
        auto k = tape.leaf(k0);
        auto loss = ad::sum(ad::square(ad::conv2d(x, k, tape.constant(Tensor({3})), 2, 1)));
        tape.backward(loss);
        const Tensor first = *k.grad();
        tape.zero_grad();
        tape.backward(loss);
        CHECK(*k.grad() == first);
        return first;
    };
    CHECK(run() == run());
}
