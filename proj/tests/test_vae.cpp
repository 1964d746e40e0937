#include "spader/dataset.hpp"
#include "spader/vae.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <numeric>

using namespace spader;
using namespace spader::testing;

namespace {

VaeConfig tiny_config() {
    VaeConfig c;
    c.image_height = c.image_width = 8;
    c.latent_dim = 4;
    c.channels = {2, 3, 3, 4};
    return c;
}

void zero_all(VaeParams& p) {
    for (auto& [name, t] : p.tensors()) t->fill(0.0);
}

/// Simpson's rule for KL(N(mu, s^2) || N(0, 1)) in one dimension.
double kl_quadrature(double mu, double logvar) {
    const double s = std::exp(0.5 * logvar);
    const double lo = mu - 12.0 * s, hi = mu + 12.0 * s;
    const int n = 4000;
    const double h = (hi - lo) / n;
    double total = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double z = lo + i * h;
        const double log_q = -0.5 * std::log(2.0 * M_PI) - 0.5 * logvar - 0.5 * (z - mu) * (z - mu) / (s * s);
        const double log_p = -0.5 * std::log(2.0 * M_PI) - 0.5 * z * z;
        const double f = std::exp(log_q) * (log_q - log_p);
        total += f * (i == 0 || i == n ? 1.0 : (i % 2 ? 4.0 : 2.0));
    }
    return total * h / 3.0;
}

std::vector<ImageSample> glyph_samples(int digit, std::size_t count, std::uint64_t seed, Role role) {
    Rng rng(seed);
    const RawDigits raw = synth_glyphs(rng, count);
    std::vector<ImageSample> out;
    for (std::size_t i = 0; i < raw.images.size(); ++i) {
        if (raw.labels[i] == digit) out.push_back({raw.images[i], digit, role, out.size()});
    }
    return out;
}

}  // namespace

TEST_CASE("encoder with zero weights gives a standard normal posterior") {
    Rng rng(1);
    VaeParams p = init_vae(tiny_config(), rng);
    zero_all(p);
    const LatentStats s = encode(random_tensor({1, 8, 8}, rng, 0, 1), p);
    CHECK(s.mu == Tensor({4}));
    CHECK(s.logvar == Tensor({4}));
}

TEST_CASE("architecture follows the configured channels") {
    Rng rng(2);
    const VaeParams p = init_vae(VaeConfig{}, rng);
    CHECK(p.encoder.size() == 4);
    CHECK(p.decoder.size() == 4);
    CHECK(p.latent_dim == 128);
    CHECK(p.feature_shape() == Shape{128, 6, 6});
    CHECK(p.mu_head.weight.shape() == Shape{128, 128 * 36});
    CHECK(p.logvar_head.weight.shape() == p.mu_head.weight.shape());
}

TEST_CASE("encode and decode contracts") {
    Rng rng(3);
    const VaeParams p = init_vae(tiny_config(), rng);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor x = random_tensor({1, 8, 8}, rng, 0, 1);
        const LatentStats a = encode(x, p), b = encode(x, p);
        CHECK(a.mu == b.mu);
        CHECK(a.logvar == b.logvar);
        for (double v : a.mu.values()) CHECK(std::isfinite(v));
        for (double v : a.logvar.values()) CHECK(std::isfinite(v));

        const Tensor z = random_tensor({4}, rng, -3, 3);
        const Tensor y = decode(z, p);
        CHECK(y.shape() == Shape{1, 8, 8});
        CHECK(y == decode(z, p));
        for (double v : y.values()) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
        }
    }
    CHECK_THROWS_AS(encode(Tensor({1, 9, 8}), p), ShapeError);
    CHECK_THROWS_AS(decode(Tensor({5}), p), ShapeError);
}

TEST_CASE("reparameterize") {
    Rng rng(4);
    const Tensor mu = Tensor::from({0.3, -1.2}), tight = Tensor::from({-200.0, -200.0});
    const Tensor z = reparameterize(mu, tight, rng);
    CHECK(z[0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(z[1] == doctest::Approx(-1.2).epsilon(1e-12));

    Rng a(5), b(5);
    const Tensor eps = reparameterize(Tensor({3}), Tensor({3}), a);
    for (std::size_t i = 0; i < 3; ++i) CHECK(eps[i] == standard_normal(b));

    const std::size_t n = 100000;
    const Tensor m1 = Tensor::from({1.5}), lv = Tensor::from({std::log(4.0)});
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += reparameterize(m1, lv, rng)[0];
    CHECK(std::fabs(sum / n - 1.5) < 3.0 * 2.0 / std::sqrt(static_cast<double>(n)));
    CHECK_THROWS_AS(reparameterize(Tensor({2}), Tensor({3}), rng), ShapeError);
}

TEST_CASE("kl divergence") {
    CHECK(kl_divergence(Tensor({3}), Tensor({3})) == 0.0);
    CHECK(kl_divergence(Tensor::from({1}), Tensor::from({0})) == 0.5);
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor mu = random_tensor({3}, rng, -2, 2), lv = random_tensor({3}, rng, -2, 1.5);
        double oracle = 0.0;
        for (std::size_t d = 0; d < 3; ++d) oracle += kl_quadrature(mu[d], lv[d]);
        const double kl = kl_divergence(mu, lv);
        CHECK(kl >= 0.0);
        CHECK(std::fabs(kl - oracle) < 1e-3);
    }
}

TEST_CASE("elbo is zero for a perfect reconstruction under the prior") {
    ad::Tape tape;
    Rng rng(7);
    auto x = tape.constant(random_tensor({1, 8, 8}, rng, 0, 1));
    VaeGraph g;
    g.mu = tape.constant(Tensor({4}));
    g.logvar = tape.constant(Tensor({4}));
    g.reconstruction = x;
    CHECK(elbo_graph(g, x, 1.0).value().item() == 0.0);

    const VaeParams p = init_vae(tiny_config(), rng);
    for (int i = 0; i < 10; ++i) CHECK(elbo_loss(random_tensor({1, 8, 8}, rng, 0, 1), p, rng) >= 0.0);
}

TEST_CASE("elbo gradient matches finite differences on a tiny VAE") {
    Rng rng(8);
    VaeParams p = init_vae(tiny_config(), rng);
    for (auto& [name, t] : p.tensors()) {
        for (double& v : t->values()) v += uniform(rng, -0.3, 0.3);  // move biases off zero too
    }
    const Tensor x = random_tensor({2, 1, 8, 8}, rng, 0, 1);
    const Tensor eps = random_tensor({2, 4}, rng, -1, 1);
    auto loss_of = [&](const VaeParams& params, std::vector<Tensor>* grads) {
        ad::Tape tape;
        const VaeVars vars = bind(tape, params, grads != nullptr);
        ad::Var xv = tape.constant(x);
        ad::Var loss = elbo_graph(vae_forward(params, vars, xv, tape.constant(eps)), xv, 1.0);
        if (grads) {
            tape.backward(loss);
            for (const ad::Var& v : vars.flat()) grads->push_back(*v.grad());
        }
        return loss.value().item();
    };
    std::vector<Tensor> analytic;
    loss_of(p, &analytic);
    const auto named = p.tensors();
    REQUIRE(named.size() == analytic.size());
    double worst = 0.0;
    for (std::size_t k = 0; k < named.size(); ++k) {
        Tensor& t = *named[k].second;
        double diff = 0.0, na = 0.0, nn = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double saved = t[i];
            t[i] = saved + 1e-5;
            const double up = loss_of(p, nullptr);
            t[i] = saved - 1e-5;
            const double down = loss_of(p, nullptr);
            t[i] = saved;
            const double numeric = (up - down) / 2e-5;
            diff += (analytic[k][i] - numeric) * (analytic[k][i] - numeric);
            na += analytic[k][i] * analytic[k][i];
            nn += numeric * numeric;
        }
        const double err = std::sqrt(diff) / std::max(std::sqrt(std::max(na, nn)), 1e-12);
        CAPTURE(named[k].first);
        CHECK(err < 1e-5);
        worst = std::max(worst, err);
    }
    MESSAGE("worst relative error " << worst);
}

TEST_CASE("train_vae preconditions") {
    VaeConfig c = tiny_config();
    CHECK_THROWS(train_vae({}, c));
    std::vector<ImageSample> data{{Tensor({1, 8, 8}), 0, Role::normal, 0},
                                  {Tensor({1, 8, 8}), 1, Role::known_anomaly, 1}};
    CHECK_THROWS_WITH_AS(train_vae(data, c), doctest::Contains("known_anomaly"), std::invalid_argument);
    data.pop_back();
    data.push_back({Tensor({1, 7, 8}), 0, Role::normal, 2});
    CHECK_THROWS_AS(train_vae(data, c), ShapeError);
}

TEST_CASE("train_vae is deterministic for a fixed seed") {
    Rng rng(9);
    std::vector<ImageSample> data;
    for (std::uint64_t i = 0; i < 12; ++i) data.push_back({random_tensor({1, 8, 8}, rng, 0, 1), 0, Role::normal, i});
    VaeConfig c = tiny_config();
    c.epochs = 3;
    c.batch_size = 5;
    c.seed = 42;
    const VaeTrainResult a = train_vae(data, c), b = train_vae(data, c);
    const auto ta = a.params.tensors(), tb = b.params.tensors();
    for (std::size_t k = 0; k < ta.size(); ++k) CHECK(*ta[k].second == *tb[k].second);
    CHECK(a.loss_history == b.loss_history);
    CHECK(a.loss_history.size() == 3);
}

TEST_CASE("training reduces the loss and reconstructs normal glyphs better than others") {
    VaeConfig c;
    c.image_height = c.image_width = 28;
    c.latent_dim = 16;
    c.channels = {8, 16, 32, 64};
    c.epochs = 20;
    c.seed = 3;
    const auto train = glyph_samples(0, 200, 11, Role::normal);
    REQUIRE(train.size() == 200);

    Rng init_rng(c.seed);
    const VaeParams initial = init_vae(c, init_rng);
    Rng eval_rng(1);
    double initial_loss = 0.0;
    for (const auto& s : train) initial_loss += elbo_loss(s.pixels, initial, eval_rng);
    initial_loss /= static_cast<double>(train.size());

    const VaeTrainResult r = train_vae(train, c);
    MESSAGE("initial " << initial_loss << " final " << r.loss_history.back());
    CHECK(r.loss_history.back() < 0.7 * initial_loss);

    auto mean_error = [&](const std::vector<ImageSample>& set) {
        Rng rng(2);
        double total = 0.0;
        for (const auto& s : set) {
            const Tensor y = reconstruct(s.pixels, r.params, rng);
            CHECK(y.shape() == s.pixels.shape());
            for (std::size_t i = 0; i < y.size(); ++i) total += std::fabs(y[i] - s.pixels[i]);
        }
        return total / static_cast<double>(set.size());
    };
    const double normal = mean_error(glyph_samples(0, 50, 12, Role::normal));
    double others = 0.0;
    for (int d = 2; d <= 9; ++d) others += mean_error(glyph_samples(d, 10, 13, Role::unknown_anomaly)) / 8.0;
    MESSAGE("held-out normal error " << normal << ", unknown " << others);
    CHECK(normal < others);

    Rng a(4);
    const Tensor x = train.front().pixels;
    CHECK_FALSE(reconstruct(x, r.params, a) == reconstruct(x, r.params, a));
}

TEST_CASE("reconstruct_many matches sequential reconstructions") {
    Rng rng(10);
    const VaeParams p = init_vae(tiny_config(), rng);
    const Tensor x = random_tensor({1, 8, 8}, rng, 0, 1);
    Rng a(77), b(77);
    const auto many = reconstruct_many(x, p, a, 3);
    const LatentStats s = encode(x, p);
    for (const Tensor& y : many) {
        const Tensor z = reparameterize(s.mu, s.logvar, b);
        CHECK(max_abs_diff(y, decode(z, p)) < 1e-12);
    }
}
