#include "spader/dataset.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace spader;
using namespace spader::testing;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> be32(std::uint32_t v) {
    return {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 8),
            static_cast<std::uint8_t>(v)};
}

std::vector<std::uint8_t> idx_images(std::uint32_t magic, std::uint32_t count, std::size_t payload) {
    std::vector<std::uint8_t> out;
    for (std::uint32_t v : {magic, count, 28u, 28u}) {
        const auto b = be32(v);
        out.insert(out.end(), b.begin(), b.end());
    }
    out.resize(out.size() + payload, 0);
    return out;
}

std::vector<std::uint8_t> idx_labels(std::vector<std::uint8_t> labels) {
    std::vector<std::uint8_t> out = be32(kIdxLabelMagic);
    const auto n = be32(static_cast<std::uint32_t>(labels.size()));
    out.insert(out.end(), n.begin(), n.end());
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("spader_test_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("idx parsing") {
    const auto img = idx_images(kIdxImageMagic, 1, 784);
    const RawDigits one = parse_idx(img, idx_labels({7}));
    REQUIRE(one.images.size() == 1);
    CHECK(one.images[0] == Tensor({1, 28, 28}));
    CHECK(one.labels == std::vector<int>{7});

    auto bright = idx_images(kIdxImageMagic, 2, 2 * 784);
    bright[16] = 255;
    bright[16 + 784 + 5] = 51;
    const RawDigits two = parse_idx(bright, idx_labels({1, 2}));
    CHECK(two.images[0][0] == 1.0);
    CHECK(two.images[1][5] == doctest::Approx(0.2));

    CHECK_THROWS_WITH_AS(parse_idx(idx_images(kIdxLabelMagic, 1, 784), idx_labels({7})),
                         doctest::Contains("0x00000801"), FormatError);
    CHECK_THROWS_WITH_AS(parse_idx(img, idx_labels({7, 8})), doctest::Contains("2"), FormatError);
    CHECK_THROWS_WITH_AS(parse_idx(idx_images(kIdxImageMagic, 1, 700), idx_labels({7})),
                         doctest::Contains("expected 800"), FormatError);
    CHECK_THROWS_WITH_AS(parse_idx(idx_images(kIdxImageMagic, 1, 700), idx_labels({7})), doctest::Contains("716"),
                         FormatError);
    CHECK_THROWS_AS(parse_idx(img, idx_labels({12})), FormatError);
    CHECK_THROWS_AS(parse_idx(std::vector<std::uint8_t>(10), idx_labels({1})), FormatError);
}

TEST_CASE("idx files load from disk") {
    const fs::path dir = scratch("idx");
    fs::create_directories(dir);
    const auto img = idx_images(kIdxImageMagic, 1, 784);
    const auto lab = idx_labels({3});
    std::ofstream(dir / "img", std::ios::binary).write(reinterpret_cast<const char*>(img.data()), img.size());
    std::ofstream(dir / "lab", std::ios::binary).write(reinterpret_cast<const char*>(lab.data()), lab.size());
    CHECK(load_idx(dir / "img", dir / "lab").labels == std::vector<int>{3});
    CHECK_THROWS_WITH(load_idx(dir / "missing", dir / "lab"), doctest::Contains("missing"));
    fs::remove_all(dir);
}

TEST_CASE("canvas composition") {
    Rng rng(1);
    CanvasConfig cfg;
    cfg.forced_scale = 3.0;
    cfg.forced_position = std::pair<std::size_t, std::size_t>{0, 0};
    const Tensor full = compose_canvas(Tensor({1, 28, 28}, 1.0), rng, cfg);
    CHECK(full == Tensor({1, 84, 84}, 1.0));

    const Tensor digit = random_tensor({1, 28, 28}, rng, 0, 1);
    cfg.forced_scale = 1.7;
    const Tensor at_origin = compose_canvas(digit, rng, cfg);
    cfg.forced_position = std::pair<std::size_t, std::size_t>{20, 31};
    const Tensor moved = compose_canvas(digit, rng, cfg);
    auto mass = [](const Tensor& t) { return std::accumulate(t.values().begin(), t.values().end(), 0.0); };
    CHECK(mass(moved) == doctest::Approx(mass(at_origin)).epsilon(1e-12));
    cfg.forced_position = std::pair<std::size_t, std::size_t>{60, 0};
    CHECK_THROWS(compose_canvas(digit, rng, cfg));
    CHECK_THROWS_AS(compose_canvas(Tensor({28, 28}), rng, {}), ShapeError);

    // Unforced draws stay on the canvas and land in every quadrant.
    const Tensor dot = [] {
        Tensor t({1, 28, 28});
        for (std::size_t y = 12; y < 16; ++y) {
            for (std::size_t x = 12; x < 16; ++x) t[y * 28 + x] = 1.0;
        }
        return t;
    }();
    std::array<int, 4> quadrant{};
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        const Tensor c = compose_canvas(dot, rng, {});
        double m = 0.0, cy = 0.0, cx = 0.0;
        for (std::size_t y = 0; y < 84; ++y) {
            for (std::size_t x = 0; x < 84; ++x) {
                const double v = c[y * 84 + x];
                m += v;
                cy += v * y;
                cx += v * x;
            }
        }
        REQUIRE(m > 0.0);
        ++quadrant[(cy / m >= 41.5 ? 2 : 0) + (cx / m >= 41.5 ? 1 : 0)];
    }
    for (int q : quadrant) {
        CHECK(q > draws / 5);
        CHECK(q < draws * 3 / 10);
    }
}

TEST_CASE("noise") {
    Rng rng(2);
    const Tensor gray({1, 84, 84}, 0.5);
    NoiseConfig cfg;
    cfg.forced_sigma = 0.0;
    CHECK(add_noise(gray, cfg, rng) == gray);

    cfg.forced_sigma = 40.0;
    const Tensor noisy = add_noise(gray, cfg, rng);
    double ss = 0.0;
    for (std::size_t i = 0; i < noisy.size(); ++i) ss += (noisy[i] - 0.5) * (noisy[i] - 0.5);
    const double std = std::sqrt(ss / static_cast<double>(noisy.size()));
    CHECK(std::fabs(std - 40.0 / 255.0) < 0.05 * 40.0 / 255.0);

    NoiseConfig random;  // per-image sigma
    for (int i = 0; i < 20; ++i) {
        const Tensor out = add_noise(random_tensor({1, 84, 84}, rng, 0, 1), random, rng);
        for (double v : out.values()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    NoiseConfig negative;
    negative.sigma_mean = -100.0;
    negative.sigma_std = 1.0;
    CHECK(add_noise(gray, negative, rng) == gray);
}

TEST_CASE("synthetic glyphs") {
    Rng a(3), b(3);
    const RawDigits g1 = synth_glyphs(a, 20), g2 = synth_glyphs(b, 20);
    CHECK(g1.images == g2.images);
    CHECK(g1.labels == g2.labels);
    REQUIRE(g1.images.size() == 200);
    for (const Tensor& t : g1.images) {
        CHECK(t.shape() == Shape{1, 28, 28});
        for (double v : t.values()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }

    Rng train_rng(4), test_rng(5);
    const RawDigits train = synth_glyphs(train_rng, 100), test = synth_glyphs(test_rng, 100);
    std::vector<Tensor> centroid(10, Tensor({784}));
    for (std::size_t i = 0; i < train.images.size(); ++i) {
        for (std::size_t p = 0; p < 784; ++p) centroid[train.labels[i]][p] += train.images[i][p] / 100.0;
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.images.size(); ++i) {
        int best = -1;
        double best_d = 1e300;
        for (int d = 0; d < 10; ++d) {
            double dist = 0.0;
            for (std::size_t p = 0; p < 784; ++p) {
                const double e = test.images[i][p] - centroid[d][p];
                dist += e * e;
            }
            if (dist < best_d) best_d = dist, best = d;
        }
        correct += best == test.labels[i];
    }
    const double accuracy = static_cast<double>(correct) / static_cast<double>(test.images.size());
    MESSAGE("nearest-centroid accuracy " << accuracy);
    CHECK(accuracy > 0.95);
}

TEST_CASE("splits") {
    SplitConfig split;
    CHECK(split.role_of(0) == Role::normal);
    CHECK(split.role_of(1) == Role::known_anomaly);
    for (int d = 2; d <= 9; ++d) CHECK(split.role_of(d) == Role::unknown_anomaly);
    CHECK_THROWS(SplitConfig{3, 3}.validate());
    CHECK_THROWS(SplitConfig{0, 10}.validate());

    BenchmarkConfig cfg;
    cfg.counts = {30, 20, 10, 5};
    cfg.split = {0, 5};
    cfg.seed = 7;
    const Splits s = generate_benchmark(synth_source(cfg), cfg);
    CHECK(s.train_vae.size() == 30);
    CHECK(s.train_reg.size() == 30);
    CHECK(s.test.size() == 50);

    std::set<std::uint64_t> train_ids, test_ids;
    for (const auto& x : s.train_vae) {
        CHECK(x.role == Role::normal);
        train_ids.insert(x.id);
    }
    for (const auto& x : s.train_reg) {
        CHECK(x.role != Role::unknown_anomaly);
        CHECK((x.role == Role::normal) == (x.digit == 0));
        train_ids.insert(x.id);
    }
    std::array<int, 10> per_digit{};
    for (const auto& x : s.test) {
        CHECK(x.role == cfg.split.role_of(x.digit));
        test_ids.insert(x.id);
        ++per_digit[x.digit];
        for (double v : x.pixels.values()) REQUIRE((v >= 0.0 && v <= 1.0));
    }
    for (int n : per_digit) CHECK(n == 5);
    for (auto id : test_ids) CHECK(train_ids.count(id) == 0);

    std::vector<ImageSample> pool;
    for (const auto& x : s.test) pool.push_back(x);
    CHECK_THROWS_WITH(build_splits(pool, cfg.split, cfg.counts), doctest::Contains("short by"));
}

TEST_CASE("benchmark generation is deterministic and noise does not move digits") {
    BenchmarkConfig cfg;
    cfg.counts = {12, 12, 6, 3};
    cfg.seed = 11;
    const RawDigits source = synth_source(cfg);
    const Splits a = generate_benchmark(source, cfg), b = generate_benchmark(source, cfg);
    for (std::size_t i = 0; i < a.test.size(); ++i) CHECK(a.test[i].pixels == b.test[i].pixels);

    BenchmarkConfig clean = cfg, faint = cfg;
    clean.noise.forced_sigma = 0.0;
    faint.noise.forced_sigma = 1.0;  // one grey level
    const Splits c = generate_benchmark(source, clean), f = generate_benchmark(source, faint);
    for (std::size_t i = 0; i < c.test.size(); ++i) {
        CHECK(c.test[i].id == f.test[i].id);
        CHECK(max_abs_diff(c.test[i].pixels, f.test[i].pixels) < 7.0 / 255.0);
    }
    cfg.seed = 12;
    CHECK_FALSE(generate_benchmark(synth_source(cfg), cfg).test[0].pixels == a.test[0].pixels);
}

TEST_CASE("dataset directory round trip") {
    BenchmarkConfig cfg;
    cfg.counts = {6, 4, 3, 2};
    const Splits s = generate_benchmark(synth_source(cfg), cfg);
    const fs::path dir = scratch("roundtrip");
    write_dataset(dir, s, 84, 84);
    const Splits r = read_dataset(dir);
    REQUIRE(r.test.size() == s.test.size());
    REQUIRE(r.train_vae.size() == s.train_vae.size());
    REQUIRE(r.train_reg.size() == s.train_reg.size());
    for (std::size_t i = 0; i < s.test.size(); ++i) {
        CHECK(r.test[i].pixels == s.test[i].pixels);
        CHECK(r.test[i].id == s.test[i].id);
        CHECK(r.test[i].role == s.test[i].role);
    }

    {
        std::ofstream m(dir / "manifest.csv", std::ios::app);
        m << "garbage row\n";
    }
    CHECK_THROWS_AS(read_dataset(dir), FormatError);
    fs::remove(dir / "manifest.csv");
    CHECK_THROWS_WITH(read_dataset(dir), doctest::Contains("manifest.csv"));
    fs::remove_all(dir);
}
