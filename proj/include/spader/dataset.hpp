#pragma once

// Noisy-digit benchmark: digit archives (IDX) or procedural glyphs, placed at
// random size and position on a larger canvas, with per-image Gaussian noise.

#include "spader/rng.hpp"
#include "spader/sample.hpp"
#include "spader/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace spader {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Source digits before composition: [1,rows,cols] images in [0,1] and labels.
struct RawDigits {
    std::vector<Tensor> images;
    std::vector<int> labels;
};

RawDigits parse_idx(std::span<const std::uint8_t> image_bytes, std::span<const std::uint8_t> label_bytes);
RawDigits load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Procedural 28x28 digit-like glyphs with random stroke width, affine jitter and wobble.
RawDigits synth_glyphs(Rng& rng, std::size_t count_per_digit);

struct SplitConfig {
    int normal_digit = 0;
    int known_anomaly_digit = 1;

    Role role_of(int digit) const;
    void validate() const;
};

struct NoiseConfig {
    double sigma_mean = 40.0;
    double sigma_std = 30.0;
    double pixel_scale = 255.0;
    std::optional<double> forced_sigma;  // replaces the per-image draw
};

struct CanvasConfig {
    std::size_t size = 84;
    double min_scale = 1.0;
    double max_scale = 2.5;
    // Test hooks.
    std::optional<double> forced_scale;
    std::optional<std::pair<std::size_t, std::size_t>> forced_position;  // (row, col)
};

/// Resizes the digit by a random factor and pastes it at a random position
/// fully inside a zero canvas of CanvasConfig::size.
Tensor compose_canvas(const Tensor& digit, Rng& rng, const CanvasConfig& config = {});

/// Per-image sigma ~ max(0, N(mean, std^2)) in pixel_scale units, per-pixel
/// N(0, sigma^2) noise, clipped to [0,1].
Tensor add_noise(const Tensor& canvas, const NoiseConfig& config, Rng& rng);

struct SplitCounts {
    std::size_t train_vae = 2000;         // normal
    std::size_t train_reg_normal = 2000;  // normal, shared with the VAE set
    std::size_t train_reg_known = 1000;   // known anomaly
    std::size_t test_per_digit = 500;

    std::size_t train_normal_pool() const { return std::max(train_vae, train_reg_normal); }
    std::size_t needed(Role role) const;
};

struct Splits {
    std::vector<ImageSample> train_vae;  // normal only
    std::vector<ImageSample> train_reg;  // normal and known anomaly
    std::vector<ImageSample> test;       // every role
};

/// Partitions composed samples by role. Within each digit the pool order
/// decides membership: training images first, then test images.
Splits build_splits(std::span<const ImageSample> pool, const SplitConfig& split, const SplitCounts& counts);

struct BenchmarkConfig {
    SplitConfig split{};
    SplitCounts counts{};
    NoiseConfig noise{};
    CanvasConfig canvas{};
    std::uint64_t seed = 0;
};

/// Selects source digits, composes and noises them, and splits. Placement and
/// noise draw from separate per-image streams, so changing only the noise
/// leaves every digit where it was.
Splits generate_benchmark(const RawDigits& source, const BenchmarkConfig& config);

/// Source digits for a synthetic benchmark, enough for every role.
RawDigits synth_source(const BenchmarkConfig& config);

// On-disk cache: manifest.csv, images.f64 (little-endian doubles), dataset.cfg.
void write_dataset(const std::filesystem::path& dir, const Splits& splits, std::size_t height, std::size_t width);
Splits read_dataset(const std::filesystem::path& dir);

}  // namespace spader
