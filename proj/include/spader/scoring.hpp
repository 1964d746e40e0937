#pragma once

#include "spader/gradcam.hpp"
#include "spader/regressor.hpp"
#include "spader/sample.hpp"
#include "spader/vae.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace spader {

/// The seven detectors, in the order they are reported.
enum class Strategy {
    vae,                // -sum_m sum |x_hat_m - x|
    naive_vae_gradcam,  // -sum_m sum |x_hat_m - x| * cam+_x
    spade_no_norm,      // -sum_m sum |x_hat_m - x| * cam_m
    spade,              // -sum_m sum |x_hat_m - x| * cam_m / ||cam_m||
    cnn_reg,            // f(x)
    vae_cnn_reg,        // -(1/M) sum_m sum |x_hat_m - x| + f(x)
    spader,             // -(1/M) sum_m sum |x_hat_m - x| * cam_m / ||cam_m|| + f(x)
};

inline constexpr std::array<Strategy, 7> kAllStrategies{
    Strategy::vae,     Strategy::naive_vae_gradcam, Strategy::spade_no_norm, Strategy::spade,
    Strategy::cnn_reg, Strategy::vae_cnn_reg,       Strategy::spader};

std::string_view strategy_name(Strategy s);
std::optional<Strategy> parse_strategy(std::string_view name);

enum class CamNorm { l1, l2 };

struct ScoringConfig {
    std::size_t trials = 5;  // M
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    CamNorm norm = CamNorm::l1;

    // Test hooks.
    bool identity_reconstruction = false;  // use x itself as every reconstruction
    double cam_scale = 1.0;                // multiplies every CAM used for weighting

    void validate() const;
};

struct AnomalyScore {
    double value = 0.0;  // higher means more normal
    Strategy strategy = Strategy::vae;
    std::uint64_t image_id = 0;
};

struct Models {
    const VaeParams* vae = nullptr;
    const RegressorParams* regressor = nullptr;
};

/// Per-pixel |x_hat - x| as an [H,W] map. Inputs are [1,H,W] or [H,W].
Tensor loss_image(const Tensor& x, const Tensor& x_hat);

double cam_norm(const Tensor& cam, CamNorm norm);

/// (loss * cam) / max(||cam||, epsilon). Throws on a negative CAM entry.
Tensor spatial_weight(const Tensor& loss, const CamMap& cam, double epsilon, CamNorm norm = CamNorm::l1);

/// Everything the seven strategies need, per reconstruction trial.
struct ScoreTerms {
    std::vector<double> raw_loss;       // sum |x_hat_m - x|
    std::vector<double> naive_loss;     // sum |x_hat_m - x| * cam+_x
    std::vector<double> unnormalized;   // sum |x_hat_m - x| * cam_m
    std::vector<double> weighted_loss;  // sum of spatially weighted loss
    double regression = 0.0;            // f(x)
};

double strategy_score(Strategy strategy, const ScoreTerms& terms);

/// The config.trials reconstructions scoring uses for this image (x itself under the identity hook).
std::vector<Tensor> scoring_reconstructions(const Tensor& x, std::uint64_t image_id, const VaeParams* vae,
                                            const ScoringConfig& config);

/// Scores one image under each requested strategy. Reconstructions come from
/// a stream derived from (config.seed, image_id), so results do not depend on
/// which other images are scored alongside.
std::vector<double> score_strategies(const Tensor& x, std::uint64_t image_id,
                                     std::span<const Strategy> strategies, const Models& models,
                                     const ScoringConfig& config);

AnomalyScore score(const Tensor& x, std::uint64_t image_id, Strategy strategy, const Models& models,
                   const ScoringConfig& config);

/// Wraps a per-image failure with the offending image id.
class ScoringError : public std::runtime_error {
public:
    ScoringError(std::uint64_t image_id, const std::string& what);
    std::uint64_t image_id() const noexcept { return image_id_; }

private:
    std::uint64_t image_id_;
};

/// Image-major, strategy-minor order: result[i * strategies.size() + s].
std::vector<AnomalyScore> batch_score(std::span<const ImageSample> images,
                                      std::span<const Strategy> strategies, const Models& models,
                                      const ScoringConfig& config);

}  // namespace spader
