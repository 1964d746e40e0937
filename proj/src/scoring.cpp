#include "spader/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace spader {

namespace {

constexpr std::uint64_t kReconstructionSalt = 0x5c0e;

bool any_of(std::span<const Strategy> set, std::initializer_list<Strategy> wanted) {
    return std::any_of(set.begin(), set.end(), [&](Strategy s) {
        return std::find(wanted.begin(), wanted.end(), s) != wanted.end();
    });
}

double sum(const Tensor& t) { return std::accumulate(t.values().begin(), t.values().end(), 0.0); }

double weighted_sum(const Tensor& loss, const Tensor& cam) {
    double s = 0.0;
    for (std::size_t i = 0; i < loss.size(); ++i) s += loss[i] * cam[i];
    return s;
}

double mean(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::string_view strategy_name(Strategy s) {
    switch (s) {
        case Strategy::vae: return "VAE";
        case Strategy::naive_vae_gradcam: return "NAIVE_VAE_GRADCAM";
        case Strategy::spade_no_norm: return "SPADE_NO_NORM";
        case Strategy::spade: return "SPADE";
        case Strategy::cnn_reg: return "CNN_REG";
        case Strategy::vae_cnn_reg: return "VAE_CNN_REG";
        case Strategy::spader: return "SPADER";
    }
    return "UNKNOWN";
}

std::optional<Strategy> parse_strategy(std::string_view name) {
    for (Strategy s : kAllStrategies) {
        if (strategy_name(s) == name) return s;
    }
    return std::nullopt;
}

void ScoringConfig::validate() const {
    if (trials == 0) throw std::invalid_argument("scoring: trial count M must be at least 1");
    if (!(epsilon > 0.0)) throw std::invalid_argument("scoring: epsilon must be positive");
    if (!(cam_scale > 0.0)) throw std::invalid_argument("scoring: cam_scale must be positive");
}

ScoringError::ScoringError(std::uint64_t image_id, const std::string& what)
    : std::runtime_error("image " + std::to_string(image_id) + ": " + what), image_id_(image_id) {}

Tensor loss_image(const Tensor& x, const Tensor& x_hat) {
    if (x.shape() != x_hat.shape()) {
        throw ShapeError("loss_image: input " + to_string(x.shape()) + " vs reconstruction " +
                         to_string(x_hat.shape()));
    }
    if (x.rank() != 2 && !(x.rank() == 3 && x.dim(0) == 1)) {
        throw ShapeError("loss_image: expected [1,H,W] or [H,W], got " + to_string(x.shape()));
    }
    const std::size_t h = x.dim(x.rank() - 2);
    const std::size_t w = x.dim(x.rank() - 1);
    Tensor out({h, w});
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(x_hat[i] - x[i]);
    return out;
}

double cam_norm(const Tensor& cam, CamNorm norm) {
    if (norm == CamNorm::l1) return sum(cam);
    double s = 0.0;
    for (double v : cam.values()) s += v * v;
    return std::sqrt(s);
}

Tensor spatial_weight(const Tensor& loss, const CamMap& cam, double epsilon, CamNorm norm) {
    if (loss.shape() != cam.values.shape()) {
        throw ShapeError("spatial_weight: loss " + to_string(loss.shape()) + " vs cam " +
                         to_string(cam.values.shape()));
    }
    for (double v : cam.values.values()) {
        if (v < 0.0) throw std::invalid_argument("spatial_weight: CAM has a negative entry");
    }
    const double denom = std::max(cam_norm(cam.values, norm), epsilon);
    Tensor out(loss.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = loss[i] * cam.values[i] / denom;
    return out;
}

double strategy_score(Strategy strategy, const ScoreTerms& t) {
    auto total = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); };
    switch (strategy) {
        case Strategy::vae: return -total(t.raw_loss);
        case Strategy::naive_vae_gradcam: return -total(t.naive_loss);
        case Strategy::spade_no_norm: return -total(t.unnormalized);
        case Strategy::spade: return -total(t.weighted_loss);
        case Strategy::cnn_reg: return t.regression;
        case Strategy::vae_cnn_reg: return -mean(t.raw_loss) + t.regression;
        case Strategy::spader: return -mean(t.weighted_loss) + t.regression;
    }
    throw std::invalid_argument("strategy_score: unknown strategy");
}

std::vector<Tensor> scoring_reconstructions(const Tensor& x, std::uint64_t image_id, const VaeParams* vae,
                                            const ScoringConfig& config) {
    if (config.identity_reconstruction) return std::vector<Tensor>(config.trials, x);
    if (vae == nullptr || vae->empty()) throw std::invalid_argument("scoring: no VAE to reconstruct with");
    Rng rng = make_stream(config.seed, image_id, kReconstructionSalt);
    return reconstruct_many(x, *vae, rng, config.trials);
}

std::vector<double> score_strategies(const Tensor& x, std::uint64_t image_id,
                                     std::span<const Strategy> strategies, const Models& models,
                                     const ScoringConfig& config) {
    config.validate();
    const bool needs_vae = std::any_of(strategies.begin(), strategies.end(),
                                       [](Strategy s) { return s != Strategy::cnn_reg; });
    const bool needs_cam = any_of(strategies, {Strategy::naive_vae_gradcam, Strategy::spade_no_norm,
                                               Strategy::spade, Strategy::spader});
    const bool needs_f = any_of(strategies, {Strategy::cnn_reg, Strategy::vae_cnn_reg, Strategy::spader});
    if (needs_vae && !config.identity_reconstruction && (models.vae == nullptr || models.vae->empty())) {
        throw std::invalid_argument("score: a trained VAE is required for the requested strategies");
    }
    if ((needs_cam || needs_f) && (models.regressor == nullptr || models.regressor->empty())) {
        throw std::invalid_argument("score: a trained regressor is required for the requested strategies");
    }

    ScoreTerms terms;
    InputCams cams;
    if (needs_cam) {
        cams = input_cams(x, *models.regressor);
        terms.regression = cams.prediction;
    } else if (needs_f) {
        terms.regression = predict(x, *models.regressor);
    }

    if (needs_vae) {
        const std::vector<Tensor> recons = scoring_reconstructions(x, image_id, models.vae, config);
        std::vector<Tensor> recon_cams;
        if (needs_cam) recon_cams = positive_cams(recons, *models.regressor);

        Tensor naive_cam;
        if (needs_cam) {
            naive_cam = cams.positive_map;
            for (double& v : naive_cam.values()) v *= config.cam_scale;
        }
        for (std::size_t m = 0; m < config.trials; ++m) {
            const Tensor loss = loss_image(x, recons[m]);
            terms.raw_loss.push_back(sum(loss));
            if (!needs_cam) continue;
            CamMap combined{cams.signed_map, CamSource::combined};
            for (std::size_t i = 0; i < combined.values.size(); ++i) {
                combined.values[i] = config.cam_scale * (combined.values[i] + recon_cams[m][i]);
            }
            terms.naive_loss.push_back(weighted_sum(loss, naive_cam));
            terms.unnormalized.push_back(weighted_sum(loss, combined.values));
            terms.weighted_loss.push_back(sum(spatial_weight(loss, combined, config.epsilon, config.norm)));
        }
    }

    std::vector<double> out;
    out.reserve(strategies.size());
    for (Strategy s : strategies) out.push_back(strategy_score(s, terms));
    return out;
}

AnomalyScore score(const Tensor& x, std::uint64_t image_id, Strategy strategy, const Models& models,
                   const ScoringConfig& config) {
    const Strategy one[] = {strategy};
    return {score_strategies(x, image_id, one, models, config)[0], strategy, image_id};
}

std::vector<AnomalyScore> batch_score(std::span<const ImageSample> images,
                                      std::span<const Strategy> strategies, const Models& models,
                                      const ScoringConfig& config) {
    std::vector<AnomalyScore> out;
    out.reserve(images.size() * strategies.size());
    for (const ImageSample& img : images) {
        std::vector<double> values;
        try {
            values = score_strategies(img.pixels, img.id, strategies, models, config);
        } catch (const std::exception& e) {
            throw ScoringError(img.id, e.what());
        }
        for (std::size_t s = 0; s < strategies.size(); ++s) out.push_back({values[s], strategies[s], img.id});
    }
    return out;
}

}  // namespace spader
