#pragma once

#include "spader/autodiff.hpp"
#include "spader/layers.hpp"
#include "spader/optim.hpp"
#include "spader/sample.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace spader {

enum class RegressionLoss { absolute, squared };

struct RegressorConfig {
    std::size_t image_height = 84;
    std::size_t image_width = 84;
    std::vector<std::size_t> channels{16, 32, 64};
    // Conv layer whose post-ReLU activation feeds Grad-CAM; defaults to the last.
    std::size_t target_layer = static_cast<std::size_t>(-1);
    RegressionLoss loss = RegressionLoss::absolute;
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    AdamConfig adam{};
    std::uint64_t seed = 0;
};

/// Stride-2 conv stack with ReLU, flattened into one sigmoid output unit.
struct RegressorParams {
    std::vector<ConvLayer> convs;
    DenseLayer head;
    std::size_t target_layer = 0;
    std::size_t image_height = 0;
    std::size_t image_width = 0;

    bool empty() const { return convs.empty(); }
    NamedTensors tensors();
    ConstNamedTensors tensors() const;
};

RegressorParams init_regressor(const RegressorConfig& config, Rng& rng);

/// Normalness target: 1 for normal, 0 for known anomaly. Unknown anomalies have no label.
double normalness_label(Role role);

/// Normalness likelihood in (0,1).
double predict(const Tensor& x, const RegressorParams& params);

struct RegressorForward {
    ad::Var output;    // [1] for a single image, [B,1] for a batch
    ad::Var features;  // post-ReLU activation of the target layer
};

/// Records the forward pass on `tape` with parameters as constants.
/// x is [1,H,W] or [B,1,H,W].
RegressorForward forward_with_features(ad::Tape& tape, ad::Var x, const RegressorParams& params);

struct RegressorTrainResult {
    RegressorParams params;
    std::vector<double> loss_history;  // mean batch loss per epoch
};

/// Trains on normal and known-anomaly images with class-balanced mini-batches.
/// Throws if either class is missing or an unknown-anomaly image is present.
RegressorTrainResult train_regressor(std::span<const ImageSample> dataset,
                                     const RegressorConfig& config);

/// Mean regression loss over the batch, recorded on `tape` (exposed for gradient checks).
ad::Var regression_loss(ad::Tape& tape, ad::Var outputs, const Tensor& targets, RegressionLoss kind);

}  // namespace spader
