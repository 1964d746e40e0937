#pragma once

#include "spader/autodiff.hpp"
#include "spader/regressor.hpp"
#include "spader/tensor.hpp"

#include <cstddef>
#include <string_view>
#include <vector>

namespace spader {

enum class CamSource { input_abs, recon_relu, combined };

std::string_view cam_source_name(CamSource source);

/// Nonnegative region-of-interest map, [h,w] at feature resolution or [H,W] after upsampling.
struct CamMap {
    Tensor values;
    CamSource source = CamSource::combined;
};

/// Per-channel importance: spatial mean of d(output)/d(feature map).
struct CamWeights {
    std::vector<double> alpha;
    std::size_t locations = 0;  // h*w
};

/// `features` is [K,h,w] (one image) and `output` a single-element node.
CamWeights cam_weights(ad::Tape& tape, ad::Var output, ad::Var features);

/// Batched form: features [B,K,h,w], output [B,1]. Images in a batch do not
/// interact, so the gradient of the summed output splits per image exactly.
std::vector<CamWeights> cam_weights_batch(ad::Tape& tape, ad::Var output, ad::Var features);

/// |sum_k alpha_k A^k|, tagged input_abs.
CamMap cam_signed(const CamWeights& weights, const Tensor& features);
/// max(0, sum_k alpha_k A^k), tagged recon_relu.
CamMap cam_positive(const CamWeights& weights, const Tensor& features);

/// Corner-aligned bilinear resize of an [h,w] map to [height,width]; h <= height, w <= width.
Tensor upsample_bilinear(const Tensor& map, std::size_t height, std::size_t width);

/// Per-image pieces of the region of interest for x, all upsampled to image size.
struct InputCams {
    Tensor signed_map;    // |Grad-CAM| of x
    Tensor positive_map;  // ReLU Grad-CAM of x
    double prediction = 0.0;
};

InputCams input_cams(const Tensor& x, const RegressorParams& reg);

/// ReLU Grad-CAM of each image, upsampled. images are [1,H,W].
std::vector<Tensor> positive_cams(std::span<const Tensor> images, const RegressorParams& reg);

/// |Grad-CAM(x)| + ReLU Grad-CAM(x_hat), each from its own forward pass, upsampled.
CamMap combined_cam(const Tensor& x, const Tensor& x_hat, const RegressorParams& reg);

}  // namespace spader
