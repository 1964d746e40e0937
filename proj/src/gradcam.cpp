#include "spader/gradcam.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spader {

namespace {

Tensor weighted_channel_sum(const CamWeights& weights, const Tensor& features, const char* op) {
    if (features.rank() != 3 || features.dim(0) != weights.alpha.size()) {
        throw ShapeError(std::string(op) + ": " + std::to_string(weights.alpha.size()) +
                         " channel weights do not match feature maps " + to_string(features.shape()));
    }
    const std::size_t plane = features.dim(1) * features.dim(2);
    Tensor out({features.dim(1), features.dim(2)});
    for (std::size_t k = 0; k < weights.alpha.size(); ++k) {
        const double a = weights.alpha[k];
        const double* src = features.data() + k * plane;
        for (std::size_t i = 0; i < plane; ++i) out[i] += a * src[i];
    }
    return out;
}

CamWeights channel_means(const double* grad, std::size_t channels, std::size_t plane) {
    CamWeights w;
    w.locations = plane;
    w.alpha.resize(channels);
    for (std::size_t k = 0; k < channels; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += grad[k * plane + i];
        w.alpha[k] = s / static_cast<double>(plane);
    }
    return w;
}

Tensor image_of(const Tensor& stack, std::size_t index) {
    const std::size_t plane = stack.size() / stack.dim(0);
    Shape shape(stack.shape().begin() + 1, stack.shape().end());
    return Tensor(std::move(shape),
                  std::vector<double>(stack.data() + index * plane, stack.data() + (index + 1) * plane));
}

}  // namespace

std::string_view cam_source_name(CamSource source) {
    switch (source) {
        case CamSource::input_abs: return "input_abs";
        case CamSource::recon_relu: return "recon_relu";
        case CamSource::combined: return "combined";
    }
    return "unknown";
}

CamWeights cam_weights(ad::Tape& tape, ad::Var output, ad::Var features) {
    const Tensor& a = features.value();
    if (a.rank() != 3) {
        throw ShapeError("cam_weights: expected feature maps [K,h,w], got " + to_string(a.shape()));
    }
    const Tensor grad = tape.grad_wrt(output, features);
    return channel_means(grad.data(), a.dim(0), a.dim(1) * a.dim(2));
}

std::vector<CamWeights> cam_weights_batch(ad::Tape& tape, ad::Var output, ad::Var features) {
    const Tensor& a = features.value();
    if (a.rank() != 4) {
        throw ShapeError("cam_weights_batch: expected feature maps [B,K,h,w], got " + to_string(a.shape()));
    }
    const Tensor grad = tape.grad_wrt(ad::sum(output), features);
    const std::size_t channels = a.dim(1);
    const std::size_t plane = a.dim(2) * a.dim(3);
    std::vector<CamWeights> out;
    for (std::size_t b = 0; b < a.dim(0); ++b) {
        out.push_back(channel_means(grad.data() + b * channels * plane, channels, plane));
    }
    return out;
}

CamMap cam_signed(const CamWeights& weights, const Tensor& features) {
    Tensor m = weighted_channel_sum(weights, features, "cam_signed");
    for (double& v : m.values()) v = std::fabs(v);
    return {std::move(m), CamSource::input_abs};
}

CamMap cam_positive(const CamWeights& weights, const Tensor& features) {
    Tensor m = weighted_channel_sum(weights, features, "cam_positive");
    for (double& v : m.values()) v = std::max(v, 0.0);
    return {std::move(m), CamSource::recon_relu};
}

Tensor upsample_bilinear(const Tensor& map, std::size_t height, std::size_t width) {
    if (map.rank() != 2) throw ShapeError("upsample_bilinear: expected [h,w], got " + to_string(map.shape()));
    const std::size_t h = map.dim(0);
    const std::size_t w = map.dim(1);
    if (h == 0 || w == 0 || h > height || w > width) {
        throw ShapeError("upsample_bilinear: cannot resize " + to_string(map.shape()) + " to [" +
                         std::to_string(height) + "," + std::to_string(width) + "]");
    }
    auto coord = [](std::size_t i, std::size_t src, std::size_t dst) {
        return dst > 1 ? static_cast<double>(i) * static_cast<double>(src - 1) / static_cast<double>(dst - 1)
                       : 0.0;
    };
    Tensor out({height, width});
    for (std::size_t y = 0; y < height; ++y) {
        const double sy = coord(y, h, height);
        const std::size_t y0 = std::min(static_cast<std::size_t>(sy), h - 1);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const double fy = sy - static_cast<double>(y0);
        for (std::size_t x = 0; x < width; ++x) {
            const double sx = coord(x, w, width);
            const std::size_t x0 = std::min(static_cast<std::size_t>(sx), w - 1);
            const std::size_t x1 = std::min(x0 + 1, w - 1);
            const double fx = sx - static_cast<double>(x0);
            const double top = map[y0 * w + x0] + fx * (map[y0 * w + x1] - map[y0 * w + x0]);
            const double bottom = map[y1 * w + x0] + fx * (map[y1 * w + x1] - map[y1 * w + x0]);
            out[y * width + x] = top + fy * (bottom - top);
        }
    }
    return out;
}

InputCams input_cams(const Tensor& x, const RegressorParams& reg) {
    ad::Tape tape;
    const RegressorForward fwd = forward_with_features(tape, tape.borrow(x, false), reg);
    const CamWeights w = cam_weights(tape, fwd.output, fwd.features);
    const Tensor& a = fwd.features.value();
    InputCams out;
    out.prediction = fwd.output.value()[0];
    out.signed_map = upsample_bilinear(cam_signed(w, a).values, reg.image_height, reg.image_width);
    out.positive_map = upsample_bilinear(cam_positive(w, a).values, reg.image_height, reg.image_width);
    return out;
}

std::vector<Tensor> positive_cams(std::span<const Tensor> images, const RegressorParams& reg) {
    std::vector<Tensor> out;
    if (images.empty()) return out;
    const std::size_t plane = reg.image_height * reg.image_width;
    Tensor batch({images.size(), 1, reg.image_height, reg.image_width});
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].size() != plane) {
            throw ShapeError("positive_cams: image " + to_string(images[i].shape()) + " does not match regressor input");
        }
        std::copy(images[i].data(), images[i].data() + plane, batch.data() + i * plane);
    }
    ad::Tape tape;
    const RegressorForward fwd = forward_with_features(tape, tape.borrow(batch, false), reg);
    const std::vector<CamWeights> weights = cam_weights_batch(tape, fwd.output, fwd.features);
    for (std::size_t i = 0; i < images.size(); ++i) {
        const Tensor a = image_of(fwd.features.value(), i);
        out.push_back(upsample_bilinear(cam_positive(weights[i], a).values, reg.image_height, reg.image_width));
    }
    return out;
}

CamMap combined_cam(const Tensor& x, const Tensor& x_hat, const RegressorParams& reg) {
    if (x.shape() != x_hat.shape()) {
        throw ShapeError("combined_cam: input " + to_string(x.shape()) + " vs reconstruction " +
                         to_string(x_hat.shape()));
    }
    const InputCams in = input_cams(x, reg);
    const std::vector<Tensor> recon = positive_cams(std::span<const Tensor>(&x_hat, 1), reg);
    Tensor sum = in.signed_map;
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += recon[0][i];
    return {std::move(sum), CamSource::combined};
}

}  // namespace spader
