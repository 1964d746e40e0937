#pragma once

#include "spader/autodiff.hpp"
#include "spader/rng.hpp"
#include "spader/tensor.hpp"

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace spader {

struct ConvLayer {
    Tensor weight;  // [out, in, k, k]
    Tensor bias;    // [out]
    std::size_t stride = 1;
    std::size_t padding = 1;
};

struct DenseLayer {
    Tensor weight;  // [out, in]
    Tensor bias;    // [out]
};

/// He-normal weights, zero bias.
ConvLayer make_conv(std::size_t out_ch, std::size_t in_ch, std::size_t kernel, std::size_t stride,
                    std::size_t padding, Rng& rng);
DenseLayer make_dense(std::size_t out, std::size_t in, Rng& rng, double gain = 2.0);

using NamedTensors = std::vector<std::pair<std::string, Tensor*>>;
using ConstNamedTensors = std::vector<std::pair<std::string, const Tensor*>>;

struct ConvVars {
    ad::Var weight, bias;
};
struct DenseVars {
    ad::Var weight, bias;
};

ConvVars bind(ad::Tape& tape, const ConvLayer& layer, bool trainable);
DenseVars bind(ad::Tape& tape, const DenseLayer& layer, bool trainable);

inline ad::Var apply(const ConvVars& vars, const ConvLayer& layer, ad::Var x) {
    return ad::conv2d(x, vars.weight, vars.bias, layer.stride, layer.padding);
}
inline ad::Var apply(const DenseVars& vars, ad::Var x) { return ad::dense(x, vars.weight, vars.bias); }

/// Spatial size after a stride-2, pad-1, 3x3 convolution.
inline std::size_t halved(std::size_t n) { return (n - 1) / 2 + 1; }

}  // namespace spader
