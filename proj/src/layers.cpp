#include "spader/layers.hpp"

#include <cmath>

namespace spader {

ConvLayer make_conv(std::size_t out_ch, std::size_t in_ch, std::size_t kernel, std::size_t stride,
                    std::size_t padding, Rng& rng) {
    ConvLayer layer;
    layer.weight = Tensor({out_ch, in_ch, kernel, kernel});
    layer.bias = Tensor({out_ch});
    layer.stride = stride;
    layer.padding = padding;
    const double std_dev = std::sqrt(2.0 / static_cast<double>(in_ch * kernel * kernel));
    for (double& w : layer.weight.values()) w = std_dev * standard_normal(rng);
    return layer;
}

DenseLayer make_dense(std::size_t out, std::size_t in, Rng& rng, double gain) {
    DenseLayer layer;
    layer.weight = Tensor({out, in});
    layer.bias = Tensor({out});
    const double std_dev = std::sqrt(gain / static_cast<double>(in));
    for (double& w : layer.weight.values()) w = std_dev * standard_normal(rng);
    return layer;
}

ConvVars bind(ad::Tape& tape, const ConvLayer& layer, bool trainable) {
    return {tape.borrow(layer.weight, trainable), tape.borrow(layer.bias, trainable)};
}

DenseVars bind(ad::Tape& tape, const DenseLayer& layer, bool trainable) {
    return {tape.borrow(layer.weight, trainable), tape.borrow(layer.bias, trainable)};
}

}  // namespace spader
