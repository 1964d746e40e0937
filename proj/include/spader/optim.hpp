#pragma once

#include "spader/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace spader {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// A trainable tensor paired with the gradient computed for it this step.
struct ParamRef {
    std::string name;
    Tensor* value = nullptr;
    const Tensor* grad = nullptr;
};

struct AdamState {
    std::uint64_t step = 0;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;
};

/// One bias-corrected Adam update over every parameter.
/// Throws std::invalid_argument naming the parameter whose gradient is missing.
void adam_step(std::span<const ParamRef> params, AdamState& state, const AdamConfig& config);

}  // namespace spader
