#include "spader/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace spader {

void adam_step(std::span<const ParamRef> params, AdamState& state, const AdamConfig& config) {
    for (const ParamRef& p : params) {
        if (p.value == nullptr) throw std::invalid_argument("adam_step: parameter '" + p.name + "' is null");
        if (p.grad == nullptr) {
            throw std::invalid_argument("adam_step: missing gradient for parameter '" + p.name + "'");
        }
        if (p.grad->shape() != p.value->shape()) {
            throw ShapeError("adam_step: gradient " + to_string(p.grad->shape()) +
                             " does not match parameter '" + p.name + "' " +
                             to_string(p.value->shape()));
        }
    }
    if (state.first_moment.empty()) {
        for (const ParamRef& p : params) {
            state.first_moment.emplace_back(p.value->shape());
            state.second_moment.emplace_back(p.value->shape());
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw std::invalid_argument("adam_step: optimizer state was built for a different parameter set");
    }

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(config.beta1, t);
    const double correction2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& value = *params[k].value;
        const Tensor& grad = *params[k].grad;
        Tensor& m = state.first_moment[k];
        Tensor& v = state.second_moment[k];
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double g = grad[i];
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            value[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
        }
    }
}

}  // namespace spader
