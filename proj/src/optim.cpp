#include "sqm/optim.hpp"

#include <cmath>

#include "sqm/error.hpp"

namespace sqm {

void adam_update(Parameter& p, AdamMoments& moments, const AdamConfig& config, std::size_t step) {
    if (step == 0) {
        throw ArgumentError("adam step index must be >= 1");
    }
    if (moments.m.shape() != p.value.shape()) {
        moments.m = Tensor::zeros_like(p.value);
        moments.v = Tensor::zeros_like(p.value);
    }
    const double t = static_cast<double>(step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t k = 0; k < p.value.size(); ++k) {
        const double g = p.grad[k];
        moments.m[k] = config.beta1 * moments.m[k] + (1.0 - config.beta1) * g;
        moments.v[k] = config.beta2 * moments.v[k] + (1.0 - config.beta2) * g * g;
        const double mhat = moments.m[k] / c1;
        const double vhat = moments.v[k] / c2;
        p.value[k] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
    }
}

Adam::Adam(ParameterList params, AdamConfig config)
    : params_(std::move(params)), config_(config), moments_(params_.size()) {}

void Adam::step() {
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        adam_update(*params_[i], moments_[i], config_, t_);
    }
}

double global_grad_norm(std::span<Parameter* const> params) {
    double s = 0.0;
    for (const auto* p : params) {
        for (double g : p->grad.values()) {
            s += g * g;
        }
    }
    return std::sqrt(s);
}

double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
    const double total = global_grad_norm(params);
    if (max_norm > 0.0 && total > max_norm) {
        const double f = max_norm / total;
        for (auto* p : params) {
            for (auto& g : p->grad.values()) {
                g *= f;
            }
        }
    }
    return total;
}

}  // namespace sqm
