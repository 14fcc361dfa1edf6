#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sqm/autodiff.hpp"

namespace sqm {

struct AdamConfig {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First and second moment estimates for one parameter.
struct AdamMoments {
    Tensor m;
    Tensor v;
};

/// One bias-corrected Adam update of `p` from its current gradient. `step` is
/// 1-based. The gradient is left untouched.
void adam_update(Parameter& p, AdamMoments& moments, const AdamConfig& config, std::size_t step);

/// Adam over a fixed parameter list; owns the moment buffers and step count.
class Adam {
public:
    Adam(ParameterList params, AdamConfig config);

    void step();
    std::size_t steps_taken() const noexcept { return t_; }
    const AdamConfig& config() const noexcept { return config_; }

private:
    ParameterList params_;
    AdamConfig config_;
    std::vector<AdamMoments> moments_;
    std::size_t t_ = 0;
};

double global_grad_norm(std::span<Parameter* const> params);

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<Parameter* const> params, double max_norm);

}  // namespace sqm
