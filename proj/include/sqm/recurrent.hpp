#pragma once

#include <cstddef>
#include <string>

#include "sqm/autodiff.hpp"
#include "sqm/rng.hpp"

namespace sqm {

void init_uniform(Parameter& p, Rng& rng, double bound);

/// Gated recurrent unit with update gate z, reset gate r and h0 = 0:
///   z = sigmoid(Wz x + Uz h + bz), r = sigmoid(Wr x + Ur h + br)
///   c = tanh(Wh x + Uh (r * h) + bh), h' = (1 - z) * h + z * c
class GruCell {
public:
    GruCell() = default;
    GruCell(const std::string& prefix, std::size_t input_dim, std::size_t hidden_dim);

    std::size_t input_dim() const noexcept { return input_dim_; }
    std::size_t hidden_dim() const noexcept { return hidden_dim_; }

    ParameterList parameters();
    void init(Rng& rng, double bound);

    /// States for every column of `inputs` (input_dim x n) -> hidden_dim x n.
    /// In reverse mode the sequence is read right to left; column t still holds
    /// the state at position t.
    Var run(Tape& tape, Var inputs, bool reverse = false);
    Var run(Tape& tape, Var inputs, bool reverse = false) const;

private:
    template <typename Self>
    static Var run_impl(Self& self, Tape& tape, Var inputs, bool reverse);

    std::size_t input_dim_ = 0;
    std::size_t hidden_dim_ = 0;
    Parameter wz_, uz_, bz_;
    Parameter wr_, ur_, br_;
    Parameter wh_, uh_, bh_;
};

/// Adaptively gated convolutional recurrence of filter width m:
///   lambda = sigmoid(Wl x_t + Ul h_{t-1} + bl)
///   c1_t = lambda * c1_{t-1} + (1 - lambda) * (W1 x_t)
///   ck_t = lambda * ck_{t-1} + (1 - lambda) * (c(k-1)_{t-1} + Wk x_t),  k = 2..m
///   h_t  = tanh(cm_t + b)
class RcnnCell {
public:
    RcnnCell() = default;
    RcnnCell(const std::string& prefix, std::size_t input_dim, std::size_t hidden_dim, std::size_t width);

    std::size_t hidden_dim() const noexcept { return hidden_dim_; }
    std::size_t width() const noexcept { return filters_.size(); }

    ParameterList parameters();
    void init(Rng& rng, double bound);

    Var run(Tape& tape, Var inputs);
    Var run(Tape& tape, Var inputs) const;

private:
    template <typename Self>
    static Var run_impl(Self& self, Tape& tape, Var inputs);

    std::size_t input_dim_ = 0;
    std::size_t hidden_dim_ = 0;
    Parameter wl_, ul_, bl_;
    std::vector<Parameter> filters_;
    Parameter bias_;
};

}  // namespace sqm
