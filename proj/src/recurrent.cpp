#include "sqm/recurrent.hpp"

#include <vector>

#include "sqm/error.hpp"

namespace sqm {

void init_uniform(Parameter& p, Rng& rng, double bound) {
    for (auto& x : p.value.values()) {
        x = rng.uniform(-bound, bound);
    }
}

GruCell::GruCell(const std::string& prefix, std::size_t input_dim, std::size_t hidden_dim)
    : input_dim_(input_dim),
      hidden_dim_(hidden_dim),
      wz_(prefix + ".W_z", Tensor({hidden_dim, input_dim})),
      uz_(prefix + ".U_z", Tensor({hidden_dim, hidden_dim})),
      bz_(prefix + ".b_z", Tensor({hidden_dim})),
      wr_(prefix + ".W_r", Tensor({hidden_dim, input_dim})),
      ur_(prefix + ".U_r", Tensor({hidden_dim, hidden_dim})),
      br_(prefix + ".b_r", Tensor({hidden_dim})),
      wh_(prefix + ".W_h", Tensor({hidden_dim, input_dim})),
      uh_(prefix + ".U_h", Tensor({hidden_dim, hidden_dim})),
      bh_(prefix + ".b_h", Tensor({hidden_dim})) {}

ParameterList GruCell::parameters() {
    return {&wz_, &uz_, &bz_, &wr_, &ur_, &br_, &wh_, &uh_, &bh_};
}

void GruCell::init(Rng& rng, double bound) {
    for (auto* p : parameters()) {
        init_uniform(*p, rng, bound);
    }
}

template <typename Self>
Var GruCell::run_impl(Self& self, Tape& tape, Var inputs, bool reverse) {
    const Tensor& x = inputs.value();
    if (x.rank() != 2 || x.rows() != self.input_dim_) {
        throw DimensionError("GRU expects inputs [" + std::to_string(self.input_dim_) + ",n], got " +
                             shape_string(x.shape()));
    }
    const std::size_t n = x.cols();
    Var wz_x = ad::matmul(tape.param(self.wz_), inputs);
    Var wr_x = ad::matmul(tape.param(self.wr_), inputs);
    Var wh_x = ad::matmul(tape.param(self.wh_), inputs);
    Var uz = tape.param(self.uz_);
    Var ur = tape.param(self.ur_);
    Var uh = tape.param(self.uh_);
    Var bz = tape.param(self.bz_);
    Var br = tape.param(self.br_);
    Var bh = tape.param(self.bh_);
    Var h = tape.constant(Tensor({self.hidden_dim_}));
    std::vector<Var> states(n);
    for (std::size_t step = 0; step < n; ++step) {
        const std::size_t t = reverse ? n - 1 - step : step;
        Var z = ad::sigmoid(ad::add(ad::add(ad::column(wz_x, t), ad::matmul(uz, h)), bz));
        Var r = ad::sigmoid(ad::add(ad::add(ad::column(wr_x, t), ad::matmul(ur, h)), br));
        Var c = ad::tanh(ad::add(ad::add(ad::column(wh_x, t), ad::matmul(uh, ad::mul(r, h))), bh));
        h = ad::add(ad::mul(ad::one_minus(z), h), ad::mul(z, c));
        states[t] = h;
    }
    return ad::stack_columns(states);
}

Var GruCell::run(Tape& tape, Var inputs, bool reverse) { return run_impl(*this, tape, inputs, reverse); }

Var GruCell::run(Tape& tape, Var inputs, bool reverse) const { return run_impl(*this, tape, inputs, reverse); }

RcnnCell::RcnnCell(const std::string& prefix, std::size_t input_dim, std::size_t hidden_dim, std::size_t width)
    : input_dim_(input_dim),
      hidden_dim_(hidden_dim),
      wl_(prefix + ".W_lambda", Tensor({hidden_dim, input_dim})),
      ul_(prefix + ".U_lambda", Tensor({hidden_dim, hidden_dim})),
      bl_(prefix + ".b_lambda", Tensor({hidden_dim})),
      bias_(prefix + ".b", Tensor({hidden_dim})) {
    if (width == 0) {
        throw ArgumentError("RCNN filter width must be >= 1");
    }
    for (std::size_t k = 0; k < width; ++k) {
        filters_.emplace_back(prefix + ".W_" + std::to_string(k + 1), Tensor({hidden_dim, input_dim}));
    }
}

ParameterList RcnnCell::parameters() {
    ParameterList out{&wl_, &ul_, &bl_};
    for (auto& f : filters_) {
        out.push_back(&f);
    }
    out.push_back(&bias_);
    return out;
}

void RcnnCell::init(Rng& rng, double bound) {
    for (auto* p : parameters()) {
        init_uniform(*p, rng, bound);
    }
}

template <typename Self>
Var RcnnCell::run_impl(Self& self, Tape& tape, Var inputs) {
    const Tensor& x = inputs.value();
    if (x.rank() != 2 || x.rows() != self.input_dim_) {
        throw DimensionError("RCNN expects inputs [" + std::to_string(self.input_dim_) + ",n], got " +
                             shape_string(x.shape()));
    }
    const std::size_t n = x.cols();
    const std::size_t m = self.filters_.size();
    Var wl_x = ad::matmul(tape.param(self.wl_), inputs);
    std::vector<Var> wk_x;
    for (auto& f : self.filters_) {
        wk_x.push_back(ad::matmul(tape.param(f), inputs));
    }
    Var ul = tape.param(self.ul_);
    Var bl = tape.param(self.bl_);
    Var b = tape.param(self.bias_);
    Var h = tape.constant(Tensor({self.hidden_dim_}));
    std::vector<Var> c(m, h);
    std::vector<Var> states(n);
    for (std::size_t t = 0; t < n; ++t) {
        Var lambda = ad::sigmoid(ad::add(ad::add(ad::column(wl_x, t), ad::matmul(ul, h)), bl));
        Var keep = ad::one_minus(lambda);
        std::vector<Var> next(m);
        next[0] = ad::add(ad::mul(lambda, c[0]), ad::mul(keep, ad::column(wk_x[0], t)));
        for (std::size_t k = 1; k < m; ++k) {
            next[k] = ad::add(ad::mul(lambda, c[k]), ad::mul(keep, ad::add(c[k - 1], ad::column(wk_x[k], t))));
        }
        c = std::move(next);
        h = ad::tanh(ad::add(c[m - 1], b));
        states[t] = h;
    }
    return ad::stack_columns(states);
}

Var RcnnCell::run(Tape& tape, Var inputs) { return run_impl(*this, tape, inputs); }

Var RcnnCell::run(Tape& tape, Var inputs) const { return run_impl(*this, tape, inputs); }

}  // namespace sqm
