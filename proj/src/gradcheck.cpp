#include "sqm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sqm/rng.hpp"

namespace sqm {

namespace {

double evaluate(const LossBuilder& forward) {
    Tape tape(false);
    return forward(tape).value().item();
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& forward, std::span<Parameter* const> params,
                           const GradCheckOptions& options) {
    zero_grads(params);
    {
        Tape tape;
        Var loss = forward(tape);
        tape.backward(loss);
    }
    GradCheckReport report;
    Rng rng(options.seed);
    for (auto* p : params) {
        std::vector<std::size_t> coords(p->value.size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (options.samples_per_param > 0 && options.samples_per_param < coords.size()) {
            rng.shuffle(std::span<std::size_t>(coords));
            coords.resize(options.samples_per_param);
            std::sort(coords.begin(), coords.end());
        }
        for (auto k : coords) {
            const double saved = p->value[k];
            p->value[k] = saved + options.eps;
            const double up = evaluate(forward);
            p->value[k] = saved - options.eps;
            const double down = evaluate(forward);
            p->value[k] = saved;
            const double numeric = (up - down) / (2.0 * options.eps);
            const double analytic = p->grad[k];
            const double err = std::abs(numeric - analytic) / std::max(1.0, std::abs(analytic));
            GradCheckEntry entry{p->name, k, analytic, numeric, err};
            if (report.checked == 0 || err > report.worst.error) {
                report.worst = entry;
            }
            ++report.checked;
            if (!(err < options.tol)) {
                report.failures.push_back(entry);
            }
        }
    }
    return report;
}

}  // namespace sqm
