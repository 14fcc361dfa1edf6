#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sqm/autodiff.hpp"

namespace sqm {

struct GradCheckOptions {
    double eps = 1e-5;
    double tol = 1e-4;
    /// Coordinates checked per parameter; 0 checks every coordinate.
    std::size_t samples_per_param = 0;
    std::uint64_t seed = 7;
};

struct GradCheckEntry {
    std::string param;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double error = 0.0;
};

struct GradCheckReport {
    std::size_t checked = 0;
    std::vector<GradCheckEntry> failures;
    GradCheckEntry worst;

    bool passed() const noexcept { return failures.empty(); }
};

/// Builds the scalar loss on the given tape.
using LossBuilder = std::function<Var(Tape&)>;

/// Compares taped gradients with central differences; the error measure is
/// |numeric - analytic| / max(1, |analytic|). The forward must be deterministic.
GradCheckReport grad_check(const LossBuilder& forward, std::span<Parameter* const> params,
                           const GradCheckOptions& options = {});

}  // namespace sqm
