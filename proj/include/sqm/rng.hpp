#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace sqm {

/// Seeded generator with platform-independent derived distributions.
///
/// The standard distribution classes are implementation-defined, so uniform,
/// integer and normal draws are computed from raw 64-bit output here. Two runs
/// with the same seed produce the same stream on any conforming platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::size_t below(std::size_t n);

    /// Standard normal via Box-Muller.
    double normal();

    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

/// Named sub-seed: adding a component never perturbs another component's stream.
std::uint64_t derive_seed(std::uint64_t master, std::string_view component);

}  // namespace sqm
