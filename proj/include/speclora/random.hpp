#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "speclora/linalg.hpp"

namespace speclora {

// SplitMix64 finalizer; used for counter-based streams.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Uniform double in [0, 1) from the top 53 bits.
constexpr double to_unit(std::uint64_t bits) noexcept {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Counter-based uniform keyed by (seed, stream, index). Pure function.
constexpr double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) noexcept {
    return to_unit(mix64(mix64(mix64(seed) ^ stream) ^ index));
}

/// Seeded generator whose draws are identical across standard library
/// implementations (std distributions are implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

    double uniform() { return to_unit(engine_()); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box–Muller, no cached second draw so the stream position is simple to reason about.
    double normal() {
        double u1 = uniform();
        while (u1 == 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Uniform integer in [0, bound) by rejection.
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t limit = bound == 0 ? 0 : (~std::uint64_t{0} - bound + 1) % bound;
        std::uint64_t x = engine_();
        while (x < limit) x = engine_();
        return x % bound;
    }

    DenseMatrix normal_matrix(std::size_t rows, std::size_t cols, double stddev = 1.0) {
        DenseMatrix out(rows, cols);
        for (double& x : out.flat()) x = stddev * normal();
        return out;
    }

    DenseMatrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi) {
        DenseMatrix out(rows, cols);
        for (double& x : out.flat()) x = uniform(lo, hi);
        return out;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace speclora
