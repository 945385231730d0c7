#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "speclora/adapter.hpp"

namespace speclora {

struct GradcheckOptions {
    std::uint64_t seed = 0;
    // Cases cycle through (hadamard, top), (hadamard, bottom), (svd_exact, top), (svd_exact, bottom).
    std::size_t cases = 80;
    double step = 1e-6;
    // Relative error denominators never drop below this.
    double denominator_floor = 1e-8;
    // Test hook: perturbs one analytic gradient component before comparison.
    bool corrupt_gradient = false;
};

struct GradcheckResult {
    double max_rel_error = 0.0;
    std::size_t cases = 0;
    std::size_t components = 0;
    // Where max_rel_error was observed.
    std::string worst;
};

/// Compares backward() against central finite differences of L = ½‖forward(x)‖²
/// on small random adapters (n, m ≤ 8, r ≤ 3, k ≤ 4, batch ≤ 4, dropout 0) with
/// all trainables randomized. Throws ConfigError when cases == 0.
GradcheckResult run_gradcheck(const GradcheckOptions& opts);

}  // namespace speclora
