#include <cmath>
#include <string>

#include "speclora/errors.hpp"
#include "speclora/train.hpp"

namespace speclora {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) throw ConfigError("warmup_ratio must lie in [0, 1)");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight_decay must be non-negative");
    const auto [b1, b2] = betas;
    if (!(b1 > 0.0 && b1 < 1.0 && b2 > 0.0 && b2 < 1.0)) throw ConfigError("betas must lie in (0, 1)");
    if (!(eps > 0.0) || !std::isfinite(eps)) throw ConfigError("eps must be positive");
}

void adamw_step(std::span<double> params, std::span<const double> grads, AdamState& state, std::size_t t, double lr,
                const TrainConfig& cfg) {
    if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw DimensionError("adamw_step: " + std::to_string(params.size()) + " params, " +
                             std::to_string(grads.size()) + " grads, " + std::to_string(state.m.size()) +
                             " moments");
    }
    if (t == 0) throw ConfigError("adamw_step: step index is 1-based");
    const auto [beta1, beta2] = cfg.betas;
    const double bias1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bias2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    const double decay = 1.0 - lr * cfg.weight_decay;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        const double m_hat = state.m[i] / bias1;
        const double v_hat = state.v[i] / bias2;
        params[i] = params[i] * decay - lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
}

double linear_schedule(std::size_t step, std::size_t total, double warmup_ratio, double base_lr) {
    if (total == 0 || step >= total) return 0.0;
    const auto warmup = static_cast<std::size_t>(std::floor(warmup_ratio * static_cast<double>(total)));
    if (step < warmup) {
        return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
    }
    return base_lr * static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

}  // namespace speclora
