#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "speclora/linalg.hpp"

namespace speclora {

enum class Variant { hadamard, svd_exact };
enum class Direction { top, bottom };
enum class Mode { train, eval };

std::string_view to_string(Variant v) noexcept;
std::string_view to_string(Direction d) noexcept;
// Throws ConfigError on unknown names.
Variant parse_variant(std::string_view s);
Direction parse_direction(std::string_view s);

struct AdapterConfig {
    std::size_t rank = 16;
    double alpha = 32.0;
    std::size_t k = 200;
    double dropout_p = 0.05;
    Variant variant = Variant::hadamard;
    Direction direction = Direction::top;
    std::uint64_t seed = 0;

    // Low-rank path multiplier alpha / rank.
    double scaling() const noexcept { return alpha / static_cast<double>(rank); }

    /// Throws ConfigError unless the config is usable on an n × m weight.
    void validate(std::size_t n, std::size_t m) const;

    // Recipes from the reference LLaMA and DeBERTa runs.
    static AdapterConfig commonsense() { return {16, 32.0, 200, 0.05, Variant::hadamard, Direction::top, 0}; }
    static AdapterConfig nlu() { return {2, 4.0, 200, 0.0, Variant::hadamard, Direction::top, 0}; }
};

struct AdapterParams {
    std::vector<double> d;  // k
    DenseMatrix a;          // n × r
    DenseMatrix b;          // r × m
};

struct AdapterGradients {
    std::vector<double> grad_d;
    DenseMatrix grad_a;
    DenseMatrix grad_b;
};

/// r·(n+m) + k.
std::size_t trainable_parameter_count(std::size_t n, std::size_t m, const AdapterConfig& cfg) noexcept;

/// Frozen weight plus trainable spectral rescale d and low-rank pair (A, B).
///
/// The frozen weight and, for svd_exact, the cached block M = U[rows,dirs]·Σ·V[:,dirs]ᵀ
/// are only reachable through const accessors; training mutates params() alone.
class SpecLoraAdapter {
public:
    /// d = 1, A ~ U(±√(6/r)) seeded by cfg.seed, B = 0. Throws ConfigError.
    static SpecLoraAdapter init(DenseMatrix w, const AdapterConfig& cfg);

    /// Rebuilds an adapter from checkpointed state. When m_cached is absent for
    /// svd_exact it is recomputed from w. Throws ConfigError/DimensionError.
    static SpecLoraAdapter restore(DenseMatrix w, const AdapterConfig& cfg, AdapterParams params,
                                   std::optional<DenseMatrix> m_cached = std::nullopt);

    const DenseMatrix& w_frozen() const noexcept { return w_; }
    const DenseMatrix& m_cached() const noexcept { return m_; }
    const AdapterConfig& config() const noexcept { return cfg_; }
    const AdapterParams& params() const noexcept { return params_; }
    AdapterParams& params() noexcept { return params_; }

    std::size_t rows() const noexcept { return w_.rows(); }
    std::size_t cols() const noexcept { return w_.cols(); }
    std::size_t trainable_count() const noexcept { return trainable_parameter_count(rows(), cols(), cfg_); }

    // First row of w touched by d: 0 for top, n-k for bottom.
    std::size_t first_scaled_row() const noexcept;

private:
    SpecLoraAdapter(DenseMatrix w, DenseMatrix m, const AdapterConfig& cfg, AdapterParams params);

    DenseMatrix w_;
    DenseMatrix m_;
    AdapterConfig cfg_;
    AdapterParams params_;
};

/// Γ: ones except a k×k block holding d_i along row i (top-left for top,
/// bottom-right for bottom). Throws DimensionError if len(d) != k or k > min(n, m).
DenseMatrix build_mask(std::size_t n, std::size_t m, std::size_t k, std::span<const double> d, Direction direction);

/// k×m block U[rows, dirs]·diag(σ[dirs])·V[:, dirs]ᵀ for the top-k (rows 0..k-1,
/// triplets 0..k-1) or bottom-k (rows n-k..n-1, triplets p-k..p-1) selection.
DenseMatrix spectral_block(const SvdFactors& f, std::size_t k, Direction direction);

/// W with the selected k rows of the selected singular vectors rescaled by d,
/// i.e. [Ũ U_rest]ΣVᵀ. Computes one SVD of w.
DenseMatrix exact_rescale(const DenseMatrix& w, std::span<const double> d, Direction direction = Direction::top);

/// Non-low-rank part of the effective weight: Γ⊙W or W + RowEmbed((D−I)M).
DenseMatrix base_weight(const SpecLoraAdapter& adapter);

DenseMatrix effective_weight(const SpecLoraAdapter& adapter);

/// Deployment fold-in; identical to effective_weight.
DenseMatrix merge(const SpecLoraAdapter& adapter);

/// Keep-scale mask for the low-rank path input: entries are 0 or 1/(1-p),
/// keyed by (seed, step, flat element index).
DenseMatrix dropout_mask(const AdapterConfig& cfg, std::uint64_t step, std::size_t batch, std::size_t m);

/// y = x·base_weightᵀ + s·(x̃·Bᵀ)·Aᵀ, x̃ = x in eval mode or dropped-out x in train mode.
DenseMatrix forward(const SpecLoraAdapter& adapter, const DenseMatrix& x, Mode mode = Mode::eval,
                    std::uint64_t step = 0);

/// Gradients of a scalar loss given g_y = ∂L/∂y for the same (x, mode, step) as forward.
AdapterGradients backward(const SpecLoraAdapter& adapter, const DenseMatrix& x, const DenseMatrix& g_y,
                          Mode mode = Mode::eval, std::uint64_t step = 0);

}  // namespace speclora
