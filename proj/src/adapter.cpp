#include "speclora/adapter.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "speclora/errors.hpp"
#include "speclora/random.hpp"

namespace speclora {

namespace {

// Stream tags for counter-based draws.
constexpr std::uint64_t kInitStream = 0xA11CE;
constexpr std::uint64_t kDropoutStream = 0xD80;

std::string dims(std::size_t r, std::size_t c) { return std::to_string(r) + "x" + std::to_string(c); }

DenseMatrix kaiming_uniform(std::size_t rows, std::size_t fan_in, std::uint64_t seed) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Rng rng(mix64(seed) ^ kInitStream);
    return rng.uniform_matrix(rows, fan_in, -bound, bound);
}

}  // namespace

std::string_view to_string(Variant v) noexcept { return v == Variant::hadamard ? "hadamard" : "svd_exact"; }
std::string_view to_string(Direction d) noexcept { return d == Direction::top ? "top" : "bottom"; }

Variant parse_variant(std::string_view s) {
    if (s == "hadamard") return Variant::hadamard;
    if (s == "svd_exact") return Variant::svd_exact;
    throw ConfigError("unknown variant '" + std::string(s) + "' (expected hadamard|svd_exact)");
}

Direction parse_direction(std::string_view s) {
    if (s == "top") return Direction::top;
    if (s == "bottom") return Direction::bottom;
    throw ConfigError("unknown direction '" + std::string(s) + "' (expected top|bottom)");
}

void AdapterConfig::validate(std::size_t n, std::size_t m) const {
    const std::size_t p = std::min(n, m);
    if (rank < 1 || rank > p) {
        throw ConfigError("rank " + std::to_string(rank) + " outside [1, " + std::to_string(p) + "] for " + dims(n, m));
    }
    if (k > p) {
        throw ConfigError("k " + std::to_string(k) + " exceeds min(n, m) = " + std::to_string(p));
    }
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
        throw ConfigError("dropout_p must lie in [0, 1)");
    }
    const double s = scaling();
    if (!(alpha > 0.0) || !std::isfinite(s) || !(s > 0.0)) {
        throw ConfigError("alpha / rank must be finite and positive");
    }
}

std::size_t trainable_parameter_count(std::size_t n, std::size_t m, const AdapterConfig& cfg) noexcept {
    return cfg.rank * (n + m) + cfg.k;
}

SpecLoraAdapter::SpecLoraAdapter(DenseMatrix w, DenseMatrix m, const AdapterConfig& cfg, AdapterParams params)
    : w_(std::move(w)), m_(std::move(m)), cfg_(cfg), params_(std::move(params)) {}

SpecLoraAdapter SpecLoraAdapter::init(DenseMatrix w, const AdapterConfig& cfg) {
    AdapterParams params;
    params.d.assign(cfg.k, 1.0);
    cfg.validate(w.rows(), w.cols());
    params.a = kaiming_uniform(w.rows(), cfg.rank, cfg.seed);
    params.b = DenseMatrix::zeros(cfg.rank, w.cols());
    return restore(std::move(w), cfg, std::move(params));
}

SpecLoraAdapter SpecLoraAdapter::restore(DenseMatrix w, const AdapterConfig& cfg, AdapterParams params,
                                         std::optional<DenseMatrix> m_cached) {
    cfg.validate(w.rows(), w.cols());
    if (!w.all_finite()) {
        throw DomainError("adapter: frozen weight contains non-finite entries");
    }
    const std::size_t n = w.rows();
    const std::size_t m = w.cols();
    if (params.d.size() != cfg.k) {
        throw DimensionError("adapter: d has length " + std::to_string(params.d.size()) + ", expected k = " +
                             std::to_string(cfg.k));
    }
    if (params.a.rows() != n || params.a.cols() != cfg.rank) {
        throw DimensionError("adapter: A is " + dims(params.a.rows(), params.a.cols()) + ", expected " + dims(n, cfg.rank));
    }
    if (params.b.rows() != cfg.rank || params.b.cols() != m) {
        throw DimensionError("adapter: B is " + dims(params.b.rows(), params.b.cols()) + ", expected " + dims(cfg.rank, m));
    }
    DenseMatrix block;
    if (cfg.variant == Variant::svd_exact) {
        if (m_cached) {
            if (m_cached->rows() != cfg.k || m_cached->cols() != m) {
                throw DimensionError("adapter: m_cached is " + dims(m_cached->rows(), m_cached->cols()) +
                                     ", expected " + dims(cfg.k, m));
            }
            block = std::move(*m_cached);
        } else {
            block = spectral_block(thin_svd(w), cfg.k, cfg.direction);
        }
    }
    return SpecLoraAdapter(std::move(w), std::move(block), cfg, std::move(params));
}

std::size_t SpecLoraAdapter::first_scaled_row() const noexcept {
    return cfg_.direction == Direction::top ? 0 : rows() - cfg_.k;
}

DenseMatrix build_mask(std::size_t n, std::size_t m, std::size_t k, std::span<const double> d, Direction direction) {
    if (d.size() != k) {
        throw DimensionError("build_mask: len(d) = " + std::to_string(d.size()) + " but k = " + std::to_string(k));
    }
    if (k > std::min(n, m)) {
        throw DimensionError("build_mask: k = " + std::to_string(k) + " exceeds min(n, m) for " + dims(n, m));
    }
    DenseMatrix mask(n, m, 1.0);
    const std::size_t r0 = direction == Direction::top ? 0 : n - k;
    const std::size_t c0 = direction == Direction::top ? 0 : m - k;
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) mask(r0 + i, c0 + j) = d[i];
    return mask;
}

DenseMatrix spectral_block(const SvdFactors& f, std::size_t k, Direction direction) {
    const std::size_t n = f.u.rows();
    const std::size_t m = f.v.rows();
    const std::size_t p = f.sigma.size();
    if (k > p) {
        throw DimensionError("spectral_block: k = " + std::to_string(k) + " exceeds " + std::to_string(p));
    }
    const std::size_t r0 = direction == Direction::top ? 0 : n - k;
    const std::size_t t0 = direction == Direction::top ? 0 : p - k;
    DenseMatrix us(k, k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t l = 0; l < k; ++l) us(i, l) = f.u(r0 + i, t0 + l) * f.sigma[t0 + l];
    DenseMatrix vk(m, k);
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t l = 0; l < k; ++l) vk(j, l) = f.v(j, t0 + l);
    return matmul_nt(us, vk);
}

namespace {

// w + RowEmbed((diag(d) - I)·block) starting at row r0.
DenseMatrix add_row_block(const DenseMatrix& w, const DenseMatrix& block, std::span<const double> d, std::size_t r0) {
    DenseMatrix out = w;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double coeff = d[i] - 1.0;
        auto dst = out.row(r0 + i);
        auto src = block.row(i);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += coeff * src[j];
    }
    return out;
}

}  // namespace

DenseMatrix exact_rescale(const DenseMatrix& w, std::span<const double> d, Direction direction) {
    const std::size_t k = d.size();
    if (k > std::min(w.rows(), w.cols())) {
        throw DimensionError("exact_rescale: k = " + std::to_string(k) + " exceeds min(n, m)");
    }
    if (k == 0) return w;
    const DenseMatrix block = spectral_block(thin_svd(w), k, direction);
    return add_row_block(w, block, d, direction == Direction::top ? 0 : w.rows() - k);
}

DenseMatrix base_weight(const SpecLoraAdapter& adapter) {
    const auto& cfg = adapter.config();
    const auto& d = adapter.params().d;
    if (cfg.variant == Variant::hadamard) {
        return hadamard(build_mask(adapter.rows(), adapter.cols(), cfg.k, d, cfg.direction), adapter.w_frozen());
    }
    return add_row_block(adapter.w_frozen(), adapter.m_cached(), d, adapter.first_scaled_row());
}

DenseMatrix effective_weight(const SpecLoraAdapter& adapter) {
    const auto& p = adapter.params();
    return add(base_weight(adapter), scale(matmul(p.a, p.b), adapter.config().scaling()));
}

DenseMatrix merge(const SpecLoraAdapter& adapter) { return effective_weight(adapter); }

DenseMatrix dropout_mask(const AdapterConfig& cfg, std::uint64_t step, std::size_t batch, std::size_t m) {
    DenseMatrix mask(batch, m, 1.0);
    if (cfg.dropout_p == 0.0) return mask;
    const double keep = 1.0 / (1.0 - cfg.dropout_p);
    const std::uint64_t key = mix64(cfg.seed ^ kDropoutStream);
    auto flat = mask.flat();
    for (std::size_t i = 0; i < flat.size(); ++i) {
        flat[i] = counter_uniform(key, step, i) < cfg.dropout_p ? 0.0 : keep;
    }
    return mask;
}

namespace {

void check_input(const SpecLoraAdapter& adapter, const DenseMatrix& x, const char* op) {
    if (x.cols() != adapter.cols()) {
        throw DimensionError(std::string(op) + ": input has " + std::to_string(x.cols()) + " columns, weight expects " +
                             std::to_string(adapter.cols()));
    }
}

DenseMatrix lora_input(const SpecLoraAdapter& adapter, const DenseMatrix& x, Mode mode, std::uint64_t step) {
    if (mode == Mode::eval || adapter.config().dropout_p == 0.0) return x;
    return hadamard(x, dropout_mask(adapter.config(), step, x.rows(), x.cols()));
}

}  // namespace

DenseMatrix forward(const SpecLoraAdapter& adapter, const DenseMatrix& x, Mode mode, std::uint64_t step) {
    check_input(adapter, x, "forward");
    const auto& p = adapter.params();
    DenseMatrix y = matmul_nt(x, base_weight(adapter));
    const DenseMatrix hidden = matmul_nt(lora_input(adapter, x, mode, step), p.b);  // batch × r
    const DenseMatrix low_rank = matmul_nt(hidden, p.a);                         // batch × n
    const double s = adapter.config().scaling();
    auto yf = y.flat();
    auto lf = low_rank.flat();
    for (std::size_t i = 0; i < yf.size(); ++i) yf[i] += s * lf[i];
    return y;
}

AdapterGradients backward(const SpecLoraAdapter& adapter, const DenseMatrix& x, const DenseMatrix& g_y, Mode mode,
                          std::uint64_t step) {
    check_input(adapter, x, "backward");
    if (g_y.rows() != x.rows() || g_y.cols() != adapter.rows()) {
        throw DimensionError("backward: upstream gradient is " + dims(g_y.rows(), g_y.cols()) + ", expected " +
                             dims(x.rows(), adapter.rows()));
    }
    const auto& cfg = adapter.config();
    const auto& p = adapter.params();
    const double s = cfg.scaling();
    const std::size_t batch = x.rows();
    const std::size_t m = adapter.cols();
    const std::size_t k = cfg.k;

    AdapterGradients g;
    g.grad_d.assign(k, 0.0);
    const std::size_t r0 = adapter.first_scaled_row();
    // Row r0+i of G_base = g_yᵀ·x, restricted to the columns the variant touches.
    std::vector<double> g_row(m);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t row = r0 + i;
        std::fill(g_row.begin(), g_row.end(), 0.0);
        for (std::size_t b = 0; b < batch; ++b) {
            const double gb = g_y(b, row);
            if (gb == 0.0) continue;
            auto xb = x.row(b);
            for (std::size_t j = 0; j < m; ++j) g_row[j] += gb * xb[j];
        }
        double acc = 0.0;
        if (cfg.variant == Variant::hadamard) {
            const std::size_t c0 = cfg.direction == Direction::top ? 0 : m - k;
            for (std::size_t j = c0; j < c0 + k; ++j) acc += g_row[j] * adapter.w_frozen()(row, j);
        } else {
            auto mrow = adapter.m_cached().row(i);
            for (std::size_t j = 0; j < m; ++j) acc += g_row[j] * mrow[j];
        }
        g.grad_d[i] = acc;
    }

    const DenseMatrix xl = lora_input(adapter, x, mode, step);
    const DenseMatrix hidden = matmul_nt(xl, p.b);  // batch × r
    g.grad_a = scale(matmul_tn(g_y, hidden), s);     // n × r
    const DenseMatrix g_hidden = matmul(g_y, p.a);  // batch × r
    g.grad_b = scale(matmul_tn(g_hidden, xl), s);   // r × m
    return g;
}

}  // namespace speclora
