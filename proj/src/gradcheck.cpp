#include "speclora/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "speclora/errors.hpp"
#include "speclora/random.hpp"

namespace speclora {

namespace {

double half_sq_norm(const DenseMatrix& y) {
    double s = 0.0;
    for (double v : y.flat()) s += v * v;
    return 0.5 * s;
}

struct Checker {
    const GradcheckOptions& opts;
    GradcheckResult& result;

    void compare(SpecLoraAdapter& adapter, const DenseMatrix& x, double& param, double analytic,
                 const std::string& label) {
        const double saved = param;
        param = saved + opts.step;
        const double plus = half_sq_norm(forward(adapter, x));
        param = saved - opts.step;
        const double minus = half_sq_norm(forward(adapter, x));
        param = saved;
        const double numeric = (plus - minus) / (2.0 * opts.step);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), opts.denominator_floor});
        const double rel = std::abs(analytic - numeric) / denom;
        ++result.components;
        if (rel > result.max_rel_error || std::isnan(rel)) {
            result.max_rel_error = std::isnan(rel) ? std::numeric_limits<double>::infinity() : rel;
            result.worst = label;
        }
    }
};

}  // namespace

GradcheckResult run_gradcheck(const GradcheckOptions& opts) {
    if (opts.cases == 0) {
        throw ConfigError("gradcheck: cases must be positive");
    }
    GradcheckResult result;
    Checker checker{opts, result};
    for (std::size_t c = 0; c < opts.cases; ++c) {
        Rng rng(mix64(opts.seed) ^ mix64(c + 1));
        const std::size_t n = 2 + rng.below(7);
        const std::size_t m = 2 + rng.below(7);
        const std::size_t p = std::min(n, m);
        AdapterConfig cfg;
        cfg.rank = 1 + rng.below(std::min<std::size_t>(3, p));
        cfg.k = rng.below(std::min<std::size_t>(4, p) + 1);
        cfg.alpha = 2.0 * static_cast<double>(cfg.rank);
        cfg.dropout_p = 0.0;
        cfg.variant = (c / 2) % 2 == 0 ? Variant::hadamard : Variant::svd_exact;
        cfg.direction = c % 2 == 0 ? Direction::top : Direction::bottom;
        cfg.seed = mix64(c);
        const std::size_t batch = 1 + rng.below(4);

        auto adapter = SpecLoraAdapter::init(rng.normal_matrix(n, m), cfg);
        auto& params = adapter.params();
        for (double& di : params.d) di = rng.uniform(0.5, 1.5);
        params.a = rng.normal_matrix(n, cfg.rank);
        params.b = rng.normal_matrix(cfg.rank, m);
        const DenseMatrix x = rng.normal_matrix(batch, m);

        const DenseMatrix y = forward(adapter, x);
        AdapterGradients g = backward(adapter, x, y);  // ∂(½‖y‖²)/∂y = y
        if (opts.corrupt_gradient && c == 0) {
            if (!g.grad_a.empty()) g.grad_a.flat()[0] += 1.0 + std::abs(g.grad_a.flat()[0]);
        }

        const std::string tag = "case " + std::to_string(c) + " (" + std::string(to_string(cfg.variant)) + "/" +
                                std::string(to_string(cfg.direction)) + ")";
        for (std::size_t i = 0; i < params.d.size(); ++i)
            checker.compare(adapter, x, params.d[i], g.grad_d[i], tag + " d[" + std::to_string(i) + "]");
        for (std::size_t i = 0; i < params.a.size(); ++i)
            checker.compare(adapter, x, params.a.flat()[i], g.grad_a.flat()[i], tag + " A[" + std::to_string(i) + "]");
        for (std::size_t i = 0; i < params.b.size(); ++i)
            checker.compare(adapter, x, params.b.flat()[i], g.grad_b.flat()[i], tag + " B[" + std::to_string(i) + "]");
        ++result.cases;
    }
    return result;
}

}  // namespace speclora
