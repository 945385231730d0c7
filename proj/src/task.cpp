#include <cmath>
#include <string>

#include "speclora/errors.hpp"
#include "speclora/random.hpp"
#include "speclora/train.hpp"

namespace speclora {

namespace {

constexpr double kPerturbationFraction = 0.05;

// Applies Householder reflections to g until its top-k left singular vectors
// coincide (up to sign) with the first k coordinate axes.
DenseMatrix align_top_directions(DenseMatrix g, std::size_t k) {
    if (k == 0) return g;
    const std::size_t n = g.rows();
    DenseMatrix u = thin_svd(g).u;
    std::vector<double> v(n);
    for (std::size_t j = 0; j < k; ++j) {
        double xnorm = 0.0;
        for (std::size_t i = j; i < n; ++i) xnorm = std::hypot(xnorm, u(i, j));
        if (xnorm == 0.0) continue;
        const double alpha = u(j, j) >= 0.0 ? -xnorm : xnorm;
        double vnorm_sq = 0.0;
        for (std::size_t i = j; i < n; ++i) {
            v[i] = u(i, j) - (i == j ? alpha : 0.0);
            vnorm_sq += v[i] * v[i];
        }
        if (vnorm_sq == 0.0) continue;
        auto reflect = [&](DenseMatrix& target) {
            for (std::size_t c = 0; c < target.cols(); ++c) {
                double proj = 0.0;
                for (std::size_t i = j; i < n; ++i) proj += v[i] * target(i, c);
                const double f = 2.0 * proj / vnorm_sq;
                for (std::size_t i = j; i < n; ++i) target(i, c) -= f * v[i];
            }
        };
        reflect(u);
        reflect(g);
    }
    return g;
}

Dataset sample(Rng& rng, const DenseMatrix& teacher, std::size_t count, double noise_sigma) {
    Dataset ds;
    ds.x = rng.normal_matrix(count, teacher.cols());
    ds.y = matmul_nt(ds.x, teacher);
    if (noise_sigma > 0.0) {
        for (double& y : ds.y.flat()) y += noise_sigma * rng.normal();
    }
    return ds;
}

}  // namespace

void TaskSpec::validate() const {
    const std::size_t p = std::min(n, m);
    if (n == 0 || m == 0) throw ConfigError("task: n and m must be positive");
    if (k_true > p) throw ConfigError("task: k_true exceeds min(n, m)");
    if (d_true.size() != k_true) {
        throw ConfigError("task: d_true has " + std::to_string(d_true.size()) + " entries, expected k_true = " +
                          std::to_string(k_true));
    }
    for (double d : d_true) {
        if (!(d >= 0.25 && d <= 4.0)) throw ConfigError("task: d_true entries must lie in [0.25, 4]");
    }
    if (rank_true > p) throw ConfigError("task: rank_true exceeds min(n, m)");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("task: noise_sigma must be >= 0");
    if (num_samples == 0) throw ConfigError("task: num_samples must be positive");
}

PlantedTask gen_planted_task(const TaskSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    PlantedTask task;
    task.w_base = align_top_directions(rng.normal_matrix(spec.n, spec.m), spec.k_true);
    task.w_teacher = exact_rescale(task.w_base, spec.d_true, Direction::top);
    if (spec.rank_true > 0) {
        const DenseMatrix e = matmul(rng.normal_matrix(spec.n, spec.rank_true), rng.normal_matrix(spec.rank_true, spec.m));
        const double target = kPerturbationFraction * frobenius_norm(task.w_base);
        task.w_teacher = add(task.w_teacher, scale(e, target / frobenius_norm(e)));
    }
    task.train = sample(rng, task.w_teacher, spec.num_samples, spec.noise_sigma);
    task.eval = sample(rng, task.w_teacher, (spec.num_samples + 3) / 4, spec.noise_sigma);
    return task;
}

}  // namespace speclora
