#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "speclora/errors.hpp"
#include "speclora/linalg.hpp"

namespace speclora {

namespace {

// Column-major working copy: column c occupies [c*len, (c+1)*len).
struct ColumnStore {
    std::size_t len = 0;
    std::size_t count = 0;
    std::vector<double> data;

    std::span<double> col(std::size_t c) { return {data.data() + c * len, len}; }
    std::span<const double> col(std::size_t c) const { return {data.data() + c * len, len}; }
};

void rotate(std::span<double> x, std::span<double> y, double c, double s) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        const double yi = y[i];
        x[i] = c * xi - s * yi;
        y[i] = s * xi + c * yi;
    }
}

// Replaces vector `target` by a unit vector orthogonal to every column in `basis`.
void complete_basis(const std::vector<std::span<const double>>& basis, std::span<double> target) {
    const std::size_t len = target.size();
    for (std::size_t e = 0; e < len; ++e) {
        std::fill(target.begin(), target.end(), 0.0);
        target[e] = 1.0;
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& q : basis) {
                const double proj = dot(q, target);
                for (std::size_t i = 0; i < len; ++i) target[i] -= proj * q[i];
            }
        }
        const double nrm = norm2(target);
        if (nrm > 0.5) {
            for (double& t : target) t /= nrm;
            return;
        }
    }
    throw NumericError("thin_svd: could not complete orthonormal basis", 0.0);
}

}  // namespace

DenseMatrix SvdFactors::reconstruct() const {
    DenseMatrix us = u;
    for (std::size_t i = 0; i < us.rows(); ++i)
        for (std::size_t j = 0; j < sigma.size(); ++j) us(i, j) *= sigma[j];
    return matmul_nt(us, v);
}

SvdFactors thin_svd(const DenseMatrix& w, const SvdOptions& opts) {
    if (!w.all_finite()) {
        throw DomainError("thin_svd: input contains non-finite entries");
    }
    const std::size_t n = w.rows();
    const std::size_t m = w.cols();
    const bool transposed = n < m;
    // Work on a tall matrix a (len × p) so that p = min(n, m).
    const std::size_t len = transposed ? m : n;
    const std::size_t p = transposed ? n : m;

    ColumnStore a{len, p, std::vector<double>(len * p)};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            if (transposed)
                a.data[i * len + j] = w(i, j);
            else
                a.data[j * len + i] = w(i, j);
        }
    ColumnStore vw{p, p, std::vector<double>(p * p, 0.0)};
    for (std::size_t i = 0; i < p; ++i) vw.data[i * p + i] = 1.0;

    const std::size_t max_sweeps = std::max<std::size_t>(1, opts.max_sweeps_per_dim * p);
    bool converged = p < 2;
    double off = 0.0;
    for (std::size_t sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        bool rotated = false;
        off = 0.0;
        for (std::size_t i = 0; i + 1 < p; ++i) {
            for (std::size_t j = i + 1; j < p; ++j) {
                auto ci = a.col(i);
                auto cj = a.col(j);
                const double alpha = dot(ci, ci);
                const double beta = dot(cj, cj);
                const double gamma = dot(ci, cj);
                if (alpha == 0.0 || beta == 0.0 || gamma == 0.0) continue;
                const double measure = std::abs(gamma) / std::sqrt(alpha * beta);
                off = std::max(off, measure);
                if (measure <= opts.tolerance) continue;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
                const double c = 1.0 / std::hypot(1.0, t);
                const double s = c * t;
                rotate(ci, cj, c, s);
                rotate(vw.col(i), vw.col(j), c, s);
                rotated = true;
            }
        }
        converged = !rotated;
    }
    if (!converged) {
        throw NumericError("thin_svd: no convergence after " + std::to_string(max_sweeps) +
                               " sweeps, off-diagonal measure " + std::to_string(off),
                           off);
    }

    std::vector<double> norms(p);
    for (std::size_t c = 0; c < p; ++c) norms[c] = norm2(a.col(c));
    std::vector<std::size_t> order(p);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

    // Sorted left vectors of a (len × p, column store) and right vectors (p × p).
    ColumnStore ua{len, p, std::vector<double>(len * p)};
    ColumnStore va{p, p, std::vector<double>(p * p)};
    SvdFactors out;
    out.sigma.resize(p);
    std::vector<std::size_t> null_cols;
    for (std::size_t k = 0; k < p; ++k) {
        const std::size_t src = order[k];
        const double s = norms[src];
        out.sigma[k] = s;
        std::copy(vw.col(src).begin(), vw.col(src).end(), va.col(k).begin());
        auto dst = ua.col(k);
        if (s > 0.0 && std::isnormal(s)) {
            auto from = a.col(src);
            for (std::size_t i = 0; i < len; ++i) dst[i] = from[i] / s;
        } else {
            out.sigma[k] = 0.0;
            null_cols.push_back(k);
        }
    }
    if (!null_cols.empty()) {
        std::vector<std::span<const double>> basis;
        for (std::size_t k = 0; k < p; ++k)
            if (std::find(null_cols.begin(), null_cols.end(), k) == null_cols.end()) basis.push_back(ua.col(k));
        for (std::size_t k : null_cols) {
            complete_basis(basis, ua.col(k));
            basis.push_back(ua.col(k));
        }
    }

    // For w = a (not transposed): u = ua, v = va. For w = aᵀ: u = va, v = ua.
    const ColumnStore& uc = transposed ? va : ua;
    const ColumnStore& vc = transposed ? ua : va;
    out.u = DenseMatrix(n, p);
    out.v = DenseMatrix(m, p);
    for (std::size_t k = 0; k < p; ++k) {
        auto ucol = uc.col(k);
        std::size_t arg = 0;
        for (std::size_t i = 1; i < ucol.size(); ++i)
            if (std::abs(ucol[i]) > std::abs(ucol[arg])) arg = i;
        const double sign = ucol[arg] < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < n; ++i) out.u(i, k) = sign * ucol[i];
        auto vcol = vc.col(k);
        for (std::size_t i = 0; i < m; ++i) out.v(i, k) = sign * vcol[i];
    }
    return out;
}

}  // namespace speclora
