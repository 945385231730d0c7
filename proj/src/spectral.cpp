#include "speclora/spectral.hpp"

#include <algorithm>
#include <cmath>

#include "speclora/errors.hpp"

namespace speclora {

namespace {

double abs_cosine_or_zero(std::span<const double> a, std::span<const double> b) {
    if (norm2(a) == 0.0 || norm2(b) == 0.0) return 0.0;
    return std::abs(cosine(a, b));
}

}  // namespace

Alignment vector_alignment(const SvdFactors& pre, const SvdFactors& ft) {
    if (pre.u.rows() != ft.u.rows() || pre.u.cols() != ft.u.cols() || pre.v.rows() != ft.v.rows() ||
        pre.v.cols() != ft.v.cols()) {
        throw DimensionError("vector_alignment: factor shapes differ");
    }
    const std::size_t p = pre.u.cols();
    Alignment out;
    out.left.resize(p);
    out.right.resize(p);
    for (std::size_t i = 0; i < p; ++i) {
        out.left[i] = abs_cosine_or_zero(pre.u.col(i), ft.u.col(i));
        out.right[i] = abs_cosine_or_zero(pre.v.col(i), ft.v.col(i));
    }
    return out;
}

double spectral_entropy(std::span<const double> sigma) {
    double total = 0.0;
    for (double s : sigma) {
        if (!(s >= 0.0) || !std::isfinite(s)) {
            throw DomainError("spectral_entropy: singular values must be finite and non-negative");
        }
        total += s;
    }
    if (total == 0.0) {
        throw DomainError("spectral_entropy: all-zero spectrum");
    }
    double h = 0.0;
    for (double s : sigma) {
        if (s == 0.0) continue;
        const double p = s / total;
        h -= p * std::log(p);
    }
    return std::max(h, 0.0);
}

double effective_rank(std::span<const double> sigma) { return std::exp(spectral_entropy(sigma)); }

std::vector<std::size_t> degenerate_indices(std::span<const double> sigma, double rel_gap) {
    std::vector<std::size_t> out;
    if (sigma.empty()) return out;
    const double threshold = rel_gap * sigma.front();
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        double gap = std::numeric_limits<double>::infinity();
        if (i + 1 < sigma.size()) gap = std::min(gap, sigma[i] - sigma[i + 1]);
        if (i > 0) gap = std::min(gap, sigma[i - 1] - sigma[i]);
        if (gap < threshold) out.push_back(i);
    }
    return out;
}

SpectralReport compare_spectra(const DenseMatrix& w_pre, const DenseMatrix& w_ft, std::string matrix_name) {
    if (w_pre.rows() != w_ft.rows() || w_pre.cols() != w_ft.cols()) {
        throw DimensionError("compare_spectra: " + (matrix_name.empty() ? std::string("matrix") : matrix_name) +
                             " shape " + std::to_string(w_pre.rows()) + "x" + std::to_string(w_pre.cols()) +
                             " vs " + std::to_string(w_ft.rows()) + "x" + std::to_string(w_ft.cols()));
    }
    const SvdFactors pre = thin_svd(w_pre);
    const SvdFactors ft = thin_svd(w_ft);

    SpectralReport report;
    report.matrix_name = std::move(matrix_name);
    report.sigma_pre = pre.sigma;
    report.sigma_ft = ft.sigma;
    report.sigma_ratio.resize(pre.sigma.size());
    for (std::size_t i = 0; i < pre.sigma.size(); ++i) {
        report.sigma_ratio[i] = pre.sigma[i] < SpectralReport::kRatioFloor
                                    ? std::numeric_limits<double>::infinity()
                                    : ft.sigma[i] / pre.sigma[i];
    }
    auto align = vector_alignment(pre, ft);
    report.left_alignment = std::move(align.left);
    report.right_alignment = std::move(align.right);
    report.spectral_entropy_pre = spectral_entropy(pre.sigma);
    report.spectral_entropy_ft = spectral_entropy(ft.sigma);
    report.effective_rank_pre = std::exp(report.spectral_entropy_pre);
    report.effective_rank_ft = std::exp(report.spectral_entropy_ft);
    report.degenerate_indices = degenerate_indices(pre.sigma, SpectralReport::kDegenerateGap);
    return report;
}

}  // namespace speclora
