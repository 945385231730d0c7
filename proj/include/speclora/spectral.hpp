#pragma once

#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "speclora/linalg.hpp"

namespace speclora {

/// Per-index comparison of a pre-trained and a fine-tuned weight matrix.
struct SpectralReport {
    std::string matrix_name;
    std::vector<double> sigma_pre;
    std::vector<double> sigma_ft;
    // sigma_ft / sigma_pre; +infinity marks indices where sigma_pre < kRatioFloor.
    std::vector<double> sigma_ratio;
    std::vector<double> left_alignment;
    std::vector<double> right_alignment;
    double effective_rank_pre = 0.0;
    double effective_rank_ft = 0.0;
    double spectral_entropy_pre = 0.0;
    double spectral_entropy_ft = 0.0;
    // Indices whose pre-trained singular value is within kDegenerateGap·σ₁ of a neighbour.
    std::vector<std::size_t> degenerate_indices;

    static constexpr double kRatioFloor = 1e-12;
    static constexpr double kDegenerateGap = 1e-8;
};

struct Alignment {
    std::vector<double> left;
    std::vector<double> right;
};

/// |cos| between same-index singular vectors. Zero columns compare as 0.
Alignment vector_alignment(const SvdFactors& pre, const SvdFactors& ft);

/// Shannon entropy (nats) of σ normalized to a probability vector.
/// Throws DomainError for a negative entry or an all-zero / empty spectrum.
double spectral_entropy(std::span<const double> sigma);

/// exp(spectral_entropy(sigma)).
double effective_rank(std::span<const double> sigma);

// Degenerate-index detection on a sorted spectrum.
std::vector<std::size_t> degenerate_indices(std::span<const double> sigma, double rel_gap);

SpectralReport compare_spectra(const DenseMatrix& w_pre, const DenseMatrix& w_ft,
                               std::string matrix_name = {});

}  // namespace speclora
