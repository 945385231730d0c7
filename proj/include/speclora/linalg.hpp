#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace speclora {

/// Row-major dense matrix of doubles. Zero-sized dimensions are allowed.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

    static DenseMatrix zeros(std::size_t rows, std::size_t cols) { return {rows, cols, 0.0}; }
    static DenseMatrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }
    std::vector<double> col(std::size_t c) const;

    std::span<double> flat() noexcept { return data_; }
    std::span<const double> flat() const noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    bool all_finite() const noexcept;

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
// a · bᵀ without materializing the transpose.
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);
// aᵀ · b without materializing the transpose.
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix transpose(const DenseMatrix& a);

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix scale(const DenseMatrix& a, double s);
DenseMatrix hadamard(const DenseMatrix& a, const DenseMatrix& b);

double frobenius_norm(const DenseMatrix& w);
// Largest absolute entry; 0 for an empty matrix.
double max_abs(const DenseMatrix& w);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
/// Cosine of the angle between two equal-length nonzero vectors.
/// Throws DimensionError on length mismatch, DomainError on a zero vector.
double cosine(std::span<const double> a, std::span<const double> b);

/// Thin singular value decomposition w = u · diag(sigma) · vᵀ.
///
/// sigma has length p = min(rows, cols) and is sorted non-increasing. The
/// largest-magnitude entry of every column of u is non-negative (first such
/// row on ties) and v's columns carry the matching sign.
struct SvdFactors {
    DenseMatrix u;              // n × p
    std::vector<double> sigma;  // p
    DenseMatrix v;              // m × p

    std::size_t rank_bound() const noexcept { return sigma.size(); }
    DenseMatrix reconstruct() const;
};

struct SvdOptions {
    double tolerance = 1e-13;
    // Sweep cap is max_sweeps_per_dim · min(n, m).
    std::size_t max_sweeps_per_dim = 100;
};

/// One-sided (Hestenes) Jacobi SVD. Deterministic: identical inputs give
/// bitwise identical factors. Throws DomainError on non-finite input and
/// NumericError (carrying the final off-diagonal measure) if the sweep cap is hit.
SvdFactors thin_svd(const DenseMatrix& w, const SvdOptions& opts = {});

}  // namespace speclora
