#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>

namespace bido {

// Dense 64-bit real matrix, row-major. Batches are stored one sample per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// H = I - (1/n) 11^T. Symmetric, idempotent, annihilates constants.
Matrix centering_matrix(int n);

/// Doubly centered Gram matrix HKH for symmetric square K.
/// The result is exactly symmetric; row and column sums vanish.
Matrix center_gram(const Matrix& k);

/// Double centering of an arbitrary square matrix (row means, column means,
/// grand mean). Used for chain-rule terms that are not symmetric.
Matrix double_center(const Matrix& m);

struct SpectralResult {
    double sigma = 0.0;  // largest singular value
    Vector left;         // u with A v = sigma u
    Vector right;        // v, unit norm
    int iterations = 0;
};

// Power iteration on A^T A. Deterministic all-ones start vector, relative
// tolerance 1e-12 on the Rayleigh quotient, iteration cap 10000. When the top
// singular value is (nearly) repeated the returned pair is an arbitrary
// element of the top subspace.
SpectralResult spectral_top_pair(const Matrix& a);

/// Largest singular value of a dense matrix.
double spectral_norm(const Matrix& a);

struct GradientCheckReport {
    double max_relative_error = 0.0;
    int probe_count = 0;
    bool pass = false;
};

using ScalarFn = std::function<double(const Vector&)>;
using GradientFn = std::function<Vector(const Vector&)>;

// Central-difference check of grad_f against f around `probe`. The relative
// error denominator is max(|analytic|, |numeric|, 1e-8). `step` must lie in
// [1e-7, 1e-3]; a non-finite f evaluation raises EvaluationError.
GradientCheckReport finite_diff_check(const ScalarFn& f, const GradientFn& grad_f,
                                      const Vector& probe, double step, double tolerance);

}  // namespace bido
