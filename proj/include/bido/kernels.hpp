#pragma once

#include <optional>

#include "bido/matrix.hpp"

namespace bido {

enum class KernelKind { gaussian, linear };

/// sigma = 5 sqrt(dim), the bandwidth rule used for all Gaussian kernels.
double default_sigma(int dim);

struct KernelDescriptor {
    KernelKind kind = KernelKind::gaussian;
    double sigma = 0.0;  // > 0 for gaussian, unused for linear
    int input_dim = 0;

    static KernelDescriptor gaussian(double sigma, int dim);
    static KernelDescriptor gaussian_by_rule(int dim);
    static KernelDescriptor linear(int dim);
};

// Kernel choice whose bandwidth may be resolved from the sample dimension at
// the point of use (latent taps have different widths).
struct KernelSpec {
    KernelKind kind = KernelKind::gaussian;
    std::optional<double> sigma;  // empty => 5 sqrt(d) rule for gaussian

    KernelDescriptor resolve(int dim) const;
    static KernelSpec gaussian_rule() { return {KernelKind::gaussian, std::nullopt}; }
    static KernelSpec gaussian_fixed(double sigma) { return {KernelKind::gaussian, sigma}; }
    static KernelSpec linear() { return {KernelKind::linear, std::nullopt}; }
};

struct GramMatrix {
    Matrix matrix;  // N x N, symmetric
    KernelDescriptor descriptor;
    int sample_count = 0;
};

/// K_ij = exp(-|x_i - x_j|^2 / (2 sigma^2)); samples are rows. Diagonal is
/// exactly 1 and coincident rows give exactly 1.
GramMatrix gaussian_gram(const Matrix& samples, double sigma);

/// K_ij = <x_i, x_j>.
GramMatrix linear_gram(const Matrix& samples);

GramMatrix build_gram(const Matrix& samples, const KernelDescriptor& descriptor);

/// Single kernel evaluation, used by Monte Carlo oracles.
double kernel_eval(const KernelDescriptor& descriptor, const Vector& a, const Vector& b);

// d/d(samples) of sum_ij upstream_ij K_ij. Returns an N x d matrix of
// per-sample gradients. The upstream matrix is symmetrized internally, which
// is valid because K is symmetric in its arguments.
Matrix gram_gradient_wrt_samples(const GramMatrix& gram, const Matrix& samples,
                                 const Matrix& upstream);

}  // namespace bido
