#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "bido/kernels.hpp"
#include "bido/matrix.hpp"

// Independent reference computations. Everything here exists to check the
// production estimators along a different algebraic route; nothing in this
// namespace is called from training or attack paths.
namespace bido::oracle {

/// Largest singular value via a dense SVD (not power iteration).
double svd_spectral_norm(const Matrix& a);

/// Tr(K H L H) / (N-1)^2 expanded entrywise as a quadruple sum over an
/// explicit centering matrix.
double hsic_naive(const Matrix& k, const Matrix& l);

/// COCO recomputed through the dense-SVD route.
double coco_via_svd(const Matrix& k, const Matrix& l);

struct JointSample {
    Vector x;
    Vector y;
};
using JointSampler = std::function<JointSample(std::mt19937_64&)>;

struct McEstimate {
    double value = 0.0;
    double standard_error = 0.0;
    int draws = 0;
};

// Monte Carlo estimate of the population HSIC
//   E[k(X,X')l(Y,Y')] - 2 E[k(X,X')l(Y,Y'')] + E[k(X,X')] E[l(Y,Y')]
// using four independent joint draws per sample. draws >= 1000.
McEstimate hsic_population_mc(const JointSampler& sampler, const KernelDescriptor& kernel_x,
                              const KernelDescriptor& kernel_y, int draws, std::uint64_t seed);

// Null distribution of the empirical HSIC under label permutation: values of
// <HKH, L_pi> / (N-1)^2 for `permutations` random relabelings pi.
std::vector<double> hsic_permutation_null(const Matrix& k, const Matrix& l, int permutations,
                                          std::uint64_t seed);

/// True iff `value` lies inside the central `coverage` mass of `null` values.
bool inside_central_interval(double value, std::vector<double> null, double coverage);

}  // namespace bido::oracle
