#pragma once

#include "bido/kernels.hpp"
#include "bido/matrix.hpp"

namespace bido {

enum class DependencyMeasure { coco, hsic };

const char* to_string(DependencyMeasure m);

struct DependencyMeasureConfig {
    DependencyMeasure measure = DependencyMeasure::hsic;
    KernelSpec kernel_x = KernelSpec::gaussian_rule();
    KernelSpec kernel_y = KernelSpec::linear();  // one-hot labels
    KernelSpec kernel_z = KernelSpec::gaussian_rule();
};

struct DependencyValue {
    double value = 0.0;
    DependencyMeasure measure = DependencyMeasure::hsic;
    int sample_count = 0;
};

/// Empirical constrained covariance: sqrt(|HKH HLH|_2) / N.
DependencyValue coco(const GramMatrix& k, const GramMatrix& l);

/// Empirical HSIC: Tr(K H L H) / (N-1)^2.
DependencyValue hsic(const GramMatrix& k, const GramMatrix& l);

DependencyValue dependency_value(DependencyMeasure measure, const GramMatrix& k,
                                 const GramMatrix& l);

struct DependencyGradient {
    DependencyValue value;
    Matrix z_gradient;  // N x d_z
};

// Value of d(other, Z) together with its gradient w.r.t. the z samples.
// HSIC backpropagates the centered partner Gram; COCO chains through the top
// singular pair of the centered product (any subgradient element when the top
// value is repeated) and through the square root. A vanishing measure yields
// a zero gradient.
DependencyGradient dependency_value_and_gradient_wrt_z(DependencyMeasure measure,
                                                       const GramMatrix& other_gram,
                                                       const GramMatrix& z_gram,
                                                       const Matrix& z_samples);

/// Spec-shaped convenience wrapper: builds the z Gram from config.kernel_z.
Matrix dependency_gradient_wrt_z(const DependencyMeasureConfig& config,
                                 const GramMatrix& x_or_y_gram, const Matrix& z_samples);

}  // namespace bido
