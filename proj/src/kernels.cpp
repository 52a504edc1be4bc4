#include "bido/kernels.hpp"

#include <cmath>
#include <sstream>

#include "bido/errors.hpp"

namespace bido {

double default_sigma(int dim) {
    if (dim < 1) throw ParameterError("default_sigma: dim must be >= 1");
    return 5.0 * std::sqrt(static_cast<double>(dim));
}

KernelDescriptor KernelDescriptor::gaussian(double sigma, int dim) {
    if (sigma <= 0.0) throw ParameterError("gaussian kernel: sigma must be > 0");
    if (dim < 1) throw ParameterError("gaussian kernel: dim must be >= 1");
    return {KernelKind::gaussian, sigma, dim};
}

KernelDescriptor KernelDescriptor::gaussian_by_rule(int dim) {
    return gaussian(default_sigma(dim), dim);
}

KernelDescriptor KernelDescriptor::linear(int dim) {
    if (dim < 1) throw ParameterError("linear kernel: dim must be >= 1");
    return {KernelKind::linear, 0.0, dim};
}

KernelDescriptor KernelSpec::resolve(int dim) const {
    if (kind == KernelKind::linear) return KernelDescriptor::linear(dim);
    if (sigma) return KernelDescriptor::gaussian(*sigma, dim);
    return KernelDescriptor::gaussian_by_rule(dim);
}

GramMatrix gaussian_gram(const Matrix& samples, double sigma) {
    if (sigma <= 0.0) throw ParameterError("gaussian_gram: sigma must be > 0");
    if (samples.rows() < 1 || samples.cols() < 1) {
        throw DimensionError("gaussian_gram: empty sample batch");
    }
    const auto n = samples.rows();
    const double inv = 1.0 / (2.0 * sigma * sigma);
    Matrix k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        k(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double sq = (samples.row(i) - samples.row(j)).squaredNorm();
            const double v = std::exp(-sq * inv);
            k(i, j) = v;
            k(j, i) = v;
        }
    }
    return {std::move(k), KernelDescriptor::gaussian(sigma, static_cast<int>(samples.cols())),
            static_cast<int>(n)};
}

GramMatrix linear_gram(const Matrix& samples) {
    if (samples.rows() < 1 || samples.cols() < 1) {
        throw DimensionError("linear_gram: empty sample batch");
    }
    const auto n = samples.rows();
    Matrix k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            const double v = samples.row(i).dot(samples.row(j));
            k(i, j) = v;
            k(j, i) = v;
        }
    }
    return {std::move(k), KernelDescriptor::linear(static_cast<int>(samples.cols())),
            static_cast<int>(n)};
}

GramMatrix build_gram(const Matrix& samples, const KernelDescriptor& descriptor) {
    if (samples.cols() != descriptor.input_dim) {
        std::ostringstream os;
        os << "build_gram: sample dim " << samples.cols() << " != kernel dim "
           << descriptor.input_dim;
        throw DimensionError(os.str());
    }
    return descriptor.kind == KernelKind::gaussian ? gaussian_gram(samples, descriptor.sigma)
                                                   : linear_gram(samples);
}

double kernel_eval(const KernelDescriptor& descriptor, const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw DimensionError("kernel_eval: dimension mismatch");
    if (descriptor.kind == KernelKind::linear) return a.dot(b);
    const double sq = (a - b).squaredNorm();
    return std::exp(-sq / (2.0 * descriptor.sigma * descriptor.sigma));
}

Matrix gram_gradient_wrt_samples(const GramMatrix& gram, const Matrix& samples,
                                 const Matrix& upstream) {
    const auto n = samples.rows();
    if (gram.matrix.rows() != n || gram.matrix.cols() != n) {
        throw DimensionError("gram_gradient_wrt_samples: gram/sample count mismatch");
    }
    if (upstream.rows() != n || upstream.cols() != n) {
        throw DimensionError("gram_gradient_wrt_samples: upstream shape mismatch");
    }
    // sum_ij U_ij K_ij == sum_ij sym(U)_ij K_ij, so grad_i collects
    // (U_ij + U_ji) K'_ij terms; `w` below carries the symmetrized weights.
    Matrix w = upstream + upstream.transpose();
    if (gram.descriptor.kind == KernelKind::linear) {
        return w * samples;
    }
    w.array() *= gram.matrix.array();
    const double inv_sq = 1.0 / (gram.descriptor.sigma * gram.descriptor.sigma);
    Matrix grad = w * samples;
    grad.noalias() -= w.rowwise().sum().asDiagonal() * samples;
    grad *= inv_sq;
    return grad;
}

}  // namespace bido
