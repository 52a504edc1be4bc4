#include "bido/dependency.hpp"

#include <cmath>
#include <sstream>

#include "bido/errors.hpp"

namespace bido {

namespace {

// Below this, the square root in COCO is treated as non-differentiable noise
// and the subgradient 0 is returned.
constexpr double kCocoSigmaFloor = 1e-12;

int checked_sample_count(const GramMatrix& k, const GramMatrix& l, const char* who) {
    if (k.sample_count != l.sample_count) {
        std::ostringstream os;
        os << who << ": sample count mismatch (" << k.sample_count << " vs " << l.sample_count
           << ")";
        throw DimensionError(os.str());
    }
    if (k.sample_count < 2) {
        throw ParameterError(std::string(who) + ": estimators require N >= 2");
    }
    return k.sample_count;
}

}  // namespace

const char* to_string(DependencyMeasure m) {
    return m == DependencyMeasure::coco ? "coco" : "hsic";
}

DependencyValue coco(const GramMatrix& k, const GramMatrix& l) {
    const int n = checked_sample_count(k, l, "coco");
    const Matrix product = center_gram(k.matrix) * center_gram(l.matrix);
    const double sigma = spectral_norm(product);
    return {std::sqrt(std::max(sigma, 0.0)) / n, DependencyMeasure::coco, n};
}

DependencyValue hsic(const GramMatrix& k, const GramMatrix& l) {
    const int n = checked_sample_count(k, l, "hsic");
    const double trace = center_gram(k.matrix).cwiseProduct(l.matrix).sum();
    const double denom = static_cast<double>(n - 1) * static_cast<double>(n - 1);
    return {trace / denom, DependencyMeasure::hsic, n};
}

DependencyValue dependency_value(DependencyMeasure measure, const GramMatrix& k,
                                 const GramMatrix& l) {
    return measure == DependencyMeasure::coco ? coco(k, l) : hsic(k, l);
}

DependencyGradient dependency_value_and_gradient_wrt_z(DependencyMeasure measure,
                                                       const GramMatrix& other_gram,
                                                       const GramMatrix& z_gram,
                                                       const Matrix& z_samples) {
    const int n = checked_sample_count(other_gram, z_gram, "dependency gradient");
    if (z_samples.rows() != n) {
        throw DimensionError("dependency gradient: z sample count mismatch");
    }

    DependencyGradient out;
    if (measure == DependencyMeasure::hsic) {
        out.value = hsic(other_gram, z_gram);
        const double denom = static_cast<double>(n - 1) * static_cast<double>(n - 1);
        const Matrix upstream = center_gram(other_gram.matrix) / denom;
        out.z_gradient = gram_gradient_wrt_samples(z_gram, z_samples, upstream);
        return out;
    }

    // COCO: value = sqrt(sigma_max(A)) / N with A = centered(other) centered(z).
    const Matrix other_centered = center_gram(other_gram.matrix);
    const Matrix z_centered = center_gram(z_gram.matrix);
    const Matrix product = other_centered * z_centered;
    const SpectralResult top = spectral_top_pair(product);
    out.value = {std::sqrt(std::max(top.sigma, 0.0)) / n, DependencyMeasure::coco, n};
    if (top.sigma < kCocoSigmaFloor) {
        out.z_gradient = Matrix::Zero(z_samples.rows(), z_samples.cols());
        return out;
    }
    // d sigma / d K_z = H (other_centered u) v^T H; chain with
    // d value / d sigma = 1 / (2 N sqrt(sigma)).
    const Vector p = other_centered * top.left;
    Matrix upstream = double_center(p * top.right.transpose());
    upstream *= 1.0 / (2.0 * n * std::sqrt(top.sigma));
    out.z_gradient = gram_gradient_wrt_samples(z_gram, z_samples, upstream);
    return out;
}

Matrix dependency_gradient_wrt_z(const DependencyMeasureConfig& config,
                                 const GramMatrix& x_or_y_gram, const Matrix& z_samples) {
    const GramMatrix z_gram =
        build_gram(z_samples, config.kernel_z.resolve(static_cast<int>(z_samples.cols())));
    return dependency_value_and_gradient_wrt_z(config.measure, x_or_y_gram, z_gram, z_samples)
        .z_gradient;
}

}  // namespace bido
