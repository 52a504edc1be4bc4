#include "bido/matrix.hpp"

#include <cmath>
#include <sstream>

#include "bido/errors.hpp"

namespace bido {

namespace {

constexpr double kPowerIterTol = 1e-12;
constexpr int kPowerIterCap = 10000;

void require_square(const Matrix& m, const char* who) {
    if (m.rows() == 0 || m.cols() == 0) {
        throw DimensionError(std::string(who) + ": empty matrix");
    }
    if (m.rows() != m.cols()) {
        std::ostringstream os;
        os << who << ": expected square matrix, got " << m.rows() << "x" << m.cols();
        throw DimensionError(os.str());
    }
}

}  // namespace

Matrix centering_matrix(int n) {
    if (n < 1) throw ParameterError("centering_matrix: n must be >= 1");
    Matrix h = Matrix::Identity(n, n);
    h.array() -= 1.0 / static_cast<double>(n);
    return h;
}

Matrix double_center(const Matrix& m) {
    require_square(m, "double_center");
    const auto n = m.rows();
    Vector row_mean = m.rowwise().mean();
    Eigen::RowVectorXd col_mean = m.colwise().mean();
    const double grand = col_mean.mean();
    Matrix out(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            out(i, j) = m(i, j) - row_mean(i) - col_mean(j) + grand;
        }
    }
    return out;
}

Matrix center_gram(const Matrix& k) {
    require_square(k, "center_gram");
    const auto n = k.rows();
    Vector mean = k.rowwise().mean();
    const double grand = mean.mean();
    Matrix out(n, n);
    // Fill the upper triangle and mirror so the result is exactly symmetric.
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            const double v = k(i, j) - mean(i) - mean(j) + grand;
            out(i, j) = v;
            out(j, i) = v;
        }
    }
    if (!out.allFinite()) throw EvaluationError("center_gram: non-finite result");
    return out;
}

namespace {

// Deterministic start vector with generic direction. The all-ones vector is
// unusable here: doubly centered products annihilate it exactly, leaving the
// iteration with no overlap on the top subspace.
Vector power_iteration_start(Eigen::Index n) {
    Vector v(n);
    std::uint64_t state = 0x9e3779b97f4a7c15ull;
    for (Eigen::Index i = 0; i < n; ++i) {
        state += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        z ^= z >> 31;
        v(i) = static_cast<double>(z >> 11) / 9007199254740992.0 - 0.5;
    }
    const double norm = v.norm();
    return v / norm;
}

}  // namespace

SpectralResult spectral_top_pair(const Matrix& a) {
    if (a.rows() == 0 || a.cols() == 0) {
        throw DimensionError("spectral_top_pair: empty matrix");
    }
    SpectralResult res;
    res.left = Vector::Zero(a.rows());

    const Matrix b = a.transpose() * a;
    Vector v = power_iteration_start(a.cols());
    double lambda = 0.0;
    for (int it = 1; it <= kPowerIterCap; ++it) {
        const Vector w = b * v;
        lambda = v.dot(w);
        res.iterations = it;
        // For symmetric B the eigenvalue error is bounded by the residual.
        if ((w - lambda * v).norm() <= kPowerIterTol * std::max(lambda, 1e-300)) break;
        const double norm_w = w.norm();
        if (norm_w == 0.0) {
            res.sigma = 0.0;
            res.right = v;
            return res;
        }
        v = w / norm_w;
    }
    res.sigma = std::sqrt(std::max(lambda, 0.0));
    res.right = v;
    if (res.sigma > 0.0) {
        res.left = (a * v) / res.sigma;
    }
    return res;
}

double spectral_norm(const Matrix& a) { return spectral_top_pair(a).sigma; }

GradientCheckReport finite_diff_check(const ScalarFn& f, const GradientFn& grad_f,
                                      const Vector& probe, double step, double tolerance) {
    if (!(step >= 1e-7 && step <= 1e-3)) {
        throw ParameterError("finite_diff_check: step must lie in [1e-7, 1e-3]");
    }
    const Vector analytic = grad_f(probe);
    if (analytic.size() != probe.size()) {
        throw DimensionError("finite_diff_check: gradient size mismatch");
    }
    GradientCheckReport report;
    report.probe_count = static_cast<int>(probe.size());
    Vector x = probe;
    for (Eigen::Index i = 0; i < probe.size(); ++i) {
        x(i) = probe(i) + step;
        const double fp = f(x);
        x(i) = probe(i) - step;
        const double fm = f(x);
        x(i) = probe(i);
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw EvaluationError("finite_diff_check: non-finite function value");
        }
        const double numeric = (fp - fm) / (2.0 * step);
        const double denom = std::max({std::abs(analytic(i)), std::abs(numeric), 1e-8});
        const double rel = std::abs(analytic(i) - numeric) / denom;
        report.max_relative_error = std::max(report.max_relative_error, rel);
    }
    report.pass = report.max_relative_error < tolerance;
    return report;
}

}  // namespace bido
