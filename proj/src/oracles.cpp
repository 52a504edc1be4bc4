#include "bido/oracles.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "bido/errors.hpp"

namespace bido::oracle {

double svd_spectral_norm(const Matrix& a) {
    if (a.rows() == 0 || a.cols() == 0) throw DimensionError("svd_spectral_norm: empty matrix");
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    return svd.singularValues()(0);
}

double hsic_naive(const Matrix& k, const Matrix& l) {
    const auto n = k.rows();
    if (l.rows() != n || k.cols() != n || l.cols() != n) {
        throw DimensionError("hsic_naive: shape mismatch");
    }
    const Matrix h = centering_matrix(static_cast<int>(n));
    double trace = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            for (Eigen::Index p = 0; p < n; ++p) {
                for (Eigen::Index q = 0; q < n; ++q) {
                    trace += k(i, j) * h(j, p) * l(p, q) * h(q, i);
                }
            }
        }
    }
    const double denom = static_cast<double>(n - 1) * static_cast<double>(n - 1);
    return trace / denom;
}

double coco_via_svd(const Matrix& k, const Matrix& l) {
    const auto n = k.rows();
    if (l.rows() != n || k.cols() != n || l.cols() != n) {
        throw DimensionError("coco_via_svd: shape mismatch");
    }
    const Matrix h = centering_matrix(static_cast<int>(n));
    const Matrix product = (h * k * h) * (h * l * h);
    return std::sqrt(std::max(svd_spectral_norm(product), 0.0)) / static_cast<double>(n);
}

McEstimate hsic_population_mc(const JointSampler& sampler, const KernelDescriptor& kernel_x,
                              const KernelDescriptor& kernel_y, int draws, std::uint64_t seed) {
    if (draws < 1000) throw ParameterError("hsic_population_mc: draws must be >= 1000");
    std::mt19937_64 rng(seed);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int i = 0; i < draws; ++i) {
        const JointSample a = sampler(rng);
        const JointSample b = sampler(rng);
        const JointSample c = sampler(rng);
        const JointSample d = sampler(rng);
        const double kab = kernel_eval(kernel_x, a.x, b.x);
        // (c, d) are independent of (a, b), so kab * l(yc, yd) is an unbiased
        // sample of E[k] E[l].
        const double vi = kab * kernel_eval(kernel_y, a.y, b.y)
                          - 2.0 * kab * kernel_eval(kernel_y, a.y, c.y)
                          + kab * kernel_eval(kernel_y, c.y, d.y);
        sum += vi;
        sum_sq += vi * vi;
    }
    McEstimate est;
    est.draws = draws;
    est.value = sum / draws;
    const double variance = std::max(sum_sq / draws - est.value * est.value, 0.0);
    est.standard_error = std::sqrt(variance / draws);
    return est;
}

std::vector<double> hsic_permutation_null(const Matrix& k, const Matrix& l, int permutations,
                                          std::uint64_t seed) {
    const auto n = k.rows();
    if (l.rows() != n || k.cols() != n || l.cols() != n) {
        throw DimensionError("hsic_permutation_null: shape mismatch");
    }
    if (permutations < 1) throw ParameterError("hsic_permutation_null: need >= 1 permutation");
    const Matrix k_centered = center_gram(k);
    const double denom = static_cast<double>(n - 1) * static_cast<double>(n - 1);
    std::mt19937_64 rng(seed);
    std::vector<Eigen::Index> pi(static_cast<std::size_t>(n));
    std::iota(pi.begin(), pi.end(), 0);
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(permutations));
    for (int p = 0; p < permutations; ++p) {
        std::shuffle(pi.begin(), pi.end(), rng);
        double trace = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                trace += k_centered(i, j) * l(pi[static_cast<std::size_t>(i)],
                                              pi[static_cast<std::size_t>(j)]);
            }
        }
        values.push_back(trace / denom);
    }
    return values;
}

bool inside_central_interval(double value, std::vector<double> null, double coverage) {
    if (null.empty()) throw ParameterError("inside_central_interval: empty null");
    if (!(coverage > 0.0 && coverage < 1.0)) {
        throw ParameterError("inside_central_interval: coverage in (0,1)");
    }
    std::sort(null.begin(), null.end());
    const double tail = (1.0 - coverage) / 2.0;
    const auto lo_idx = static_cast<std::size_t>(
        std::floor(tail * static_cast<double>(null.size() - 1)));
    const auto hi_idx = static_cast<std::size_t>(
        std::ceil((1.0 - tail) * static_cast<double>(null.size() - 1)));
    return value >= null[lo_idx] && value <= null[hi_idx];
}

}  // namespace bido::oracle
