#include <cmath>
#include <cstdlib>
#include <ostream>
#include <random>

#include "bido/dependency.hpp"
#include "bido/experiment.hpp"
#include "bido/gradcheck.hpp"
#include "bido/oracles.hpp"

namespace bido {

namespace {

Matrix random_samples(Eigen::Index n, Eigen::Index d, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Matrix m(n, d);
    for (Eigen::Index i = 0; i < m.size(); ++i) *(m.data() + i) = dist(rng);
    return m;
}

// Test fixture hook: a deliberate bias added to the empirical estimator side
// of the oracle comparisons, driven by the BIDO_SELFTEST_PERTURB environment
// variable. Used to verify the gate actually trips.
double selftest_perturbation() {
    const char* env = std::getenv("BIDO_SELFTEST_PERTURB");
    return env ? std::atof(env) : 0.0;
}

struct Check {
    const char* name;
    bool (*run)(std::ostream&);
};

bool check_hsic_naive(std::ostream& log) {
    std::mt19937_64 rng(101);
    const double perturb = selftest_perturbation();
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const GramMatrix k = gaussian_gram(random_samples(8, 3, rng), 2.0);
        const GramMatrix l = gaussian_gram(random_samples(8, 2, rng), 1.5);
        const double mine = hsic(k, l).value + perturb;
        const double ref = oracle::hsic_naive(k.matrix, l.matrix);
        worst = std::max(worst, std::abs(mine - ref) / std::max(std::abs(ref), 1e-30));
    }
    log << "    max relative error " << worst << " (tolerance 1e-12)\n";
    return worst < 1e-12;
}

bool check_coco_svd(std::ostream& log) {
    std::mt19937_64 rng(202);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const GramMatrix k = gaussian_gram(random_samples(8, 3, rng), 2.0);
        const GramMatrix l = gaussian_gram(random_samples(8, 2, rng), 1.5);
        const double mine = coco(k, l).value;
        const double ref = oracle::coco_via_svd(k.matrix, l.matrix);
        worst = std::max(worst, std::abs(mine - ref) / std::max(std::abs(ref), 1e-30));
    }
    log << "    max relative error " << worst << " (tolerance 1e-9)\n";
    return worst < 1e-9;
}

bool check_population_mc(std::ostream& log) {
    // Dependent 1-D pair: Y = X + noise. The empirical estimator on a large
    // sample must agree with the Monte Carlo population value.
    const KernelDescriptor kx = KernelDescriptor::gaussian(1.0, 1);
    const KernelDescriptor ky = KernelDescriptor::gaussian(1.0, 1);
    const oracle::JointSampler sampler = [](std::mt19937_64& rng) {
        std::normal_distribution<double> n01(0.0, 1.0);
        oracle::JointSample s;
        s.x = Vector::Constant(1, n01(rng));
        s.y = Vector::Constant(1, s.x(0) + 0.5 * n01(rng));
        return s;
    };
    const oracle::McEstimate mc = oracle::hsic_population_mc(sampler, kx, ky, 100000, 303);

    std::mt19937_64 rng(304);
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<double> values;
    for (int rep = 0; rep < 8; ++rep) {
        const int n = 512;
        Matrix xs(n, 1);
        Matrix ys(n, 1);
        for (int i = 0; i < n; ++i) {
            xs(i, 0) = n01(rng);
            ys(i, 0) = xs(i, 0) + 0.5 * n01(rng);
        }
        values.push_back(hsic(gaussian_gram(xs, 1.0), gaussian_gram(ys, 1.0)).value);
    }
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size() - 1);
    const double se_emp = std::sqrt(var / static_cast<double>(values.size()));
    const double combined = std::sqrt(se_emp * se_emp + mc.standard_error * mc.standard_error);
    const double diff = std::abs(mean - mc.value);
    log << "    |empirical - MC| = " << diff << ", 3 combined SE = " << 3.0 * combined << "\n";
    return diff <= 3.0 * combined + 2e-3;  // small allowance for O(1/N) estimator bias
}

bool check_hsic_gradient(std::ostream& log) {
    std::mt19937_64 rng(405);
    const Matrix x = random_samples(6, 3, rng);
    const Matrix z0 = random_samples(6, 4, rng);
    const GramMatrix x_gram = gaussian_gram(x, default_sigma(3));
    const auto value_at = [&](const Vector& flat) {
        Matrix z(6, 4);
        for (Eigen::Index i = 0; i < z.size(); ++i) *(z.data() + i) = flat(i);
        return hsic(x_gram, gaussian_gram(z, default_sigma(4))).value;
    };
    const auto grad_at = [&](const Vector& flat) {
        Matrix z(6, 4);
        for (Eigen::Index i = 0; i < z.size(); ++i) *(z.data() + i) = flat(i);
        const Matrix g = dependency_value_and_gradient_wrt_z(
                             DependencyMeasure::hsic, x_gram,
                             gaussian_gram(z, default_sigma(4)), z)
                             .z_gradient;
        Vector out(g.size());
        for (Eigen::Index i = 0; i < g.size(); ++i) out(i) = *(g.data() + i);
        return out;
    };
    Vector flat(z0.size());
    for (Eigen::Index i = 0; i < z0.size(); ++i) flat(i) = *(z0.data() + i);
    const auto report = finite_diff_check(value_at, grad_at, flat, 1e-5, 1e-4);
    log << "    max relative error " << report.max_relative_error << " (tolerance 1e-4)\n";
    return report.pass;
}

bool check_objective_grad(std::ostream& log) {
    const ObjectiveProbe probe = make_objective_probe(DependencyMeasure::hsic, 0.7, 1.3, 11);
    const auto report = bido::check_objective_gradient(probe, 1e-5, 1e-4);
    log << "    max relative error " << report.max_relative_error << " (tolerance 1e-4)\n";
    return report.pass;
}

bool check_coco_gradient(std::ostream& log) {
    // Probe seeds are screened for a clear singular gap first.
    for (std::uint64_t seed = 21; seed < 60; ++seed) {
        const ObjectiveProbe probe = make_objective_probe(DependencyMeasure::coco, 0.7, 1.3, seed);
        if (min_coco_singular_gap(probe) <= 0.1) continue;
        const auto report = bido::check_objective_gradient(probe, 1e-5, 1e-3);
        log << "    max relative error " << report.max_relative_error
            << " (tolerance 1e-3, probe seed " << seed << ")\n";
        return report.pass;
    }
    log << "    no probe with singular gap > 0.1 found\n";
    return false;
}

bool check_permutation_calibration(std::ostream& log) {
    std::mt19937_64 rng(506);
    int inside = 0;
    const int trials = 12;
    for (int t = 0; t < trials; ++t) {
        const Matrix x = random_samples(64, 2, rng);
        const Matrix y = random_samples(64, 2, rng);  // independent of x
        const GramMatrix k = gaussian_gram(x, default_sigma(2));
        const GramMatrix l = gaussian_gram(y, default_sigma(2));
        const double observed = hsic(k, l).value;
        const auto null = oracle::hsic_permutation_null(k.matrix, l.matrix, 500,
                                                        rng());
        inside += oracle::inside_central_interval(observed, null, 0.99) ? 1 : 0;
    }
    log << "    " << inside << "/" << trials << " inside the central 99% null interval\n";
    return inside >= trials - 2;
}

}  // namespace

int cmd_selftest(std::ostream& log) {
    const Check checks[] = {
        {"hsic-vs-naive-oracle", check_hsic_naive},
        {"coco-vs-svd-oracle", check_coco_svd},
        {"hsic-vs-population-mc", check_population_mc},
        {"hsic-gradient-finite-diff", check_hsic_gradient},
        {"objective-gradient-finite-diff", check_objective_grad},
        {"coco-objective-gradient-finite-diff", check_coco_gradient},
        {"hsic-permutation-calibration", check_permutation_calibration},
    };
    for (const auto& check : checks) {
        log << "[ RUN  ] " << check.name << "\n";
        bool ok = false;
        try {
            ok = check.run(log);
        } catch (const std::exception& e) {
            log << "    exception: " << e.what() << "\n";
            ok = false;
        }
        if (!ok) {
            log << "[ FAIL ] " << check.name << "\n";
            return 1;
        }
        log << "[ PASS ] " << check.name << "\n";
    }
    log << "selftest: all checks passed\n";
    return 0;
}

}  // namespace bido
