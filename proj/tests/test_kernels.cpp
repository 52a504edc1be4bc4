#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "bido/errors.hpp"
#include "bido/kernels.hpp"
#include "test_support.hpp"

using namespace bido;

TEST_CASE("default sigma rule") {
    CHECK(default_sigma(1) == doctest::Approx(5.0));
    CHECK(default_sigma(4) == doctest::Approx(10.0));
    CHECK(default_sigma(784) == doctest::Approx(140.0));
    CHECK_THROWS_AS(default_sigma(0), ParameterError);
}

TEST_CASE("gaussian gram basics") {
    Matrix two_identical(2, 3);
    two_identical << 0.3, 0.7, 0.1, 0.3, 0.7, 0.1;
    const GramMatrix same = gaussian_gram(two_identical, 1.0);
    CHECK(same.matrix(0, 0) == 1.0);
    CHECK(same.matrix(0, 1) == 1.0);
    CHECK(same.matrix(1, 0) == 1.0);
    CHECK(same.matrix(1, 1) == 1.0);

    const double sigma = 0.8;
    Matrix pair(2, 1);
    pair << 0.0, sigma * std::sqrt(2.0);
    const GramMatrix g = gaussian_gram(pair, sigma);
    CHECK(g.matrix(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

    CHECK_THROWS_AS(gaussian_gram(pair, 0.0), ParameterError);
    CHECK_THROWS_AS(gaussian_gram(pair, -1.0), ParameterError);
}

TEST_CASE("gaussian gram entries in (0,1], diagonal exactly 1") {
    std::mt19937_64 rng(3);
    const Matrix samples = test::random_matrix(12, 5, rng);
    const GramMatrix g = gaussian_gram(samples, 1.7);
    for (Eigen::Index i = 0; i < 12; ++i) {
        CHECK(g.matrix(i, i) == 1.0);
        for (Eigen::Index j = 0; j < 12; ++j) {
            CHECK(g.matrix(i, j) > 0.0);
            CHECK(g.matrix(i, j) <= 1.0);
            if (i != j) CHECK(g.matrix(i, j) < 1.0 - 1e-12);  // distinct random points
        }
    }
    CHECK((g.matrix - g.matrix.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gaussian gram scale invariance") {
    std::mt19937_64 rng(4);
    const Matrix samples = test::random_matrix(9, 4, rng);
    const double sigma = 1.3;
    const double factor = 17.5;
    const GramMatrix a = gaussian_gram(samples, sigma);
    const GramMatrix b = gaussian_gram(Matrix(factor * samples), factor * sigma);
    CHECK((a.matrix - b.matrix).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("linear gram known values") {
    Matrix pts(2, 2);
    pts << 1.0, 2.0, 3.0, -1.0;
    const GramMatrix g = linear_gram(pts);
    CHECK(g.matrix(0, 1) == doctest::Approx(1.0));
    CHECK(g.matrix(0, 0) == doctest::Approx(5.0));

    // One-hot labels: same class -> 1, different class -> 0.
    Matrix onehot(3, 4);
    onehot.setZero();
    onehot(0, 2) = 1.0;
    onehot(1, 2) = 1.0;
    onehot(2, 0) = 1.0;
    const GramMatrix lg = linear_gram(onehot);
    CHECK(lg.matrix(0, 1) == 1.0);
    CHECK(lg.matrix(0, 2) == 0.0);

    const GramMatrix zeros = linear_gram(Matrix::Zero(3, 2));
    CHECK(zeros.matrix.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gram gradient: zero upstream and coincident gaussian samples") {
    std::mt19937_64 rng(5);
    const Matrix samples = test::random_matrix(4, 3, rng);
    const GramMatrix g = gaussian_gram(samples, 2.0);
    const Matrix zero_up = Matrix::Zero(4, 4);
    CHECK(gram_gradient_wrt_samples(g, samples, zero_up).cwiseAbs().maxCoeff() == 0.0);

    const Matrix identical = Matrix::Ones(4, 3) * 0.25;
    const GramMatrix gi = gaussian_gram(identical, 2.0);
    const Matrix up = test::random_matrix(4, 4, rng);
    CHECK(gram_gradient_wrt_samples(gi, identical, up).cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_AS(gram_gradient_wrt_samples(g, samples, Matrix::Zero(3, 3)), DimensionError);
}

TEST_CASE("gram gradient matches finite differences") {
    std::mt19937_64 rng(6);
    for (const KernelKind kind : {KernelKind::gaussian, KernelKind::linear}) {
        for (int trial = 0; trial < 3; ++trial) {
            const Eigen::Index n = 4 + trial;
            const Eigen::Index d = 3 + trial;
            const Matrix samples = test::random_matrix(n, d, rng);
            const Matrix upstream = test::random_matrix(n, n, rng);
            const KernelDescriptor desc = kind == KernelKind::gaussian
                                              ? KernelDescriptor::gaussian(1.9, static_cast<int>(d))
                                              : KernelDescriptor::linear(static_cast<int>(d));
            const auto value_at = [&](const Vector& flat) {
                const Matrix s = test::unflatten(flat, n, d);
                return (upstream.array() * build_gram(s, desc).matrix.array()).sum();
            };
            const auto grad_at = [&](const Vector& flat) {
                const Matrix s = test::unflatten(flat, n, d);
                return test::flatten(gram_gradient_wrt_samples(build_gram(s, desc), s, upstream));
            };
            const auto report =
                finite_diff_check(value_at, grad_at, test::flatten(samples), 1e-5, 1e-5);
            CHECK(report.pass);
        }
    }
}

TEST_CASE("kernel spec resolution") {
    const KernelDescriptor by_rule = KernelSpec::gaussian_rule().resolve(16);
    CHECK(by_rule.sigma == doctest::Approx(20.0));
    const KernelDescriptor fixed = KernelSpec::gaussian_fixed(3.0).resolve(16);
    CHECK(fixed.sigma == doctest::Approx(3.0));
    CHECK(KernelSpec::linear().resolve(5).kind == KernelKind::linear);
    CHECK_THROWS_AS(build_gram(Matrix::Ones(2, 3), KernelDescriptor::gaussian(1.0, 4)),
                    DimensionError);
}
