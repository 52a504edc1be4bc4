#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "bido/errors.hpp"
#include "bido/matrix.hpp"
#include "bido/oracles.hpp"
#include "test_support.hpp"

using namespace bido;

TEST_CASE("centering matrix small cases") {
    const Matrix h1 = centering_matrix(1);
    CHECK(h1.rows() == 1);
    CHECK(h1(0, 0) == 0.0);

    const Matrix h2 = centering_matrix(2);
    CHECK(h2(0, 0) == doctest::Approx(0.5));
    CHECK(h2(0, 1) == doctest::Approx(-0.5));
    CHECK(h2(1, 0) == doctest::Approx(-0.5));
    CHECK(h2(1, 1) == doctest::Approx(0.5));

    const Matrix h4 = centering_matrix(4);
    const Vector ones = Vector::Ones(4);
    CHECK((h4 * ones).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("centering matrix is symmetric, idempotent, annihilates constants") {
    for (int n : {1, 2, 3, 5, 8, 17}) {
        const Matrix h = centering_matrix(n);
        CHECK((h - h.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((h * h - h).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((h * Vector::Ones(n)).cwiseAbs().maxCoeff() <= 1e-12);
    }
    CHECK_THROWS_AS(centering_matrix(0), ParameterError);
}

TEST_CASE("center_gram known values") {
    // All-ones Gram is annihilated.
    const Matrix ones = Matrix::Ones(3, 3);
    CHECK(center_gram(ones).cwiseAbs().maxCoeff() <= 1e-15);

    // HIH = H for n=2.
    const Matrix centered_eye = center_gram(Matrix::Identity(2, 2));
    CHECK(centered_eye(0, 0) == doctest::Approx(0.5));
    CHECK(centered_eye(0, 1) == doctest::Approx(-0.5));
}

TEST_CASE("center_gram equals explicit triple product") {
    std::mt19937_64 rng(7);
    const Matrix k = test::random_symmetric(5, rng);
    const Matrix h = centering_matrix(5);
    const Matrix expect = h * k * h;
    const Matrix got = center_gram(k);
    CHECK((expect - got).cwiseAbs().maxCoeff() < 1e-12);
    // Row and column sums vanish; result symmetric.
    CHECK(got.rowwise().sum().cwiseAbs().maxCoeff() < 1e-10);
    CHECK(got.colwise().sum().cwiseAbs().maxCoeff() < 1e-10);
    CHECK((got - got.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(center_gram(Matrix::Ones(2, 3)), DimensionError);
}

TEST_CASE("center_gram idempotent through H") {
    std::mt19937_64 rng(8);
    const Matrix k = test::random_symmetric(6, rng);
    const Matrix once = center_gram(k);
    const Matrix twice = center_gram(once);
    CHECK((once - twice).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("spectral norm of diagonal and zero matrices") {
    Matrix d = Matrix::Zero(2, 2);
    d(0, 0) = 3.0;
    d(1, 1) = 1.0;
    CHECK(spectral_norm(d) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(spectral_norm(Matrix::Zero(4, 4)) == 0.0);
    CHECK_THROWS_AS(spectral_norm(Matrix()), DimensionError);
}

TEST_CASE("spectral norm agrees with SVD oracle on random matrices") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix a = test::random_matrix(8, 8, rng);
        const double mine = spectral_norm(a);
        const double ref = oracle::svd_spectral_norm(a);
        CHECK(std::abs(mine - ref) <= 1e-9 * std::max(ref, 1e-30));
    }
}

TEST_CASE("spectral norm transpose invariance and submultiplicativity") {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix a = test::random_matrix(32, 32, rng);
        const Matrix b = test::random_matrix(32, 32, rng);
        const double sa = spectral_norm(a);
        const double sat = spectral_norm(Matrix(a.transpose()));
        CHECK(std::abs(sa - sat) <= 1e-9 * std::max(sa, 1e-30));
        const double sab = spectral_norm(Matrix(a * b));
        CHECK(sab <= sa * spectral_norm(b) * (1.0 + 1e-9));
    }
}

TEST_CASE("finite diff check on exact gradients") {
    const ScalarFn half_norm = [](const Vector& x) { return 0.5 * x.squaredNorm(); };
    const GradientFn identity = [](const Vector& x) { return x; };
    std::mt19937_64 rng(11);
    Vector probe(5);
    for (int i = 0; i < 5; ++i) probe(i) = std::normal_distribution<double>(0, 1)(rng);
    const auto report = finite_diff_check(half_norm, identity, probe, 1e-5, 1e-7);
    CHECK(report.pass);
    CHECK(report.probe_count == 5);
    CHECK(report.max_relative_error < 1e-7);

    const ScalarFn constant = [](const Vector&) { return 4.2; };
    const GradientFn zero = [](const Vector& x) { return Vector(Vector::Zero(x.size())); };
    const auto report2 = finite_diff_check(constant, zero, probe, 1e-5, 1e-7);
    CHECK(report2.pass);
    CHECK(report2.max_relative_error == 0.0);
}

TEST_CASE("finite diff check rejects bad steps and non-finite values") {
    const ScalarFn f = [](const Vector& x) { return x.sum(); };
    const GradientFn g = [](const Vector& x) { return Vector(Vector::Ones(x.size())); };
    CHECK_THROWS_AS(finite_diff_check(f, g, Vector::Ones(2), 1e-2, 1e-6), ParameterError);
    const ScalarFn bad = [](const Vector&) { return std::nan(""); };
    CHECK_THROWS_AS(finite_diff_check(bad, g, Vector::Ones(2), 1e-5, 1e-6), EvaluationError);
}

TEST_CASE("finite diff check catches a wrong gradient") {
    const ScalarFn f = [](const Vector& x) { return 0.5 * x.squaredNorm(); };
    const GradientFn wrong = [](const Vector& x) { return Vector(1.05 * x); };
    Vector probe = Vector::Ones(3);
    const auto report = finite_diff_check(f, wrong, probe, 1e-5, 1e-4);
    CHECK_FALSE(report.pass);
}
