#pragma once

#include <random>

#include "bido/kernels.hpp"
#include "bido/matrix.hpp"

namespace bido::test {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                            double scale = 1.0) {
    std::normal_distribution<double> dist(0.0, scale);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) *(m.data() + i) = dist(rng);
    return m;
}

inline Matrix random_symmetric(Eigen::Index n, std::mt19937_64& rng) {
    Matrix a = random_matrix(n, n, rng);
    return Matrix(0.5 * (a + a.transpose()));
}

/// Random Gaussian Gram over standard-normal samples; always PSD.
inline GramMatrix random_gaussian_gram(Eigen::Index n, Eigen::Index d, std::mt19937_64& rng,
                                       double sigma = 2.0) {
    return gaussian_gram(random_matrix(n, d, rng), sigma);
}

inline Vector flatten(const Matrix& m) {
    Vector v(m.size());
    for (Eigen::Index i = 0; i < m.size(); ++i) v(i) = *(m.data() + i);
    return v;
}

inline Matrix unflatten(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) *(m.data() + i) = v(i);
    return m;
}

}  // namespace bido::test
