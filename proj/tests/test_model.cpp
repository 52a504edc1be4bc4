#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "bido/errors.hpp"
#include "bido/gradcheck.hpp"
#include "bido/model.hpp"
#include "test_support.hpp"

using namespace bido;

TEST_CASE("zero parameters give uniform output") {
    ClassifierModel model = make_mlp(4, {5}, {true}, 3, 1);
    for (auto& p : model.dense) {
        p.weights.setZero();
        p.bias.setZero();
    }
    std::mt19937_64 rng(2);
    const Matrix batch = test::random_matrix(6, 4, rng);
    const ForwardTrace trace = forward_with_taps(model, batch);
    CHECK((trace.probabilities.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("hand-computed single dense layer softmax") {
    // 2 -> 2 dense with known weights, one sample.
    ClassifierModel model;
    model.input_dim = 2;
    model.class_count = 2;
    model.layers = {{LayerKind::dense, 2, 2, false}, {LayerKind::softmax_output, 2, 2, false}};
    DenseParams p;
    p.weights.resize(2, 2);
    p.weights << 1.0, -1.0, 0.5, 2.0;
    p.bias.resize(2);
    p.bias << 0.1, -0.2;
    model.dense.push_back(p);
    model.validate();

    Matrix x(1, 2);
    x << 0.3, 0.7;
    const ForwardTrace trace = forward_with_taps(model, x);
    const double z0 = 1.0 * 0.3 - 1.0 * 0.7 + 0.1;   // -0.3
    const double z1 = 0.5 * 0.3 + 2.0 * 0.7 - 0.2;   //  1.35
    const double e0 = std::exp(z0 - z1);
    const double p1 = 1.0 / (1.0 + e0);
    CHECK(trace.logits(0, 0) == doctest::Approx(z0).epsilon(1e-12));
    CHECK(trace.logits(0, 1) == doctest::Approx(z1).epsilon(1e-12));
    CHECK(trace.probabilities(0, 1) == doctest::Approx(p1).epsilon(1e-12));
}

TEST_CASE("trace taps have one row per sample and match tap dims") {
    ClassifierModel model = make_mlp(7, {6, 5, 4}, {true, false, true}, 3, 3);
    CHECK(model.tap_count() == 2);
    CHECK(model.tap_dims() == std::vector<int>{6, 4});
    std::mt19937_64 rng(4);
    const Matrix batch = test::random_matrix(9, 7, rng);
    const ForwardTrace trace = forward_with_taps(model, batch);
    REQUIRE(trace.taps.size() == 2);
    CHECK(trace.taps[0].rows() == 9);
    CHECK(trace.taps[0].cols() == 6);
    CHECK(trace.taps[1].cols() == 4);
    CHECK_THROWS_AS(forward_with_taps(model, test::random_matrix(2, 5, rng)), DimensionError);
}

TEST_CASE("softmax is stabilized and normalized for huge logits") {
    ClassifierModel model;
    model.input_dim = 3;
    model.class_count = 3;
    model.layers = {{LayerKind::dense, 3, 3, false}, {LayerKind::softmax_output, 3, 3, false}};
    DenseParams p;
    p.weights = Matrix::Identity(3, 3) * 1e4;
    p.bias = Vector::Zero(3);
    model.dense.push_back(p);
    Matrix x(2, 3);
    x << 1.0, 0.5, -1.0, -1.0, -0.5, 1.0;
    const ForwardTrace trace = forward_with_taps(model, x);
    CHECK(trace.probabilities.allFinite());
    for (Eigen::Index r = 0; r < 2; ++r) {
        CHECK(std::abs(trace.probabilities.row(r).sum() - 1.0) < 1e-9);
    }
}

TEST_CASE("forward is deterministic") {
    ClassifierModel model = make_mlp(5, {8, 6}, {true, true}, 4, 5);
    std::mt19937_64 rng(6);
    const Matrix batch = test::random_matrix(11, 5, rng);
    const ForwardTrace a = forward_with_taps(model, batch);
    const ForwardTrace b = forward_with_taps(model, batch);
    CHECK((a.probabilities - b.probabilities).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cross entropy known values") {
    Matrix perfect(1, 3);
    perfect << 0.0, 1.0, 0.0;
    Matrix label(1, 3);
    label << 0.0, 1.0, 0.0;
    CHECK(cross_entropy(perfect, label) == doctest::Approx(0.0).epsilon(1e-12));

    Matrix uniform = Matrix::Constant(4, 10, 0.1);
    Matrix labels10 = Matrix::Zero(4, 10);
    for (int r = 0; r < 4; ++r) labels10(r, r) = 1.0;
    CHECK(cross_entropy(uniform, labels10) == doctest::Approx(std::log(10.0)).epsilon(1e-12));

    Matrix p(1, 3);
    p << 0.7, 0.2, 0.1;
    Matrix y0(1, 3);
    y0 << 1.0, 0.0, 0.0;
    CHECK(cross_entropy(p, y0) == doctest::Approx(-std::log(0.7)).epsilon(1e-12));

    Matrix not_onehot(1, 3);
    not_onehot << 0.5, 0.5, 0.0;
    CHECK_THROWS_AS(cross_entropy(p, not_onehot), ParameterError);
}

TEST_CASE("backward: zero upstream gives zero parameter gradients") {
    ClassifierModel model = make_mlp(4, {5}, {true}, 3, 7);
    std::mt19937_64 rng(8);
    const Matrix batch = test::random_matrix(5, 4, rng);
    const ForwardTrace trace = forward_with_taps(model, batch);
    UpstreamGrads upstream;
    upstream.d_probabilities = Matrix::Zero(5, 3);
    const BackwardResult back = backward(model, trace, upstream);
    for (const auto& g : back.dense_grads) {
        CHECK(g.weights.cwiseAbs().maxCoeff() == 0.0);
        CHECK(g.bias.cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK(back.d_input.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cross-entropy-only parameter gradient passes finite differences") {
    const ObjectiveProbe probe = make_objective_probe(DependencyMeasure::hsic, 0.0, 0.0, 21);
    const auto report = check_objective_gradient(probe, 1e-5, 1e-5);
    CHECK(report.pass);
    CHECK(report.probe_count == 39);
}

TEST_CASE("full objective gradient with HSIC taps passes finite differences") {
    const ObjectiveProbe probe = make_objective_probe(DependencyMeasure::hsic, 0.8, 1.6, 22);
    const auto report = check_objective_gradient(probe, 1e-5, 1e-4);
    CHECK(report.pass);
}

TEST_CASE("input gradient of class log-confidence passes finite differences") {
    ClassifierModel model = make_mlp(4, {6, 5}, {true, true}, 3, 23);
    std::mt19937_64 rng(24);
    const Matrix x0 = test::random_matrix(2, 4, rng);
    const int target_class = 1;
    const auto value_at = [&](const Vector& flat) {
        const Matrix x = test::unflatten(flat, 2, 4);
        const ForwardTrace t = forward_with_taps(model, x);
        double total = 0.0;
        for (Eigen::Index r = 0; r < 2; ++r) total += std::log(t.probabilities(r, target_class));
        return total;
    };
    const auto grad_at = [&](const Vector& flat) {
        const Matrix x = test::unflatten(flat, 2, 4);
        const ForwardTrace t = forward_with_taps(model, x);
        Matrix d_logits = -t.probabilities;
        d_logits.col(target_class).array() += 1.0;
        UpstreamGrads up;
        up.d_logits = d_logits;
        return test::flatten(backward(model, t, up, false).d_input);
    };
    const auto report = finite_diff_check(value_at, grad_at, test::flatten(x0), 1e-5, 1e-5);
    CHECK(report.pass);
}

TEST_CASE("one sufficiently small gradient step decreases the objective") {
    const ObjectiveProbe probe = make_objective_probe(DependencyMeasure::hsic, 0.5, 1.0, 25);
    const Vector params = probe.model.flatten_parameters();
    const double before = probe_objective(probe, params);
    const Vector grad = probe_gradient(probe);
    double alpha = 0.5;
    bool decreased = false;
    for (int halving = 0; halving < 20 && !decreased; ++halving, alpha *= 0.5) {
        decreased = probe_objective(probe, Vector(params - alpha * grad)) < before;
    }
    CHECK(decreased);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    ClassifierModel model = make_mlp(6, {7, 5}, {true, false}, 4, 26);
    // Nasty values: thirds, tiny magnitudes, negative zero.
    model.dense[0].weights(0, 0) = 1.0 / 3.0;
    model.dense[0].weights(0, 1) = 5e-324;  // smallest denormal
    model.dense[0].weights(0, 2) = -0.0;
    model.dense[1].bias(0) = 0.1 + 0.2;
    model.config_fingerprint = "deadbeefdeadbeef";
    const std::string path = "/tmp/bido_test_checkpoint.json";
    save_checkpoint(model, path);
    const ClassifierModel loaded = load_checkpoint(path);
    REQUIRE(loaded.dense.size() == model.dense.size());
    for (std::size_t i = 0; i < model.dense.size(); ++i) {
        for (Eigen::Index j = 0; j < model.dense[i].weights.size(); ++j) {
            const double a = *(model.dense[i].weights.data() + j);
            const double b = *(loaded.dense[i].weights.data() + j);
            CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
        }
        for (Eigen::Index j = 0; j < model.dense[i].bias.size(); ++j) {
            const double a = model.dense[i].bias(j);
            const double b = loaded.dense[i].bias(j);
            CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
        }
    }
    CHECK(loaded.config_fingerprint == "deadbeefdeadbeef");
    CHECK(loaded.input_dim == 6);
    CHECK(loaded.class_count == 4);
    CHECK(loaded.tap_count() == 1);
    std::remove(path.c_str());
}

TEST_CASE("model validation catches bad specs") {
    ClassifierModel model = make_mlp(4, {5}, {true}, 3, 27);
    model.layers[0].out_dim = 6;  // break dim chain
    CHECK_THROWS_AS(model.validate(), DimensionError);
}
