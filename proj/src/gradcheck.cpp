#include "bido/gradcheck.hpp"

#include <Eigen/SVD>
#include <limits>
#include <random>

#include "bido/errors.hpp"

namespace bido {

namespace {

// Smallest |pre-activation| feeding a relu. Central differences are only
// trustworthy away from the kinks, so probes sitting on one are rejected.
double min_relu_margin(const ClassifierModel& model, const Matrix& inputs) {
    const ForwardTrace trace = forward_with_taps(model, inputs);
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t li = 0; li + 1 < model.layers.size(); ++li) {
        if (model.layers[li].kind == LayerKind::dense &&
            model.layers[li + 1].kind == LayerKind::relu) {
            margin = std::min(margin, trace.layer_outputs[li].cwiseAbs().minCoeff());
        }
    }
    return margin;
}

}  // namespace

ObjectiveProbe make_objective_probe(DependencyMeasure measure, double lambda_x, double lambda_y,
                                    std::uint64_t seed) {
    ObjectiveProbe probe;
    for (std::uint64_t attempt = 0;; ++attempt) {
        const std::uint64_t s = seed + (attempt << 32);
        probe.model = make_mlp(3, {4, 3}, {true, true}, 2, s);
        std::mt19937_64 rng(s ^ 0xabcdef12345678ull);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::uniform_real_distribution<double> bias_jitter(-0.3, 0.3);
        for (auto& p : probe.model.dense) {
            for (Eigen::Index i = 0; i < p.bias.size(); ++i) p.bias(i) = bias_jitter(rng);
        }
        probe.inputs.resize(6, 3);
        for (Eigen::Index i = 0; i < probe.inputs.size(); ++i) {
            *(probe.inputs.data() + i) = unit(rng);
        }
        probe.labels = Matrix::Zero(6, 2);
        std::uniform_int_distribution<int> cls(0, 1);
        for (Eigen::Index r = 0; r < 6; ++r) probe.labels(r, cls(rng)) = 1.0;
        if (min_relu_margin(probe.model, probe.inputs) >= 1e-3) break;
    }
    if (lambda_x == 0.0 && lambda_y == 0.0) {
        probe.config = BiDOConfig::plain();
    } else {
        probe.config = BiDOConfig::bilateral(measure, lambda_x, lambda_y);
    }
    return probe;
}

double probe_objective(const ObjectiveProbe& probe, const Vector& flat_params) {
    ClassifierModel model = probe.model;
    model.load_flat_parameters(flat_params);
    const ForwardTrace trace = forward_with_taps(model, probe.inputs);
    return bido_objective(trace, probe.labels, probe.config).objective;
}

Vector probe_gradient(const ObjectiveProbe& probe) {
    const ForwardTrace trace = forward_with_taps(probe.model, probe.inputs);
    const ObjectiveResult obj = bido_objective(trace, probe.labels, probe.config);
    UpstreamGrads upstream;
    upstream.d_probabilities = obj.d_probabilities;
    upstream.d_taps = obj.tap_gradients;
    const BackwardResult back = backward(probe.model, trace, upstream);
    Vector flat(static_cast<Eigen::Index>(probe.model.parameter_count()));
    Eigen::Index at = 0;
    for (const auto& g : back.dense_grads) {
        for (Eigen::Index r = 0; r < g.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < g.weights.cols(); ++c) flat(at++) = g.weights(r, c);
        }
        for (Eigen::Index i = 0; i < g.bias.size(); ++i) flat(at++) = g.bias(i);
    }
    return flat;
}

GradientCheckReport check_objective_gradient(const ObjectiveProbe& probe, double step,
                                             double tolerance) {
    const Vector params = probe.model.flatten_parameters();
    return finite_diff_check(
        [&probe](const Vector& p) { return probe_objective(probe, p); },
        [&probe](const Vector&) { return probe_gradient(probe); }, params, step, tolerance);
}

double min_coco_singular_gap(const ObjectiveProbe& probe) {
    if (!probe.config.measure || probe.config.measure->measure != DependencyMeasure::coco) {
        throw ParameterError("min_coco_singular_gap: probe is not a COCO probe");
    }
    const auto& mc = *probe.config.measure;
    const ForwardTrace trace = forward_with_taps(probe.model, probe.inputs);
    const Matrix x_centered = center_gram(
        build_gram(probe.inputs, mc.kernel_x.resolve(static_cast<int>(probe.inputs.cols())))
            .matrix);
    const Matrix y_centered = center_gram(
        build_gram(probe.labels, mc.kernel_y.resolve(static_cast<int>(probe.labels.cols())))
            .matrix);
    double min_gap = 1.0;
    for (const auto& z : trace.taps) {
        const Matrix z_centered = center_gram(
            build_gram(z, mc.kernel_z.resolve(static_cast<int>(z.cols()))).matrix);
        for (const Matrix& product :
             {Matrix(x_centered * z_centered), Matrix(z_centered * y_centered)}) {
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(product);
            const auto& sv = svd.singularValues();
            if (sv.size() < 2 || sv(0) <= 0.0) return 0.0;
            min_gap = std::min(min_gap, (sv(0) - sv(1)) / sv(0));
        }
    }
    return min_gap;
}

}  // namespace bido
