#include "bido/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "bido/errors.hpp"

namespace bido {

const char* to_string(BiDOMode m) {
    switch (m) {
        case BiDOMode::plain: return "plain";
        case BiDOMode::bilateral: return "bilateral";
        case BiDOMode::unilateral_xy: return "unilateral_xy";
    }
    return "?";
}

BiDOConfig BiDOConfig::plain() { return {}; }

BiDOConfig BiDOConfig::bilateral(DependencyMeasure m, double lambda_x, double lambda_y) {
    BiDOConfig c;
    c.mode = BiDOMode::bilateral;
    c.measure = DependencyMeasureConfig{m};
    c.lambda_x = lambda_x;
    c.lambda_y = lambda_y;
    return c;
}

BiDOConfig BiDOConfig::unilateral(DependencyMeasure m, double lambda) {
    BiDOConfig c;
    c.mode = BiDOMode::unilateral_xy;
    c.measure = DependencyMeasureConfig{m};
    c.lambda_x = lambda;
    return c;
}

void BiDOConfig::validate() const {
    if (lambda_x < 0.0 || lambda_y < 0.0) {
        throw ParameterError("bido config: lambda values must be non-negative");
    }
    switch (mode) {
        case BiDOMode::plain:
            if (measure) throw ParameterError("bido config: plain mode forbids a measure");
            if (lambda_x != 0.0 || lambda_y != 0.0) {
                throw ParameterError("bido config: plain mode requires zero lambdas");
            }
            break;
        case BiDOMode::bilateral:
            if (!measure) throw ParameterError("bido config: bilateral mode requires a measure");
            break;
        case BiDOMode::unilateral_xy:
            if (!measure) throw ParameterError("bido config: unilateral mode requires a measure");
            if (lambda_y != 0.0) {
                throw ParameterError("bido config: unilateral mode uses lambda_x only");
            }
            break;
    }
}

void TrainConfig::validate() const {
    if (batch_size < 2) throw ParameterError("train config: batch_size must be >= 2");
    if (learning_rate <= 0.0) throw ParameterError("train config: learning_rate must be > 0");
    if (max_epochs < 1) throw ParameterError("train config: max_epochs must be >= 1");
    if (eval_every < 1) throw ParameterError("train config: eval_every must be >= 1");
    if (lr_step_every < 0 || lr_step_factor <= 0.0) {
        throw ParameterError("train config: bad lr step decay");
    }
}

ObjectiveResult bido_objective(const ForwardTrace& trace, const Matrix& labels,
                               const BiDOConfig& config) {
    config.validate();
    const auto batch = trace.input.rows();
    if (batch < 2) throw ParameterError("bido_objective: batch must have >= 2 samples");
    if (config.mode == BiDOMode::bilateral && trace.taps.empty()) {
        throw ParameterError("bido_objective: bilateral mode requires tapped layers");
    }

    ObjectiveResult result;
    result.ce = cross_entropy(trace.probabilities, labels);
    result.objective = result.ce;
    result.d_probabilities = cross_entropy_gradient(trace.probabilities, labels);
    result.tap_gradients.assign(trace.taps.size(), Matrix());

    if (config.mode == BiDOMode::plain) return result;
    const DependencyMeasureConfig& mc = *config.measure;

    if (config.mode == BiDOMode::unilateral_xy) {
        if (config.lambda_x == 0.0) return result;
        // Yhat is a predicted label distribution, so it enters through the
        // label kernel (linear), not the latent one; a sigma-rule Gaussian at
        // k dims is nearly constant on the simplex and has no gradient.
        const GramMatrix x_gram = build_gram(
            trace.input, mc.kernel_x.resolve(static_cast<int>(trace.input.cols())));
        const GramMatrix y_hat_gram = build_gram(
            trace.probabilities,
            mc.kernel_y.resolve(static_cast<int>(trace.probabilities.cols())));
        const DependencyGradient g = dependency_value_and_gradient_wrt_z(
            mc.measure, x_gram, y_hat_gram, trace.probabilities);
        result.dxy = g.value.value;
        result.objective += config.lambda_x * g.value.value;
        result.d_probabilities += config.lambda_x * g.z_gradient;
        return result;
    }

    // Bilateral: lambda_x * sum_j d(X, Z_j) - lambda_y * sum_j d(Z_j, Y).
    result.dxz.assign(trace.taps.size(), 0.0);
    result.dzy.assign(trace.taps.size(), 0.0);
    GramMatrix x_gram;
    GramMatrix y_gram;
    if (config.lambda_x > 0.0) {
        x_gram = build_gram(trace.input,
                            mc.kernel_x.resolve(static_cast<int>(trace.input.cols())));
    }
    if (config.lambda_y > 0.0) {
        y_gram = build_gram(labels, mc.kernel_y.resolve(static_cast<int>(labels.cols())));
    }
    for (std::size_t j = 0; j < trace.taps.size(); ++j) {
        const Matrix& z = trace.taps[j];
        if (config.lambda_x == 0.0 && config.lambda_y == 0.0) break;
        const GramMatrix z_gram =
            build_gram(z, mc.kernel_z.resolve(static_cast<int>(z.cols())));
        Matrix tap_grad = Matrix::Zero(z.rows(), z.cols());
        if (config.lambda_x > 0.0) {
            const DependencyGradient g =
                dependency_value_and_gradient_wrt_z(mc.measure, x_gram, z_gram, z);
            result.dxz[j] = g.value.value;
            result.objective += config.lambda_x * g.value.value;
            tap_grad += config.lambda_x * g.z_gradient;
        }
        if (config.lambda_y > 0.0) {
            const DependencyGradient g =
                dependency_value_and_gradient_wrt_z(mc.measure, y_gram, z_gram, z);
            result.dzy[j] = g.value.value;
            result.objective -= config.lambda_y * g.value.value;
            tap_grad -= config.lambda_y * g.z_gradient;
        }
        result.tap_gradients[j] = std::move(tap_grad);
    }
    return result;
}

namespace {

struct AdamState {
    std::vector<DenseParams> m;
    std::vector<DenseParams> v;
    long t = 0;
};

AdamState make_adam_state(const ClassifierModel& model) {
    AdamState s;
    for (const auto& p : model.dense) {
        s.m.push_back({Matrix::Zero(p.weights.rows(), p.weights.cols()),
                       Vector::Zero(p.bias.size())});
        s.v.push_back({Matrix::Zero(p.weights.rows(), p.weights.cols()),
                       Vector::Zero(p.bias.size())});
    }
    return s;
}

void apply_update(ClassifierModel& model, const BackwardResult& grads, Optimizer opt,
                  double lr, AdamState& adam) {
    if (opt == Optimizer::sgd) {
        for (std::size_t i = 0; i < model.dense.size(); ++i) {
            model.dense[i].weights -= lr * grads.dense_grads[i].weights;
            model.dense[i].bias -= lr * grads.dense_grads[i].bias;
        }
        return;
    }
    constexpr double b1 = 0.9;
    constexpr double b2 = 0.999;
    constexpr double eps = 1e-8;
    ++adam.t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam.t));
    for (std::size_t i = 0; i < model.dense.size(); ++i) {
        auto& m = adam.m[i];
        auto& v = adam.v[i];
        const auto& g = grads.dense_grads[i];
        m.weights = b1 * m.weights + (1.0 - b1) * g.weights;
        m.bias = b1 * m.bias + (1.0 - b1) * g.bias;
        v.weights = b2 * v.weights.array().matrix() +
                    (1.0 - b2) * g.weights.array().square().matrix();
        v.bias = b2 * v.bias.array().matrix() + (1.0 - b2) * g.bias.array().square().matrix();
        model.dense[i].weights.array() -=
            lr * (m.weights.array() / c1) / ((v.weights.array() / c2).sqrt() + eps);
        model.dense[i].bias.array() -=
            lr * (m.bias.array() / c1) / ((v.bias.array() / c2).sqrt() + eps);
    }
}

DependencyMeasureConfig diagnostics_measure(const BiDOConfig& config) {
    if (config.measure) return *config.measure;
    return DependencyMeasureConfig{};  // HSIC with rule kernels
}

}  // namespace

TrainReport train(ClassifierModel& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& train_config, const BiDOConfig& bido_config,
                  const std::string& checkpoint_path,
                  const DependencyMeasureConfig* diagnostics) {
    train_config.validate();
    bido_config.validate();
    model.validate();
    if (train_set.size() < train_config.batch_size) {
        throw ParameterError("train: batch size exceeds training set size");
    }
    if (bido_config.mode == BiDOMode::bilateral && model.tap_count() < 1) {
        throw ParameterError("train: bilateral mode requires a model with taps");
    }

    const auto t_start = std::chrono::steady_clock::now();
    BatchIterator iterator(train_set, train_config.batch_size, train_config.seed);
    AdamState adam = make_adam_state(model);

    // Fixed probe batch for per-epoch dependency diagnostics.
    const Eigen::Index probe_n = std::min<Eigen::Index>(train_set.size(), 256);
    const Matrix probe_x = train_set.inputs.topRows(probe_n);
    const Matrix probe_y = train_set.labels.topRows(probe_n);
    const DependencyMeasureConfig diag =
        diagnostics ? *diagnostics : diagnostics_measure(bido_config);
    const GramMatrix probe_x_gram =
        build_gram(probe_x, diag.kernel_x.resolve(static_cast<int>(probe_x.cols())));
    const GramMatrix probe_y_gram =
        build_gram(probe_y, diag.kernel_y.resolve(static_cast<int>(probe_y.cols())));

    TrainReport report;
    std::vector<DenseParams> best_params = model.dense;
    double last_val = 0.0;

    for (int epoch = 0; epoch < train_config.max_epochs; ++epoch) {
        const auto e_start = std::chrono::steady_clock::now();
        double lr = train_config.learning_rate;
        if (train_config.lr_step_every > 0) {
            lr *= std::pow(train_config.lr_step_factor,
                           static_cast<double>(epoch / train_config.lr_step_every));
        }

        double loss_sum = 0.0;
        long seen = 0;
        long hits = 0;
        const auto batches = iterator.epoch_batches(epoch);
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            const Matrix x = iterator.gather_inputs(batches[bi]);
            const Matrix y = iterator.gather_labels(batches[bi]);
            const ForwardTrace trace = forward_with_taps(model, x);
            const ObjectiveResult obj = bido_objective(trace, y, bido_config);
            if (!std::isfinite(obj.objective)) {
                std::ostringstream os;
                os << "train: non-finite objective at epoch " << epoch << " batch " << bi
                   << " (lambda_x=" << bido_config.lambda_x
                   << ", lambda_y=" << bido_config.lambda_y << ")";
                throw TrainingDiverged(os.str());
            }
            UpstreamGrads upstream;
            upstream.d_probabilities = obj.d_probabilities;
            upstream.d_taps = obj.tap_gradients;
            const BackwardResult grads = backward(model, trace, upstream);
            apply_update(model, grads, train_config.optimizer, lr, adam);

            loss_sum += obj.objective * static_cast<double>(x.rows());
            seen += x.rows();
            const auto pred = argmax_rows(trace.probabilities);
            const auto truth = argmax_rows(y);
            for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i] ? 1 : 0;
        }

        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = loss_sum / static_cast<double>(seen);
        record.train_acc = static_cast<double>(hits) / static_cast<double>(seen);

        const ForwardTrace probe_trace = forward_with_taps(model, probe_x);
        for (const auto& z : probe_trace.taps) {
            const GramMatrix z_gram =
                build_gram(z, diag.kernel_z.resolve(static_cast<int>(z.cols())));
            record.dxz.push_back(dependency_value(diag.measure, probe_x_gram, z_gram).value);
            record.dzy.push_back(dependency_value(diag.measure, z_gram, probe_y_gram).value);
        }

        const bool eval_now = epoch % train_config.eval_every == 0 ||
                              epoch + 1 == train_config.max_epochs;
        if (eval_now && val_set.size() > 0) {
            last_val = accuracy(model, val_set.inputs, val_set.labels);
            if (report.best_epoch < 0 || last_val > report.best_val_acc) {
                report.best_val_acc = last_val;
                report.best_epoch = epoch;
                best_params = model.dense;
            }
        }
        record.val_acc = last_val;
        record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                       e_start)
                             .count();
        report.records.push_back(std::move(record));
    }

    if (!checkpoint_path.empty()) {
        ClassifierModel best = model;
        best.dense = best_params;
        save_checkpoint(best, checkpoint_path);
        report.checkpoint_path = checkpoint_path;
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

void write_train_report_csv(const TrainReport& report, int tap_count, const std::string& path,
                            const std::string& config_hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("write_train_report_csv: cannot open " + path);
    out << "# config_hash=" << config_hash << "\n";
    out << "epoch,train_loss,train_acc,val_acc";
    for (int j = 1; j <= tap_count; ++j) out << ",dxz_" << j;
    for (int j = 1; j <= tap_count; ++j) out << ",dzy_" << j;
    out << ",seconds\n";
    char buf[64];
    const auto fmt = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.10g", v);
        return std::string(buf);
    };
    for (const auto& r : report.records) {
        out << r.epoch << ',' << fmt(r.train_loss) << ',' << fmt(r.train_acc) << ','
            << fmt(r.val_acc);
        for (int j = 0; j < tap_count; ++j) {
            out << ',' << (j < static_cast<int>(r.dxz.size()) ? fmt(r.dxz[static_cast<std::size_t>(j)]) : "0");
        }
        for (int j = 0; j < tap_count; ++j) {
            out << ',' << (j < static_cast<int>(r.dzy.size()) ? fmt(r.dzy[static_cast<std::size_t>(j)]) : "0");
        }
        out << ',' << fmt(r.seconds) << "\n";
    }
}

double regularizer_scaling_slope(DependencyMeasure measure, const std::vector<int>& batch_sizes,
                                 int repeats, std::uint64_t seed) {
    if (batch_sizes.size() < 2) throw ParameterError("scaling slope: need >= 2 sizes");
    if (repeats < 1) throw ParameterError("scaling slope: repeats >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    constexpr int kDim = 3;

    std::vector<double> log_m;
    std::vector<double> log_t;
    for (int m : batch_sizes) {
        Matrix x(m, kDim);
        Matrix z(m, kDim);
        for (Eigen::Index i = 0; i < x.size(); ++i) *(x.data() + i) = dist(rng);
        for (Eigen::Index i = 0; i < z.size(); ++i) *(z.data() + i) = dist(rng);

        // Median of several timing blocks; each block averages `repeats`
        // evaluations of the full per-batch regularizer cost (kernel matrices
        // plus the estimator, as a training step pays it).
        std::vector<double> blocks;
        volatile double sink = 0.0;
        for (int b = 0; b < 5; ++b) {
            const auto t0 = std::chrono::steady_clock::now();
            for (int r = 0; r < repeats; ++r) {
                const GramMatrix k = gaussian_gram(x, default_sigma(kDim));
                const GramMatrix l = gaussian_gram(z, default_sigma(kDim));
                sink = sink + dependency_value(measure, k, l).value;
            }
            const auto t1 = std::chrono::steady_clock::now();
            blocks.push_back(std::chrono::duration<double>(t1 - t0).count() /
                             static_cast<double>(repeats));
        }
        std::nth_element(blocks.begin(), blocks.begin() + 2, blocks.end());
        log_m.push_back(std::log(static_cast<double>(m)));
        log_t.push_back(std::log(std::max(blocks[2], 1e-9)));
    }

    const auto n = static_cast<double>(log_m.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < log_m.size(); ++i) {
        sx += log_m[i];
        sy += log_t[i];
        sxx += log_m[i] * log_m[i];
        sxy += log_m[i] * log_t[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace bido
