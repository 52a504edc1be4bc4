#include "bido/model.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bido/errors.hpp"

namespace bido {

using nlohmann::json;

int ClassifierModel::tap_count() const {
    int m = 0;
    for (const auto& l : layers) m += l.tap ? 1 : 0;
    return m;
}

std::vector<int> ClassifierModel::tap_dims() const {
    std::vector<int> dims;
    for (const auto& l : layers) {
        if (l.tap) dims.push_back(l.out_dim);
    }
    return dims;
}

std::size_t ClassifierModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& d : dense) {
        n += static_cast<std::size_t>(d.weights.size()) + static_cast<std::size_t>(d.bias.size());
    }
    return n;
}

void ClassifierModel::validate() const {
    if (layers.empty()) throw ParameterError("model: no layers");
    if (layers.front().in_dim != input_dim) throw DimensionError("model: input dim mismatch");
    int softmax_seen = 0;
    std::size_t dense_idx = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        if (i > 0 && layers[i - 1].out_dim != l.in_dim) {
            throw DimensionError("model: consecutive layer dims mismatch");
        }
        switch (l.kind) {
            case LayerKind::dense: {
                if (dense_idx >= dense.size()) throw ParameterError("model: missing dense params");
                const auto& p = dense[dense_idx++];
                if (p.weights.rows() != l.out_dim || p.weights.cols() != l.in_dim ||
                    p.bias.size() != l.out_dim) {
                    throw DimensionError("model: dense parameter shape mismatch");
                }
                break;
            }
            case LayerKind::relu:
                if (l.in_dim != l.out_dim) throw DimensionError("model: relu must keep dims");
                break;
            case LayerKind::softmax_output:
                if (l.in_dim != l.out_dim) throw DimensionError("model: softmax must keep dims");
                ++softmax_seen;
                if (i + 1 != layers.size()) {
                    throw ParameterError("model: softmax_output must be the last layer");
                }
                break;
        }
    }
    if (softmax_seen != 1) throw ParameterError("model: exactly one softmax_output required");
    if (dense_idx != dense.size()) throw ParameterError("model: extra dense params");
    if (layers.back().out_dim != class_count) throw DimensionError("model: class count mismatch");
}

namespace {

DenseParams init_dense(int out_dim, int in_dim, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseParams p;
    p.weights = Matrix(out_dim, in_dim);
    for (Eigen::Index r = 0; r < out_dim; ++r) {
        for (Eigen::Index c = 0; c < in_dim; ++c) p.weights(r, c) = dist(rng);
    }
    p.bias = Vector::Zero(out_dim);
    return p;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix probs(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double mx = logits.row(r).maxCoeff();
        Eigen::RowVectorXd e = (logits.row(r).array() - mx).exp();
        probs.row(r) = e / e.sum();
    }
    return probs;
}

void check_one_hot(const Matrix& labels) {
    for (Eigen::Index r = 0; r < labels.rows(); ++r) {
        int ones = 0;
        for (Eigen::Index c = 0; c < labels.cols(); ++c) {
            const double v = labels(r, c);
            if (v == 1.0) {
                ++ones;
            } else if (v != 0.0) {
                throw ParameterError("labels: entries must be one-hot");
            }
        }
        if (ones != 1) throw ParameterError("labels: each row must have exactly one 1");
    }
}

}  // namespace

ClassifierModel make_mlp(int input_dim, const std::vector<int>& hidden,
                         const std::vector<bool>& taps, int class_count, std::uint64_t seed) {
    if (input_dim < 1 || class_count < 2) throw ParameterError("make_mlp: bad dims");
    if (taps.size() != hidden.size()) throw ParameterError("make_mlp: taps/hidden size mismatch");
    ClassifierModel model;
    model.input_dim = input_dim;
    model.class_count = class_count;
    model.init_seed = seed;
    std::mt19937_64 rng(seed);
    int prev = input_dim;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        model.layers.push_back({LayerKind::dense, prev, hidden[i], false});
        model.dense.push_back(init_dense(hidden[i], prev, rng));
        model.layers.push_back({LayerKind::relu, hidden[i], hidden[i], taps[i]});
        prev = hidden[i];
    }
    model.layers.push_back({LayerKind::dense, prev, class_count, false});
    model.dense.push_back(init_dense(class_count, prev, rng));
    model.layers.push_back({LayerKind::softmax_output, class_count, class_count, false});
    model.validate();
    return model;
}

ClassifierModel default_mnist_model(std::uint64_t seed) {
    return make_mlp(784, {512, 256, 128}, {true, true, true}, 10, seed);
}

ForwardTrace forward_with_taps(const ClassifierModel& model, const Matrix& batch) {
    if (batch.cols() != model.input_dim) {
        std::ostringstream os;
        os << "forward: batch dim " << batch.cols() << " != model input dim " << model.input_dim;
        throw DimensionError(os.str());
    }
    ForwardTrace trace;
    trace.input = batch;
    trace.layer_outputs.reserve(model.layers.size());
    Matrix current = batch;
    std::size_t dense_idx = 0;
    for (const auto& layer : model.layers) {
        switch (layer.kind) {
            case LayerKind::dense: {
                const auto& p = model.dense[dense_idx++];
                Matrix out = current * p.weights.transpose();
                out.rowwise() += p.bias.transpose();
                current = std::move(out);
                break;
            }
            case LayerKind::relu:
                current = current.cwiseMax(0.0);
                break;
            case LayerKind::softmax_output:
                trace.logits = current;
                current = softmax_rows(current);
                break;
        }
        trace.layer_outputs.push_back(current);
        if (layer.tap) trace.taps.push_back(current);
    }
    trace.probabilities = current;
    return trace;
}

double cross_entropy(const Matrix& probabilities, const Matrix& one_hot_labels) {
    if (probabilities.rows() != one_hot_labels.rows() ||
        probabilities.cols() != one_hot_labels.cols()) {
        throw DimensionError("cross_entropy: shape mismatch");
    }
    if (probabilities.rows() == 0) throw ParameterError("cross_entropy: empty batch");
    check_one_hot(one_hot_labels);
    double total = 0.0;
    for (Eigen::Index r = 0; r < probabilities.rows(); ++r) {
        for (Eigen::Index c = 0; c < probabilities.cols(); ++c) {
            if (one_hot_labels(r, c) == 1.0) {
                total -= std::log(std::max(probabilities(r, c), 1e-12));
            }
        }
    }
    return total / static_cast<double>(probabilities.rows());
}

Matrix cross_entropy_gradient(const Matrix& probabilities, const Matrix& one_hot_labels) {
    if (probabilities.rows() != one_hot_labels.rows() ||
        probabilities.cols() != one_hot_labels.cols()) {
        throw DimensionError("cross_entropy_gradient: shape mismatch");
    }
    check_one_hot(one_hot_labels);
    Matrix grad = Matrix::Zero(probabilities.rows(), probabilities.cols());
    const double inv_batch = 1.0 / static_cast<double>(probabilities.rows());
    for (Eigen::Index r = 0; r < probabilities.rows(); ++r) {
        for (Eigen::Index c = 0; c < probabilities.cols(); ++c) {
            if (one_hot_labels(r, c) == 1.0 && probabilities(r, c) > 1e-12) {
                grad(r, c) = -inv_batch / probabilities(r, c);
            }
        }
    }
    return grad;
}

BackwardResult backward(const ClassifierModel& model, const ForwardTrace& trace,
                        const UpstreamGrads& upstream, bool want_parameter_grads) {
    const auto batch = trace.input.rows();
    const auto k = model.class_count;
    if (upstream.d_probabilities.size() != 0 &&
        (upstream.d_probabilities.rows() != batch || upstream.d_probabilities.cols() != k)) {
        throw DimensionError("backward: d_probabilities shape mismatch");
    }
    if (upstream.d_logits.size() != 0 &&
        (upstream.d_logits.rows() != batch || upstream.d_logits.cols() != k)) {
        throw DimensionError("backward: d_logits shape mismatch");
    }
    if (!upstream.d_taps.empty() &&
        upstream.d_taps.size() != static_cast<std::size_t>(model.tap_count())) {
        throw DimensionError("backward: tap gradient count mismatch");
    }

    BackwardResult result;
    if (want_parameter_grads) {
        result.dense_grads.reserve(model.dense.size());
        for (const auto& p : model.dense) {
            result.dense_grads.push_back(
                {Matrix::Zero(p.weights.rows(), p.weights.cols()), Vector::Zero(p.bias.size())});
        }
    }

    // Gradient w.r.t. the softmax output (probabilities).
    Matrix d_out = upstream.d_probabilities.size() != 0
                       ? upstream.d_probabilities
                       : Matrix::Zero(batch, k);

    std::size_t dense_idx = model.dense.size();
    int tap_idx = model.tap_count();
    for (std::size_t li = model.layers.size(); li-- > 0;) {
        const auto& layer = model.layers[li];
        if (layer.tap) {
            --tap_idx;
            if (!upstream.d_taps.empty() && upstream.d_taps[tap_idx].size() != 0) {
                const Matrix& tg = upstream.d_taps[tap_idx];
                if (tg.rows() != batch || tg.cols() != layer.out_dim) {
                    throw DimensionError("backward: tap gradient shape mismatch");
                }
                d_out += tg;
            }
        }
        const Matrix& layer_input = li == 0 ? trace.input : trace.layer_outputs[li - 1];
        switch (layer.kind) {
            case LayerKind::softmax_output: {
                // d_logits = p .* (g - <g, p>) row-wise, plus any direct logits grad.
                const Matrix& probs = trace.layer_outputs[li];
                Matrix d_logits(batch, k);
                for (Eigen::Index r = 0; r < batch; ++r) {
                    const double dot = d_out.row(r).dot(probs.row(r));
                    d_logits.row(r) =
                        probs.row(r).array() * (d_out.row(r).array() - dot);
                }
                if (upstream.d_logits.size() != 0) d_logits += upstream.d_logits;
                d_out = std::move(d_logits);
                break;
            }
            case LayerKind::relu: {
                const Matrix& out = trace.layer_outputs[li];
                d_out = (out.array() > 0.0).select(d_out, 0.0);
                break;
            }
            case LayerKind::dense: {
                --dense_idx;
                const auto& p = model.dense[dense_idx];
                if (want_parameter_grads) {
                    result.dense_grads[dense_idx].weights.noalias() =
                        d_out.transpose() * layer_input;
                    result.dense_grads[dense_idx].bias = d_out.colwise().sum().transpose();
                }
                d_out = d_out * p.weights;
                break;
            }
        }
    }
    result.d_input = std::move(d_out);
    return result;
}

std::vector<int> argmax_rows(const Matrix& m) {
    std::vector<int> idx(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Eigen::Index best = 0;
        m.row(r).maxCoeff(&best);
        idx[static_cast<std::size_t>(r)] = static_cast<int>(best);
    }
    return idx;
}

double accuracy(const ClassifierModel& model, const Matrix& inputs, const Matrix& labels) {
    if (inputs.rows() == 0) return 0.0;
    const ForwardTrace trace = forward_with_taps(model, inputs);
    const auto pred = argmax_rows(trace.probabilities);
    const auto truth = argmax_rows(labels);
    int hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

Vector ClassifierModel::flatten_parameters() const {
    Vector flat(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index at = 0;
    for (const auto& p : dense) {
        for (Eigen::Index r = 0; r < p.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < p.weights.cols(); ++c) flat(at++) = p.weights(r, c);
        }
        for (Eigen::Index i = 0; i < p.bias.size(); ++i) flat(at++) = p.bias(i);
    }
    return flat;
}

void ClassifierModel::load_flat_parameters(const Vector& flat) {
    if (flat.size() != static_cast<Eigen::Index>(parameter_count())) {
        throw DimensionError("load_flat_parameters: size mismatch");
    }
    Eigen::Index at = 0;
    for (auto& p : dense) {
        for (Eigen::Index r = 0; r < p.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < p.weights.cols(); ++c) p.weights(r, c) = flat(at++);
        }
        for (Eigen::Index i = 0; i < p.bias.size(); ++i) p.bias(i) = flat(at++);
    }
}

namespace {

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::dense: return "dense";
        case LayerKind::relu: return "relu";
        case LayerKind::softmax_output: return "softmax_output";
    }
    return "?";
}

LayerKind layer_kind_from(const std::string& s) {
    if (s == "dense") return LayerKind::dense;
    if (s == "relu") return LayerKind::relu;
    if (s == "softmax_output") return LayerKind::softmax_output;
    throw FormatError("checkpoint: unknown layer kind '" + s + "'");
}

}  // namespace

void save_checkpoint(const ClassifierModel& model, const std::string& path) {
    model.validate();
    json doc;
    doc["format"] = "bido-checkpoint";
    doc["version"] = 1;
    doc["input_dim"] = model.input_dim;
    doc["class_count"] = model.class_count;
    doc["seed"] = model.init_seed;
    doc["config_fingerprint"] = model.config_fingerprint;
    json layers = json::array();
    for (const auto& l : model.layers) {
        layers.push_back({{"kind", layer_kind_name(l.kind)},
                          {"in", l.in_dim},
                          {"out", l.out_dim},
                          {"tap", l.tap}});
    }
    doc["layers"] = std::move(layers);
    json params = json::array();
    for (const auto& p : model.dense) {
        json w = json::array();
        for (Eigen::Index i = 0; i < p.weights.size(); ++i) {
            w.push_back(*(p.weights.data() + i));  // row-major
        }
        json b = json::array();
        for (Eigen::Index i = 0; i < p.bias.size(); ++i) b.push_back(p.bias(i));
        params.push_back({{"weights", std::move(w)}, {"bias", std::move(b)}});
    }
    doc["parameters"] = std::move(params);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("save_checkpoint: cannot open " + path);
    out << doc.dump();
}

ClassifierModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("load_checkpoint: cannot open " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw FormatError(std::string("load_checkpoint: bad JSON: ") + e.what());
    }
    if (doc.value("format", "") != "bido-checkpoint") {
        throw FormatError("load_checkpoint: not a checkpoint file");
    }
    if (doc.value("version", 0) != 1) {
        throw FormatError("load_checkpoint: unsupported version");
    }
    ClassifierModel model;
    model.input_dim = doc.at("input_dim").get<int>();
    model.class_count = doc.at("class_count").get<int>();
    model.init_seed = doc.at("seed").get<std::uint64_t>();
    model.config_fingerprint = doc.value("config_fingerprint", "");
    for (const auto& l : doc.at("layers")) {
        model.layers.push_back({layer_kind_from(l.at("kind").get<std::string>()),
                                l.at("in").get<int>(), l.at("out").get<int>(),
                                l.at("tap").get<bool>()});
    }
    for (const auto& p : doc.at("parameters")) {
        const auto& spec_it = p.at("weights");
        DenseParams dp;
        // Shapes come from the layer list; find the matching dense layer.
        dp.weights = Matrix();
        dp.bias = Vector();
        json b = p.at("bias");
        std::size_t idx = model.dense.size();
        std::size_t seen = 0;
        for (const auto& l : model.layers) {
            if (l.kind != LayerKind::dense) continue;
            if (seen++ == idx) {
                dp.weights.resize(l.out_dim, l.in_dim);
                dp.bias.resize(l.out_dim);
                break;
            }
        }
        if (dp.weights.size() != static_cast<Eigen::Index>(spec_it.size()) ||
            dp.bias.size() != static_cast<Eigen::Index>(b.size())) {
            throw FormatError("load_checkpoint: parameter shape mismatch");
        }
        for (Eigen::Index i = 0; i < dp.weights.size(); ++i) {
            *(dp.weights.data() + i) = spec_it.at(static_cast<std::size_t>(i)).get<double>();
        }
        for (Eigen::Index i = 0; i < dp.bias.size(); ++i) {
            dp.bias(i) = b.at(static_cast<std::size_t>(i)).get<double>();
        }
        model.dense.push_back(std::move(dp));
    }
    model.validate();
    return model;
}

}  // namespace bido
