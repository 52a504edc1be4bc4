#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bido/matrix.hpp"

namespace bido {

enum class LayerKind { dense, relu, softmax_output };

struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    int in_dim = 0;
    int out_dim = 0;
    bool tap = false;  // layer output is a monitored latent representation
};

struct DenseParams {
    Matrix weights;  // out_dim x in_dim
    Vector bias;     // out_dim
};

// Feedforward k-way classifier with designated latent taps. Dense parameters
// are stored in layer order; activation layers own no parameters.
struct ClassifierModel {
    std::vector<LayerSpec> layers;
    std::vector<DenseParams> dense;
    int input_dim = 0;
    int class_count = 0;
    std::uint64_t init_seed = 0;
    std::string config_fingerprint;

    int tap_count() const;
    std::vector<int> tap_dims() const;
    std::size_t parameter_count() const;
    void validate() const;

    // Flat views used by gradient checks: parameters in layer order,
    // weights row-major then bias per dense layer.
    Vector flatten_parameters() const;
    void load_flat_parameters(const Vector& flat);
};

// hidden[i] gives the width of the i-th relu block; taps[i] marks its output
// as a monitored latent. Weights are uniform +-sqrt(6/(fan_in+fan_out)),
// biases zero.
ClassifierModel make_mlp(int input_dim, const std::vector<int>& hidden,
                         const std::vector<bool>& taps, int class_count, std::uint64_t seed);

/// 784 -> 512(tap) -> 256(tap) -> 128(tap) -> 10, the default MNIST-scale net.
ClassifierModel default_mnist_model(std::uint64_t seed);

struct ForwardTrace {
    Matrix input;                      // B x d
    std::vector<Matrix> taps;          // per tapped layer, B x d_z
    Matrix logits;                     // B x k
    Matrix probabilities;              // B x k, rows sum to 1
    std::vector<Matrix> layer_outputs; // per layer, used by backward
    std::vector<double> sample_losses; // filled by cross_entropy when requested
};

ForwardTrace forward_with_taps(const ClassifierModel& model, const Matrix& batch);

/// Mean over the batch of -log p[true class], natural log, p clamped at 1e-12.
double cross_entropy(const Matrix& probabilities, const Matrix& one_hot_labels);

/// d(cross_entropy)/d(probabilities); zero inside the clamped region.
Matrix cross_entropy_gradient(const Matrix& probabilities, const Matrix& one_hot_labels);

// Gradients of a composite objective arriving from above. Tap gradients are
// accumulated with the gradient flowing back from later layers (a tap is a
// residual read, not a cut). Either output-side field may be empty.
struct UpstreamGrads {
    Matrix d_probabilities;       // B x k or empty
    Matrix d_logits;              // B x k or empty
    std::vector<Matrix> d_taps;   // per tap, B x d_z or empty matrices
};

struct BackwardResult {
    std::vector<DenseParams> dense_grads;  // same shapes as model.dense
    Matrix d_input;                        // B x d
};

BackwardResult backward(const ClassifierModel& model, const ForwardTrace& trace,
                        const UpstreamGrads& upstream, bool want_parameter_grads = true);

/// Per-row top-1 class indices.
std::vector<int> argmax_rows(const Matrix& m);

/// Fraction of rows whose top-1 prediction matches the one-hot label.
double accuracy(const ClassifierModel& model, const Matrix& inputs, const Matrix& labels);

// Checkpoint container: versioned JSON, parameters bit-exact through
// round-trip.
void save_checkpoint(const ClassifierModel& model, const std::string& path);
ClassifierModel load_checkpoint(const std::string& path);

}  // namespace bido
