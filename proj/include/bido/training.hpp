#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bido/data.hpp"
#include "bido/dependency.hpp"
#include "bido/model.hpp"

namespace bido {

enum class BiDOMode { plain, bilateral, unilateral_xy };
enum class Optimizer { sgd, adam };

const char* to_string(BiDOMode m);

// Regularizer configuration. `bilateral` adds lambda_x * sum_j d(X, Z_j)
// - lambda_y * sum_j d(Z_j, Y); `unilateral_xy` adds lambda_x * d(X, Yhat)
// with Yhat the softmax output batch (the baseline that conflicts with the
// supervised loss); `plain` trains on cross-entropy alone.
struct BiDOConfig {
    BiDOMode mode = BiDOMode::plain;
    std::optional<DependencyMeasureConfig> measure;
    double lambda_x = 0.0;
    double lambda_y = 0.0;

    void validate() const;

    static BiDOConfig plain();
    static BiDOConfig bilateral(DependencyMeasure m, double lambda_x, double lambda_y);
    static BiDOConfig unilateral(DependencyMeasure m, double lambda);
};

struct TrainConfig {
    int batch_size = 64;
    double learning_rate = 0.05;
    int max_epochs = 20;
    Optimizer optimizer = Optimizer::sgd;
    std::uint64_t seed = 1;
    int eval_every = 1;
    // Optional step decay; 0 disables.
    int lr_step_every = 0;
    double lr_step_factor = 1.0;

    void validate() const;
};

struct ObjectiveResult {
    double objective = 0.0;
    double ce = 0.0;
    std::vector<double> dxz;            // per tap, filled when lambda_x > 0
    std::vector<double> dzy;            // per tap, filled when lambda_y > 0
    double dxy = 0.0;                   // unilateral d(X, Yhat)
    std::vector<Matrix> tap_gradients;  // per tap, empty matrices when unused
    Matrix d_probabilities;
};

// Composite objective on one batch: cross-entropy plus the configured
// regularizer, with the gradient contributions to inject at each tap and at
// the softmax output. Terms with a zero weight are skipped entirely so a
// zero-lambda bilateral run reproduces plain training bit for bit.
ObjectiveResult bido_objective(const ForwardTrace& trace, const Matrix& labels,
                               const BiDOConfig& config);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
    std::vector<double> dxz;  // per tap, probe-batch diagnostics
    std::vector<double> dzy;
    double seconds = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> records;
    std::string checkpoint_path;
    double wall_seconds = 0.0;
    double best_val_acc = 0.0;
    int best_epoch = -1;
};

// Mini-batch training. Shuffling, initialization and therefore the whole
// trajectory are determined by the seeds. The model is left at its final
// state; the checkpoint (when a path is given) holds the parameters of the
// best validation epoch. A non-finite objective aborts with TrainingDiverged
// naming the batch and the lambda values. Per-epoch d(X,Z_j) / d(Z_j,Y)
// diagnostics are evaluated on a fixed probe batch with the configured
// measure (HSIC with rule kernels when the run itself has no measure).
TrainReport train(ClassifierModel& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& train_config, const BiDOConfig& bido_config,
                  const std::string& checkpoint_path = "",
                  const DependencyMeasureConfig* diagnostics = nullptr);

void write_train_report_csv(const TrainReport& report, int tap_count, const std::string& path,
                            const std::string& config_hash);

/// Measured log-log slope of estimator wall-clock versus batch size.
double regularizer_scaling_slope(DependencyMeasure measure, const std::vector<int>& batch_sizes,
                                 int repeats, std::uint64_t seed);

struct AblationVariant {
    std::string name;
    BiDOConfig bido;
};

struct AblationPoint {
    std::string name;
    double lambda_x = 0.0;
    double lambda_y = 0.0;
    bool ok = false;
    std::string error;
    double val_acc = 0.0;
    double attack_acc = 0.0;
    double attack_acc5 = 0.0;
};

struct AblationSetup {
    std::vector<int> hidden;
    std::vector<bool> taps;
    std::vector<int> eval_hidden;
    TrainConfig train;
    int attack_steps = 120;
    double attack_step_size = 0.05;
    int attack_restarts = 2;
    int attack_trials = 30;
    int attack_repetitions = 1;
    std::uint64_t seed = 1;
};

// Trains one model per variant on the given splits, attacks each with a
// shared evaluation classifier, and writes a one-row-per-variant CSV when
// csv_path is non-empty. Variants must include both single-term regularizers
// and the full objective.
std::vector<AblationPoint> ablation_run(const Dataset& train_set, const Dataset& val_set,
                                        const std::vector<AblationVariant>& variants,
                                        const AblationSetup& setup, const std::string& csv_path,
                                        const std::string& config_hash);

}  // namespace bido
