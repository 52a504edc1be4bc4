#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bido/data.hpp"
#include "bido/model.hpp"

namespace bido {

// White-box inversion: maximize log f^i(x) over the input box by projected
// gradient ascent with cosine step decay.
struct AttackConfig {
    int steps = 500;
    double step_size = 0.01;
    int restarts = 5;
    int trials_per_class = 100;
    double box_lo = 0.0;
    double box_hi = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct ClassInversion {
    int class_index = 0;
    Matrix reconstructions;  // trials x d, best-of-restarts
    Vector confidences;      // final f^i(x) of the kept chain
};

// Chain RNG streams are derived from (seed, class, trial, restart), so the
// result does not depend on evaluation order. A chain whose gradient goes
// non-finite is restarted from a fresh draw of its own stream, at most three
// times, after which the trial aborts with a diagnostic.
ClassInversion invert_class(const ClassifierModel& target, int class_index,
                            const AttackConfig& config, Matrix* objective_telemetry = nullptr);

struct AttackRun {
    std::vector<ClassInversion> per_class;
};

AttackRun run_attack(const ClassifierModel& target, const AttackConfig& config);

struct AttackEvaluation {
    double attack_acc = 0.0;
    double attack_acc5 = 0.0;
    std::vector<double> per_class_acc;
    std::vector<double> per_class_acc5;
    std::vector<std::vector<int>> top1;        // [class][trial]
    std::vector<std::vector<bool>> top5_hit;   // [class][trial]
};

// Judges reconstructions with an independently trained classifier: top-1 /
// top-5 agreement with the attacked class.
AttackEvaluation evaluate_attack(const AttackRun& run, const ClassifierModel& evaluation_model);

struct AttackReport {
    double attack_acc = 0.0;   // mean over repetitions
    double attack_acc5 = 0.0;
    double std_acc = 0.0;      // sample std over repetitions
    double std_acc5 = 0.0;
    int repetitions = 0;
    std::vector<double> rep_acc;
    std::vector<double> rep_acc5;
    AttackRun detail;               // repetition 0
    AttackEvaluation detail_eval;   // repetition 0
};

/// Full §-style protocol: `repetitions` independent attacks, averaged.
AttackReport attack_with_repetitions(const ClassifierModel& target,
                                     const ClassifierModel& evaluation_model,
                                     const AttackConfig& config, int repetitions);

struct PrivacyUtilityPoint {
    double val_acc = 0.0;
    double attack_acc = 0.0;
    double attack_acc5 = 0.0;
};

PrivacyUtilityPoint privacy_utility_point(const std::string& target_checkpoint,
                                          const AttackConfig& attack_config,
                                          const std::string& evaluation_checkpoint,
                                          const Dataset& val_set, int repetitions = 5);

/// Detail CSV (repetition 0): class, trial, final_confidence, eval_top1,
/// eval_top5_hit.
void write_attack_csv(const AttackReport& report, const std::string& path,
                      const std::string& config_hash);

/// Summary JSON: attack_acc, attack_acc5, std_acc, std_acc5.
void write_attack_summary_json(const AttackReport& report, const std::string& path,
                               const std::string& config_hash);

/// Raw 64-bit float dumps, one file per class, each with a JSON sidecar
/// describing shape and class.
void dump_reconstructions(const AttackRun& run, const std::string& directory);

}  // namespace bido
