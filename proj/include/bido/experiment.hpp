#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bido/attack.hpp"
#include "bido/data.hpp"
#include "bido/training.hpp"

namespace bido {

// Dataset construction request, one of the three provenances.
struct DatasetSpec {
    Provenance kind = Provenance::synthetic_blobs;
    // blobs
    int classes = 4;
    int per_class = 100;
    int dim = 16;
    double separation = 8.0;
    // digits
    double noise = 0.1;
    // mnist
    std::string images_path;
    std::string labels_path;
    int subset = 0;  // 0 = all
    // common
    std::array<double, 3> fractions = {0.8, 0.1, 0.1};
};

struct ModelSpec {
    std::vector<int> hidden = {512, 256, 128};
    std::vector<bool> taps = {true, true, true};
};

struct AttackSection {
    AttackConfig config;
    int repetitions = 5;
    bool dump_reconstructions = false;
};

struct EvalModelSpec {
    std::vector<int> hidden = {1024, 512};
    std::uint64_t seed_offset = 1000;
};

struct SweepSpec {
    std::vector<std::pair<double, double>> grid;  // (lambda_x, lambda_y)
};

// Parsed, validated experiment description. `canonical` is the sorted-key
// JSON the config hash is computed over; the hash is embedded in every
// output file.
struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::string output_dir;
    DatasetSpec dataset;
    ModelSpec model;
    TrainConfig train;
    BiDOConfig bido;
    std::optional<AttackSection> attack;
    std::optional<EvalModelSpec> eval_model;
    std::optional<SweepSpec> sweep;
    nlohmann::json canonical;
    std::string hash;
};

/// FNV-1a 64-bit over the canonical dump, as a 16-digit hex string.
std::string config_hash_of(const nlohmann::json& doc);

// Strict parsing: unknown fields anywhere are rejected with their JSON path;
// mode-dependent required fields (e.g. bido.lambda_y in bilateral mode) are
// reported by name. Throws ConfigError.
ExperimentConfig parse_experiment_config_json(const nlohmann::json& doc);
ExperimentConfig parse_experiment_config(const std::string& path);

struct DataSplits {
    Dataset train;
    Dataset val;
    Dataset test;
};

DataSplits build_dataset(const ExperimentConfig& config);

ClassifierModel build_model(const ExperimentConfig& config, int input_dim, int class_count);

// CLI entry points. Exit codes: 0 success, 1 invariant/test/runtime failure,
// 2 user or configuration error.
int cmd_train(const std::string& config_path, std::ostream& log);
int cmd_attack(const std::string& config_path, const std::string& target_checkpoint,
               const std::string& eval_checkpoint, std::ostream& log);
int cmd_sweep(const std::string& config_path, std::ostream& log);
int cmd_selftest(std::ostream& log);

/// Worker cap for sweep points: BIDO_WORKERS environment variable, default 1.
int sweep_worker_count();

}  // namespace bido
