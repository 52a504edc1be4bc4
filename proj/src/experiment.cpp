#include "bido/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <ostream>
#include <sstream>

#include "bido/errors.hpp"

namespace bido {

using nlohmann::json;
namespace fs = std::filesystem;

std::string config_hash_of(const json& doc) {
    const std::string dump = doc.dump();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError(path + ": expected an object");
    for (const auto& item : obj.items()) {
        bool ok = false;
        for (const char* key : allowed) ok = ok || item.key() == key;
        if (!ok) throw ConfigError(path + "." + item.key() + ": unknown field");
    }
}

const json& require(const json& obj, const std::string& path, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ConfigError(path + "." + key + ": required field missing");
    return *it;
}

double as_number(const json& v, const std::string& where) {
    if (!v.is_number()) throw ConfigError(where + ": expected a number");
    return v.get<double>();
}

int as_int(const json& v, const std::string& where) {
    if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
    return v.get<int>();
}

std::string as_string(const json& v, const std::string& where) {
    if (!v.is_string()) throw ConfigError(where + ": expected a string");
    return v.get<std::string>();
}

DependencyMeasure measure_from(const std::string& s, const std::string& where) {
    if (s == "hsic") return DependencyMeasure::hsic;
    if (s == "coco") return DependencyMeasure::coco;
    throw ConfigError(where + ": expected \"hsic\" or \"coco\"");
}

DatasetSpec parse_dataset(const json& node) {
    DatasetSpec spec;
    check_keys(node, "dataset",
               {"kind", "classes", "per_class", "dim", "separation", "noise", "images", "labels",
                "subset", "fractions"});
    const std::string kind = as_string(require(node, "dataset", "kind"), "dataset.kind");
    if (kind == "synthetic_blobs") {
        spec.kind = Provenance::synthetic_blobs;
        spec.classes = as_int(require(node, "dataset", "classes"), "dataset.classes");
        spec.per_class = as_int(require(node, "dataset", "per_class"), "dataset.per_class");
        spec.dim = as_int(require(node, "dataset", "dim"), "dataset.dim");
        if (node.contains("separation")) {
            spec.separation = as_number(node["separation"], "dataset.separation");
        }
    } else if (kind == "synthetic_digits") {
        spec.kind = Provenance::synthetic_digits;
        spec.per_class = as_int(require(node, "dataset", "per_class"), "dataset.per_class");
        if (node.contains("noise")) spec.noise = as_number(node["noise"], "dataset.noise");
        spec.classes = 10;
    } else if (kind == "mnist_idx") {
        spec.kind = Provenance::mnist_idx;
        spec.images_path = as_string(require(node, "dataset", "images"), "dataset.images");
        spec.labels_path = as_string(require(node, "dataset", "labels"), "dataset.labels");
        if (node.contains("subset")) spec.subset = as_int(node["subset"], "dataset.subset");
        spec.classes = 10;
    } else {
        throw ConfigError("dataset.kind: unknown dataset kind '" + kind + "'");
    }
    if (node.contains("fractions")) {
        const json& f = node["fractions"];
        if (!f.is_array() || f.size() != 3) {
            throw ConfigError("dataset.fractions: expected an array of 3 numbers");
        }
        for (int i = 0; i < 3; ++i) {
            spec.fractions[static_cast<std::size_t>(i)] =
                as_number(f[static_cast<std::size_t>(i)], "dataset.fractions");
        }
    }
    return spec;
}

ModelSpec parse_model(const json& node) {
    ModelSpec spec;
    check_keys(node, "model", {"hidden", "taps"});
    const json& hidden = require(node, "model", "hidden");
    if (!hidden.is_array() || hidden.empty()) {
        throw ConfigError("model.hidden: expected a non-empty array of widths");
    }
    spec.hidden.clear();
    for (const auto& h : hidden) spec.hidden.push_back(as_int(h, "model.hidden"));
    if (node.contains("taps")) {
        const json& taps = node["taps"];
        if (!taps.is_array() || taps.size() != hidden.size()) {
            throw ConfigError("model.taps: must match model.hidden length");
        }
        spec.taps.clear();
        for (const auto& t : taps) {
            if (!t.is_boolean()) throw ConfigError("model.taps: expected booleans");
            spec.taps.push_back(t.get<bool>());
        }
    } else {
        spec.taps.assign(spec.hidden.size(), true);
    }
    return spec;
}

TrainConfig parse_train(const json& node) {
    TrainConfig cfg;
    check_keys(node, "train",
               {"batch_size", "learning_rate", "epochs", "optimizer", "eval_every",
                "lr_step_every", "lr_step_factor"});
    cfg.batch_size = as_int(require(node, "train", "batch_size"), "train.batch_size");
    cfg.learning_rate = as_number(require(node, "train", "learning_rate"), "train.learning_rate");
    cfg.max_epochs = as_int(require(node, "train", "epochs"), "train.epochs");
    if (node.contains("optimizer")) {
        const std::string opt = as_string(node["optimizer"], "train.optimizer");
        if (opt == "sgd") {
            cfg.optimizer = Optimizer::sgd;
        } else if (opt == "adam") {
            cfg.optimizer = Optimizer::adam;
        } else {
            throw ConfigError("train.optimizer: expected \"sgd\" or \"adam\"");
        }
    }
    if (node.contains("eval_every")) cfg.eval_every = as_int(node["eval_every"], "train.eval_every");
    if (node.contains("lr_step_every")) {
        cfg.lr_step_every = as_int(node["lr_step_every"], "train.lr_step_every");
    }
    if (node.contains("lr_step_factor")) {
        cfg.lr_step_factor = as_number(node["lr_step_factor"], "train.lr_step_factor");
    }
    try {
        cfg.validate();
    } catch (const ParameterError& e) {
        throw ConfigError(std::string("train: ") + e.what());
    }
    return cfg;
}

BiDOConfig parse_bido(const json& node) {
    BiDOConfig cfg;
    check_keys(node, "bido", {"mode", "measure", "lambda_x", "lambda_y", "sigma_x", "sigma_z"});
    const std::string mode = as_string(require(node, "bido", "mode"), "bido.mode");
    DependencyMeasureConfig mc;
    if (node.contains("measure")) {
        mc.measure = measure_from(as_string(node["measure"], "bido.measure"), "bido.measure");
    }
    if (node.contains("sigma_x")) {
        mc.kernel_x = KernelSpec::gaussian_fixed(as_number(node["sigma_x"], "bido.sigma_x"));
    }
    if (node.contains("sigma_z")) {
        mc.kernel_z = KernelSpec::gaussian_fixed(as_number(node["sigma_z"], "bido.sigma_z"));
    }
    if (mode == "plain") {
        if (node.contains("measure")) {
            throw ConfigError("bido.measure: not allowed in plain mode");
        }
        if (node.contains("lambda_x") || node.contains("lambda_y")) {
            throw ConfigError("bido.lambda_x/lambda_y: not allowed in plain mode");
        }
        cfg = BiDOConfig::plain();
    } else if (mode == "bilateral") {
        if (!node.contains("measure")) {
            throw ConfigError("bido.measure: required in bilateral mode");
        }
        if (!node.contains("lambda_x")) {
            throw ConfigError("bido.lambda_x: required in bilateral mode");
        }
        if (!node.contains("lambda_y")) {
            throw ConfigError("bido.lambda_y: required in bilateral mode");
        }
        cfg.mode = BiDOMode::bilateral;
        cfg.measure = mc;
        cfg.lambda_x = as_number(node["lambda_x"], "bido.lambda_x");
        cfg.lambda_y = as_number(node["lambda_y"], "bido.lambda_y");
    } else if (mode == "unilateral_xy") {
        if (!node.contains("measure")) {
            throw ConfigError("bido.measure: required in unilateral_xy mode");
        }
        if (!node.contains("lambda_x")) {
            throw ConfigError("bido.lambda_x: required in unilateral_xy mode");
        }
        if (node.contains("lambda_y")) {
            throw ConfigError("bido.lambda_y: not allowed in unilateral_xy mode");
        }
        cfg.mode = BiDOMode::unilateral_xy;
        cfg.measure = mc;
        cfg.lambda_x = as_number(node["lambda_x"], "bido.lambda_x");
    } else {
        throw ConfigError("bido.mode: expected plain, bilateral or unilateral_xy");
    }
    try {
        cfg.validate();
    } catch (const ParameterError& e) {
        throw ConfigError(std::string("bido: ") + e.what());
    }
    return cfg;
}

AttackSection parse_attack(const json& node) {
    AttackSection section;
    check_keys(node, "attack",
               {"steps", "step_size", "restarts", "trials_per_class", "box", "repetitions",
                "dump_reconstructions"});
    if (node.contains("steps")) section.config.steps = as_int(node["steps"], "attack.steps");
    if (node.contains("step_size")) {
        section.config.step_size = as_number(node["step_size"], "attack.step_size");
    }
    if (node.contains("restarts")) {
        section.config.restarts = as_int(node["restarts"], "attack.restarts");
    }
    if (node.contains("trials_per_class")) {
        section.config.trials_per_class = as_int(node["trials_per_class"], "attack.trials_per_class");
    }
    if (node.contains("box")) {
        const json& box = node["box"];
        if (!box.is_array() || box.size() != 2) {
            throw ConfigError("attack.box: expected [lo, hi]");
        }
        section.config.box_lo = as_number(box[0], "attack.box");
        section.config.box_hi = as_number(box[1], "attack.box");
    }
    if (node.contains("repetitions")) {
        section.repetitions = as_int(node["repetitions"], "attack.repetitions");
        if (section.repetitions < 1) throw ConfigError("attack.repetitions: must be >= 1");
    }
    if (node.contains("dump_reconstructions")) {
        const json& d = node["dump_reconstructions"];
        if (!d.is_boolean()) throw ConfigError("attack.dump_reconstructions: expected a boolean");
        section.dump_reconstructions = d.get<bool>();
    }
    try {
        section.config.validate();
    } catch (const ParameterError& e) {
        throw ConfigError(std::string("attack: ") + e.what());
    }
    return section;
}

EvalModelSpec parse_eval_model(const json& node) {
    EvalModelSpec spec;
    check_keys(node, "eval_model", {"hidden", "seed_offset"});
    const json& hidden = require(node, "eval_model", "hidden");
    if (!hidden.is_array() || hidden.empty()) {
        throw ConfigError("eval_model.hidden: expected a non-empty array");
    }
    spec.hidden.clear();
    for (const auto& h : hidden) spec.hidden.push_back(as_int(h, "eval_model.hidden"));
    if (node.contains("seed_offset")) {
        spec.seed_offset = static_cast<std::uint64_t>(as_int(node["seed_offset"],
                                                             "eval_model.seed_offset"));
    }
    return spec;
}

SweepSpec parse_sweep(const json& node) {
    SweepSpec spec;
    check_keys(node, "sweep", {"grid"});
    const json& grid = require(node, "sweep", "grid");
    if (!grid.is_array() || grid.empty()) {
        throw ConfigError("sweep.grid: expected a non-empty array of [lambda_x, lambda_y] pairs");
    }
    for (const auto& point : grid) {
        if (!point.is_array() || point.size() != 2) {
            throw ConfigError("sweep.grid: each point must be [lambda_x, lambda_y]");
        }
        spec.grid.emplace_back(as_number(point[0], "sweep.grid"),
                               as_number(point[1], "sweep.grid"));
    }
    return spec;
}

}  // namespace

ExperimentConfig parse_experiment_config_json(const json& doc) {
    check_keys(doc, "config",
               {"version", "seed", "output_dir", "dataset", "model", "train", "bido", "attack",
                "eval_model", "sweep"});
    const int version = as_int(require(doc, "config", "version"), "version");
    if (version != 1) throw ConfigError("version: unsupported config version");

    ExperimentConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(as_int(require(doc, "config", "seed"), "seed"));
    cfg.output_dir = as_string(require(doc, "config", "output_dir"), "output_dir");
    cfg.dataset = parse_dataset(require(doc, "config", "dataset"));
    cfg.model = parse_model(require(doc, "config", "model"));
    cfg.train = parse_train(require(doc, "config", "train"));
    cfg.train.seed = cfg.seed;
    cfg.bido = parse_bido(require(doc, "config", "bido"));
    if (doc.contains("attack")) {
        cfg.attack = parse_attack(doc["attack"]);
        cfg.attack->config.seed = cfg.seed;
    }
    if (doc.contains("eval_model")) cfg.eval_model = parse_eval_model(doc["eval_model"]);
    if (doc.contains("sweep")) cfg.sweep = parse_sweep(doc["sweep"]);
    cfg.canonical = doc;
    cfg.hash = config_hash_of(doc);
    return cfg;
}

ExperimentConfig parse_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    return parse_experiment_config_json(doc);
}

DataSplits build_dataset(const ExperimentConfig& config) {
    Dataset full;
    switch (config.dataset.kind) {
        case Provenance::synthetic_blobs:
            full = synthetic_blobs(config.dataset.classes, config.dataset.per_class,
                                   config.dataset.dim, config.dataset.separation, config.seed);
            break;
        case Provenance::synthetic_digits:
            full = synthetic_digits(config.dataset.per_class, config.dataset.noise, config.seed);
            break;
        case Provenance::mnist_idx: {
            full = load_mnist_idx(config.dataset.images_path, config.dataset.labels_path);
            if (config.dataset.subset > 0 && config.dataset.subset < full.size()) {
                Matrix inputs = full.inputs.topRows(config.dataset.subset);
                std::vector<int> ids(full.label_ids.begin(),
                                     full.label_ids.begin() + config.dataset.subset);
                full = make_dataset(std::move(inputs), std::move(ids), full.class_count,
                                    SplitTag::train, Provenance::mnist_idx);
            }
            break;
        }
    }
    auto parts = split(full, config.dataset.fractions, config.seed + 17);
    return {std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
}

ClassifierModel build_model(const ExperimentConfig& config, int input_dim, int class_count) {
    ClassifierModel model =
        make_mlp(input_dim, config.model.hidden, config.model.taps, class_count, config.seed);
    model.config_fingerprint = config.hash;
    return model;
}

namespace {

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open " + path);
    out << content;
}

void write_config_echo(const ExperimentConfig& config) {
    json echo = config.canonical;
    echo["config_hash"] = config.hash;
    write_text_file(config.output_dir + "/config_echo.json", echo.dump(2) + "\n");
}

}  // namespace

int cmd_train(const std::string& config_path, std::ostream& log) {
    try {
        const ExperimentConfig config = parse_experiment_config(config_path);
        fs::create_directories(config.output_dir);
        const DataSplits data = build_dataset(config);
        ClassifierModel model = build_model(config, data.train.dim(), data.train.class_count);
        const std::string checkpoint = config.output_dir + "/checkpoint.json";
        const TrainReport report =
            train(model, data.train, data.val, config.train, config.bido, checkpoint);
        write_train_report_csv(report, model.tap_count(),
                               config.output_dir + "/train_report.csv", config.hash);
        json summary;
        summary["config_hash"] = config.hash;
        summary["epochs"] = static_cast<int>(report.records.size());
        summary["final_train_loss"] = report.records.back().train_loss;
        summary["final_train_acc"] = report.records.back().train_acc;
        summary["best_val_acc"] = report.best_val_acc;
        summary["best_epoch"] = report.best_epoch;
        write_text_file(config.output_dir + "/train_summary.json", summary.dump(2) + "\n");
        write_config_echo(config);
        log << "train: best val acc " << report.best_val_acc << " (epoch " << report.best_epoch
            << "), checkpoint " << checkpoint << "\n";
        return 0;
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << "\n";
        return 1;
    }
}

int cmd_attack(const std::string& config_path, const std::string& target_checkpoint,
               const std::string& eval_checkpoint, std::ostream& log) {
    try {
        const ExperimentConfig config = parse_experiment_config(config_path);
        if (!config.attack) {
            throw ConfigError("attack: section required for the attack command");
        }
        fs::create_directories(config.output_dir);
        ClassifierModel target;
        ClassifierModel evaluator;
        try {
            target = load_checkpoint(target_checkpoint);
            evaluator = load_checkpoint(eval_checkpoint);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("checkpoint: ") + e.what());
        }
        if (target.class_count != evaluator.class_count) {
            throw ConfigError("checkpoint: target/evaluation class count mismatch");
        }
        const DataSplits data = build_dataset(config);
        const AttackReport report = attack_with_repetitions(
            target, evaluator, config.attack->config, config.attack->repetitions);
        write_attack_csv(report, config.output_dir + "/attack_report.csv", config.hash);
        write_attack_summary_json(report, config.output_dir + "/attack_summary.json",
                                  config.hash);
        if (config.attack->dump_reconstructions) {
            dump_reconstructions(report.detail, config.output_dir + "/reconstructions");
        }
        json point;
        point["config_hash"] = config.hash;
        point["val_acc"] = accuracy(target, data.val.inputs, data.val.labels);
        point["attack_acc"] = report.attack_acc;
        point["attack_acc5"] = report.attack_acc5;
        write_text_file(config.output_dir + "/privacy_utility_point.json", point.dump(2) + "\n");
        write_config_echo(config);
        log << "attack: acc " << report.attack_acc << " acc5 " << report.attack_acc5 << "\n";
        return 0;
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << "\n";
        return 1;
    }
}

int sweep_worker_count() {
    const char* env = std::getenv("BIDO_WORKERS");
    if (!env) return 1;
    const int n = std::atoi(env);
    return n >= 1 ? n : 1;
}

namespace {

struct SweepRow {
    double lambda_x = 0.0;
    double lambda_y = 0.0;
    bool ok = false;
    std::string error;
    PrivacyUtilityPoint point;
};

SweepRow run_sweep_point(const ExperimentConfig& config, const DataSplits& data,
                         std::size_t index, const std::string& eval_checkpoint) {
    SweepRow row;
    row.lambda_x = config.sweep->grid[index].first;
    row.lambda_y = config.sweep->grid[index].second;
    const std::string dir = config.output_dir + "/point_" + std::to_string(index);
    try {
        fs::create_directories(dir);
        BiDOConfig bido = config.bido;
        if (row.lambda_x == 0.0 && row.lambda_y == 0.0) {
            bido = BiDOConfig::plain();
        } else {
            if (bido.mode != BiDOMode::bilateral) {
                throw ConfigError("sweep: bido.mode must be bilateral for sweeps");
            }
            bido.lambda_x = row.lambda_x;
            bido.lambda_y = row.lambda_y;
        }
        ClassifierModel model = build_model(config, data.train.dim(), data.train.class_count);
        const std::string checkpoint = dir + "/checkpoint.json";
        const TrainReport report =
            train(model, data.train, data.val, config.train, bido, checkpoint);
        write_train_report_csv(report, model.tap_count(), dir + "/train_report.csv",
                               config.hash);
        row.point = privacy_utility_point(checkpoint, config.attack->config, eval_checkpoint,
                                          data.val, config.attack->repetitions);
        row.ok = true;
    } catch (const std::exception& e) {
        row.ok = false;
        row.error = e.what();
    }
    return row;
}

}  // namespace

int cmd_sweep(const std::string& config_path, std::ostream& log) {
    try {
        const ExperimentConfig config = parse_experiment_config(config_path);
        if (!config.sweep) throw ConfigError("sweep: section required for the sweep command");
        if (!config.attack) throw ConfigError("attack: section required for the sweep command");
        if (!config.eval_model) {
            throw ConfigError("eval_model: section required for the sweep command");
        }
        fs::create_directories(config.output_dir);
        const DataSplits data = build_dataset(config);

        // Shared evaluation classifier, trained once.
        ClassifierModel evaluator = make_mlp(
            data.train.dim(), config.eval_model->hidden,
            std::vector<bool>(config.eval_model->hidden.size(), false), data.train.class_count,
            config.seed + config.eval_model->seed_offset);
        evaluator.config_fingerprint = config.hash;
        TrainConfig eval_train = config.train;
        eval_train.seed = config.seed + config.eval_model->seed_offset;
        train(evaluator, data.train, data.val, eval_train, BiDOConfig::plain());
        const std::string eval_checkpoint = config.output_dir + "/eval_checkpoint.json";
        save_checkpoint(evaluator, eval_checkpoint);

        const std::size_t n_points = config.sweep->grid.size();
        std::vector<SweepRow> rows(n_points);
        const int workers = std::min<int>(sweep_worker_count(), static_cast<int>(n_points));
        if (workers <= 1) {
            for (std::size_t i = 0; i < n_points; ++i) {
                rows[i] = run_sweep_point(config, data, i, eval_checkpoint);
            }
        } else {
            // Bounded scheduler: launch in waves of `workers`. Each point is
            // self-seeded, so the CSV content is independent of the worker
            // count.
            std::vector<std::future<SweepRow>> futures(n_points);
            for (std::size_t base = 0; base < n_points; base += static_cast<std::size_t>(workers)) {
                const std::size_t end =
                    std::min(base + static_cast<std::size_t>(workers), n_points);
                for (std::size_t i = base; i < end; ++i) {
                    futures[i] = std::async(std::launch::async, run_sweep_point, std::cref(config),
                                            std::cref(data), i, eval_checkpoint);
                }
                for (std::size_t i = base; i < end; ++i) rows[i] = futures[i].get();
            }
        }

        std::vector<std::size_t> order(n_points);
        for (std::size_t i = 0; i < n_points; ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&rows](std::size_t a, std::size_t b) {
            if (rows[a].ok != rows[b].ok) return rows[a].ok;  // failed rows last
            return rows[a].point.val_acc < rows[b].point.val_acc;
        });

        std::ofstream out(config.output_dir + "/sweep.csv", std::ios::binary);
        if (!out) throw FormatError("sweep: cannot open output CSV");
        out << "# config_hash=" << config.hash << "\n";
        out << "lambda_x,lambda_y,status,val_acc,attack_acc,attack_acc5\n";
        char buf[64];
        const auto fmt = [&buf](double v) {
            std::snprintf(buf, sizeof(buf), "%.10g", v);
            return std::string(buf);
        };
        for (std::size_t i : order) {
            const auto& row = rows[i];
            out << fmt(row.lambda_x) << ',' << fmt(row.lambda_y) << ','
                << (row.ok ? "ok" : "failed") << ',' << fmt(row.point.val_acc) << ','
                << fmt(row.point.attack_acc) << ',' << fmt(row.point.attack_acc5) << "\n";
        }
        out.close();
        write_config_echo(config);
        for (const auto& row : rows) {
            if (!row.ok) log << "sweep point failed: " << row.error << "\n";
        }
        log << "sweep: " << n_points << " points written\n";
        return 0;
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace bido
