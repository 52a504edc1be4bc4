#include "bido/attack.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bido/errors.hpp"

namespace bido {

using nlohmann::json;

void AttackConfig::validate() const {
    if (steps < 1) throw ParameterError("attack config: steps >= 1");
    if (step_size <= 0.0) throw ParameterError("attack config: step_size > 0");
    if (restarts < 1) throw ParameterError("attack config: restarts >= 1");
    if (trials_per_class < 1) throw ParameterError("attack config: trials_per_class >= 1");
    if (!(box_lo < box_hi)) throw ParameterError("attack config: box_lo < box_hi");
}

namespace {

std::mt19937_64 chain_rng(std::uint64_t seed, int class_index, int trial, int restart) {
    std::seed_seq seq{seed, static_cast<std::uint64_t>(class_index),
                      static_cast<std::uint64_t>(trial), static_cast<std::uint64_t>(restart)};
    return std::mt19937_64(seq);
}

void draw_start(Eigen::Ref<Eigen::RowVectorXd> row, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    for (Eigen::Index j = 0; j < row.size(); ++j) row(j) = dist(rng);
}

}  // namespace

ClassInversion invert_class(const ClassifierModel& target, int class_index,
                            const AttackConfig& config, Matrix* objective_telemetry) {
    config.validate();
    target.validate();
    if (class_index < 0 || class_index >= target.class_count) {
        throw ParameterError("invert_class: class index out of range");
    }
    const int d = target.input_dim;
    const int chains = config.trials_per_class * config.restarts;

    Matrix x(chains, d);
    std::vector<std::mt19937_64> streams;
    streams.reserve(static_cast<std::size_t>(chains));
    for (int t = 0; t < config.trials_per_class; ++t) {
        for (int r = 0; r < config.restarts; ++r) {
            streams.push_back(chain_rng(config.seed, class_index, t, r));
            draw_start(x.row(static_cast<Eigen::Index>(streams.size()) - 1), streams.back(),
                       config.box_lo, config.box_hi);
        }
    }
    if (objective_telemetry) {
        objective_telemetry->setZero(config.steps, chains);
    }

    std::vector<int> chain_step(static_cast<std::size_t>(chains), 0);
    std::vector<int> reseeds(static_cast<std::size_t>(chains), 0);
    const double pi = std::acos(-1.0);
    bool any_active = true;
    while (any_active) {
        const ForwardTrace trace = forward_with_taps(target, x);
        // d log f^i / d logits = e_i - p, row-wise.
        Matrix d_logits = -trace.probabilities;
        d_logits.col(class_index).array() += 1.0;
        UpstreamGrads upstream;
        upstream.d_logits = std::move(d_logits);
        const BackwardResult back = backward(target, trace, upstream, false);

        any_active = false;
        for (int c = 0; c < chains; ++c) {
            if (chain_step[static_cast<std::size_t>(c)] >= config.steps) continue;
            if (!back.d_input.row(c).allFinite()) {
                auto& count = reseeds[static_cast<std::size_t>(c)];
                if (++count > 3) {
                    std::ostringstream os;
                    os << "invert_class: chain for class " << class_index << " trial "
                       << c / config.restarts << " produced non-finite gradients after 3 re-seeds";
                    throw EvaluationError(os.str());
                }
                draw_start(x.row(c), streams[static_cast<std::size_t>(c)], config.box_lo,
                           config.box_hi);
                chain_step[static_cast<std::size_t>(c)] = 0;
                any_active = true;
                continue;
            }
            const int s = chain_step[static_cast<std::size_t>(c)];
            if (objective_telemetry) {
                (*objective_telemetry)(s, c) =
                    std::log(std::max(trace.probabilities(c, class_index), 1e-300));
            }
            const double eta =
                config.step_size * 0.5 *
                (1.0 + std::cos(pi * static_cast<double>(s) / static_cast<double>(config.steps)));
            x.row(c) += eta * back.d_input.row(c);
            x.row(c) = x.row(c).cwiseMax(config.box_lo).cwiseMin(config.box_hi);
            if (++chain_step[static_cast<std::size_t>(c)] < config.steps) any_active = true;
        }
    }

    const ForwardTrace final_trace = forward_with_taps(target, x);
    ClassInversion result;
    result.class_index = class_index;
    result.reconstructions.resize(config.trials_per_class, d);
    result.confidences.resize(config.trials_per_class);
    for (int t = 0; t < config.trials_per_class; ++t) {
        int best = t * config.restarts;
        for (int r = 1; r < config.restarts; ++r) {
            const int c = t * config.restarts + r;
            if (final_trace.probabilities(c, class_index) >
                final_trace.probabilities(best, class_index)) {
                best = c;
            }
        }
        result.reconstructions.row(t) = x.row(best);
        result.confidences(t) = final_trace.probabilities(best, class_index);
    }
    return result;
}

AttackRun run_attack(const ClassifierModel& target, const AttackConfig& config) {
    AttackRun run;
    run.per_class.reserve(static_cast<std::size_t>(target.class_count));
    for (int c = 0; c < target.class_count; ++c) {
        run.per_class.push_back(invert_class(target, c, config));
    }
    return run;
}

AttackEvaluation evaluate_attack(const AttackRun& run, const ClassifierModel& evaluation_model) {
    evaluation_model.validate();
    if (run.per_class.empty()) throw ParameterError("evaluate_attack: empty run");
    if (static_cast<int>(run.per_class.size()) != evaluation_model.class_count) {
        std::ostringstream os;
        os << "evaluate_attack: run covers " << run.per_class.size()
           << " classes but evaluation model has " << evaluation_model.class_count;
        throw DimensionError(os.str());
    }

    AttackEvaluation eval;
    long total = 0;
    long hits1 = 0;
    long hits5 = 0;
    for (const auto& inv : run.per_class) {
        if (inv.reconstructions.cols() != evaluation_model.input_dim) {
            throw DimensionError("evaluate_attack: reconstruction dim mismatch");
        }
        const ForwardTrace trace = forward_with_taps(evaluation_model, inv.reconstructions);
        std::vector<int> top1;
        std::vector<bool> top5;
        long c_hits1 = 0;
        long c_hits5 = 0;
        for (Eigen::Index t = 0; t < trace.probabilities.rows(); ++t) {
            std::vector<int> order(static_cast<std::size_t>(evaluation_model.class_count));
            std::iota(order.begin(), order.end(), 0);
            const auto row = trace.probabilities.row(t);
            std::stable_sort(order.begin(), order.end(),
                             [&row](int a, int b) { return row(a) > row(b); });
            top1.push_back(order[0]);
            const int top_k = std::min(5, evaluation_model.class_count);
            bool in5 = false;
            for (int k = 0; k < top_k; ++k) in5 = in5 || order[static_cast<std::size_t>(k)] == inv.class_index;
            top5.push_back(in5);
            c_hits1 += order[0] == inv.class_index ? 1 : 0;
            c_hits5 += in5 ? 1 : 0;
        }
        const auto trials = static_cast<double>(trace.probabilities.rows());
        eval.per_class_acc.push_back(static_cast<double>(c_hits1) / trials);
        eval.per_class_acc5.push_back(static_cast<double>(c_hits5) / trials);
        eval.top1.push_back(std::move(top1));
        eval.top5_hit.push_back(std::move(top5));
        total += trace.probabilities.rows();
        hits1 += c_hits1;
        hits5 += c_hits5;
    }
    eval.attack_acc = static_cast<double>(hits1) / static_cast<double>(total);
    eval.attack_acc5 = static_cast<double>(hits5) / static_cast<double>(total);
    return eval;
}

AttackReport attack_with_repetitions(const ClassifierModel& target,
                                     const ClassifierModel& evaluation_model,
                                     const AttackConfig& config, int repetitions) {
    if (repetitions < 1) throw ParameterError("attack_with_repetitions: repetitions >= 1");
    if (target.class_count != evaluation_model.class_count) {
        throw DimensionError("attack: target/evaluation class count mismatch");
    }
    AttackReport report;
    report.repetitions = repetitions;
    for (int rep = 0; rep < repetitions; ++rep) {
        AttackConfig rep_config = config;
        rep_config.seed = config.seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(rep + 1));
        AttackRun run = run_attack(target, rep_config);
        AttackEvaluation eval = evaluate_attack(run, evaluation_model);
        report.rep_acc.push_back(eval.attack_acc);
        report.rep_acc5.push_back(eval.attack_acc5);
        if (rep == 0) {
            report.detail = std::move(run);
            report.detail_eval = std::move(eval);
        }
    }
    const auto mean = [](const std::vector<double>& v) {
        return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    const auto sample_std = [&mean](const std::vector<double>& v) {
        if (v.size() < 2) return 0.0;
        const double m = mean(v);
        double ss = 0.0;
        for (double x : v) ss += (x - m) * (x - m);
        return std::sqrt(ss / static_cast<double>(v.size() - 1));
    };
    report.attack_acc = mean(report.rep_acc);
    report.attack_acc5 = mean(report.rep_acc5);
    report.std_acc = sample_std(report.rep_acc);
    report.std_acc5 = sample_std(report.rep_acc5);
    return report;
}

PrivacyUtilityPoint privacy_utility_point(const std::string& target_checkpoint,
                                          const AttackConfig& attack_config,
                                          const std::string& evaluation_checkpoint,
                                          const Dataset& val_set, int repetitions) {
    const ClassifierModel target = load_checkpoint(target_checkpoint);
    const ClassifierModel evaluator = load_checkpoint(evaluation_checkpoint);
    if (target.class_count != evaluator.class_count) {
        throw DimensionError("privacy_utility_point: class count mismatch between checkpoints");
    }
    PrivacyUtilityPoint point;
    point.val_acc = accuracy(target, val_set.inputs, val_set.labels);
    const AttackReport report =
        attack_with_repetitions(target, evaluator, attack_config, repetitions);
    point.attack_acc = report.attack_acc;
    point.attack_acc5 = report.attack_acc5;
    return point;
}

void write_attack_csv(const AttackReport& report, const std::string& path,
                      const std::string& config_hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("write_attack_csv: cannot open " + path);
    out << "# config_hash=" << config_hash << "\n";
    out << "class,trial,final_confidence,eval_top1,eval_top5_hit\n";
    char buf[64];
    for (std::size_t c = 0; c < report.detail.per_class.size(); ++c) {
        const auto& inv = report.detail.per_class[c];
        for (Eigen::Index t = 0; t < inv.confidences.size(); ++t) {
            std::snprintf(buf, sizeof(buf), "%.10g", inv.confidences(t));
            out << inv.class_index << ',' << t << ',' << buf << ','
                << report.detail_eval.top1[c][static_cast<std::size_t>(t)] << ','
                << (report.detail_eval.top5_hit[c][static_cast<std::size_t>(t)] ? 1 : 0) << "\n";
        }
    }
}

void write_attack_summary_json(const AttackReport& report, const std::string& path,
                               const std::string& config_hash) {
    json doc;
    doc["attack_acc"] = report.attack_acc;
    doc["attack_acc5"] = report.attack_acc5;
    doc["std_acc"] = report.std_acc;
    doc["std_acc5"] = report.std_acc5;
    doc["repetitions"] = report.repetitions;
    doc["config_hash"] = config_hash;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("write_attack_summary_json: cannot open " + path);
    out << doc.dump(2) << "\n";
}

void dump_reconstructions(const AttackRun& run, const std::string& directory) {
    std::filesystem::create_directories(directory);
    for (const auto& inv : run.per_class) {
        std::ostringstream base;
        base << directory << "/reconstructions_class_" << inv.class_index;
        {
            std::ofstream raw(base.str() + ".f64", std::ios::binary);
            if (!raw) throw FormatError("dump_reconstructions: cannot open output");
            raw.write(reinterpret_cast<const char*>(inv.reconstructions.data()),
                      static_cast<std::streamsize>(
                          sizeof(double) * static_cast<std::size_t>(inv.reconstructions.size())));
        }
        json sidecar;
        sidecar["shape"] = {inv.reconstructions.rows(), inv.reconstructions.cols()};
        sidecar["class"] = inv.class_index;
        sidecar["trials"] = inv.reconstructions.rows();
        sidecar["layout"] = "row-major float64 little-endian";
        std::ofstream meta(base.str() + ".json", std::ios::binary);
        meta << sidecar.dump(2) << "\n";
    }
}

}  // namespace bido
