#include <cstdio>
#include <fstream>

#include "bido/attack.hpp"
#include "bido/errors.hpp"
#include "bido/training.hpp"

namespace bido {

std::vector<AblationPoint> ablation_run(const Dataset& train_set, const Dataset& val_set,
                                        const std::vector<AblationVariant>& variants,
                                        const AblationSetup& setup, const std::string& csv_path,
                                        const std::string& config_hash) {
    bool has_x_only = false;
    bool has_y_only = false;
    bool has_full = false;
    for (const auto& v : variants) {
        if (v.bido.mode != BiDOMode::bilateral) continue;
        if (v.bido.lambda_x > 0.0 && v.bido.lambda_y == 0.0) has_x_only = true;
        if (v.bido.lambda_x == 0.0 && v.bido.lambda_y > 0.0) has_y_only = true;
        if (v.bido.lambda_x > 0.0 && v.bido.lambda_y > 0.0) has_full = true;
    }
    if (!has_x_only || !has_y_only || !has_full) {
        throw ParameterError(
            "ablation_run: variants must cover lambda_y=0, lambda_x=0 and the full objective");
    }

    // Shared evaluation classifier: wider net, different seed, plain loss.
    ClassifierModel evaluator =
        make_mlp(train_set.dim(), setup.eval_hidden,
                 std::vector<bool>(setup.eval_hidden.size(), false), train_set.class_count,
                 setup.seed + 9001);
    TrainConfig eval_train = setup.train;
    eval_train.seed = setup.seed + 9001;
    train(evaluator, train_set, val_set, eval_train, BiDOConfig::plain());

    AttackConfig attack_config;
    attack_config.steps = setup.attack_steps;
    attack_config.step_size = setup.attack_step_size;
    attack_config.restarts = setup.attack_restarts;
    attack_config.trials_per_class = setup.attack_trials;
    attack_config.seed = setup.seed + 4242;

    std::vector<AblationPoint> points;
    for (const auto& variant : variants) {
        AblationPoint point;
        point.name = variant.name;
        point.lambda_x = variant.bido.lambda_x;
        point.lambda_y = variant.bido.lambda_y;
        try {
            ClassifierModel model = make_mlp(train_set.dim(), setup.hidden, setup.taps,
                                             train_set.class_count, setup.seed);
            TrainConfig tc = setup.train;
            tc.seed = setup.seed;
            train(model, train_set, val_set, tc, variant.bido);
            point.val_acc = accuracy(model, val_set.inputs, val_set.labels);
            const AttackReport report = attack_with_repetitions(
                model, evaluator, attack_config, setup.attack_repetitions);
            point.attack_acc = report.attack_acc;
            point.attack_acc5 = report.attack_acc5;
            point.ok = true;
        } catch (const std::exception& e) {
            point.ok = false;
            point.error = e.what();
        }
        points.push_back(std::move(point));
    }

    if (!csv_path.empty()) {
        std::ofstream out(csv_path, std::ios::binary);
        if (!out) throw FormatError("ablation_run: cannot open " + csv_path);
        out << "# config_hash=" << config_hash << "\n";
        out << "name,lambda_x,lambda_y,status,val_acc,attack_acc,attack_acc5\n";
        char buf[64];
        const auto fmt = [&buf](double v) {
            std::snprintf(buf, sizeof(buf), "%.10g", v);
            return std::string(buf);
        };
        for (const auto& p : points) {
            out << p.name << ',' << fmt(p.lambda_x) << ',' << fmt(p.lambda_y) << ','
                << (p.ok ? "ok" : "failed") << ',' << fmt(p.val_acc) << ','
                << fmt(p.attack_acc) << ',' << fmt(p.attack_acc5) << "\n";
        }
    }
    return points;
}

}  // namespace bido
