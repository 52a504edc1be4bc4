#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "bido/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"BiDO: dependency-regularized training and model-inversion evaluation"};
    app.require_subcommand(1);

    std::string train_config;
    auto* train_cmd = app.add_subcommand("train", "Train a classifier from a JSON config");
    train_cmd->add_option("--config", train_config, "Path to the experiment config")->required();

    std::string attack_config;
    std::string target_path;
    std::string eval_path;
    auto* attack_cmd =
        app.add_subcommand("attack", "Run the inversion attack against a trained checkpoint");
    attack_cmd->add_option("--config", attack_config, "Path to the experiment config")->required();
    attack_cmd->add_option("--target", target_path, "Target model checkpoint")->required();
    attack_cmd->add_option("--eval", eval_path, "Evaluation model checkpoint")->required();

    std::string sweep_config;
    auto* sweep_cmd =
        app.add_subcommand("sweep", "Train and attack a grid of (lambda_x, lambda_y) settings");
    sweep_cmd->add_option("--config", sweep_config, "Path to the experiment config")->required();

    auto* selftest_cmd =
        app.add_subcommand("selftest", "Run estimator, gradient and calibration checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (train_cmd->parsed()) return bido::cmd_train(train_config, std::cout);
    if (attack_cmd->parsed()) return bido::cmd_attack(attack_config, target_path, eval_path, std::cout);
    if (sweep_cmd->parsed()) return bido::cmd_sweep(sweep_config, std::cout);
    if (selftest_cmd->parsed()) return bido::cmd_selftest(std::cout);
    return 2;
}
