#include <iostream>

#include <CLI11.hpp>

#include "stylefp/pipeline.hpp"

using namespace stylefp;

int main(int argc, char** argv) {
    CLI::App app{"style-fingerprint verification toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string checkpoint;
    std::string input;
    std::uint64_t seed_override = 0;
    bool have_seed_override = false;
    bool keep_going = false;
    bool resume = false;
    bool robustness = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "pipeline config file")->required();
        cmd->add_option_function<std::uint64_t>(
               "--seed",
               [&](std::uint64_t s) {
                   seed_override = s;
                   have_seed_override = true;
               },
               "override the config seed");
        cmd->add_option("--checkpoint", checkpoint, "checkpoint path override");
    };

    CLI::App* cmd_augment = app.add_subcommand("augment", "derive augmented samples for train positives");
    add_common(cmd_augment);
    cmd_augment->add_flag("--keep-going", keep_going, "continue past per-image provider failures");

    CLI::App* cmd_train = app.add_subcommand("train", "train the extractor and hypersphere verifier");
    add_common(cmd_train);
    cmd_train->add_flag("--resume", resume, "continue from the stored epoch count");

    CLI::App* cmd_calibrate = app.add_subcommand("calibrate", "line-search the decision radius");
    add_common(cmd_calibrate);

    CLI::App* cmd_verify = app.add_subcommand("verify", "verdict for an image or directory");
    add_common(cmd_verify);
    cmd_verify->add_option("--input", input, "image file or directory")->required();

    CLI::App* cmd_evaluate = app.add_subcommand("evaluate", "metrics report on the test split");
    add_common(cmd_evaluate);
    cmd_evaluate->add_flag("--robustness", robustness, "run the transform battery");

    CLI11_PARSE(app, argc, argv);

    try {
        PipelineConfig config = PipelineConfig::load(config_path);
        if (have_seed_override) {
            config.seed = seed_override;
            config.train.seed = seed_override;
        }

        if (cmd_augment->parsed()) {
            const AugmentOutcome outcome = cli_augment(config, keep_going);
            std::cout << "added " << outcome.entries_added << " augmented entries to "
                      << outcome.manifest_path << "\n";
            return outcome.failures > 0 ? 1 : 0;
        }
        if (cmd_train->parsed()) {
            const std::string path = cli_train(config, resume, checkpoint, &std::cout);
            std::cout << "checkpoint written to " << path << "\n";
            return 0;
        }
        if (cmd_calibrate->parsed()) {
            const double radius = cli_calibrate(config, checkpoint);
            std::cout << "calibrated radius " << radius << "\n";
            return 0;
        }
        if (cmd_verify->parsed()) {
            return cli_verify(config, input, std::cout, checkpoint);
        }
        if (cmd_evaluate->parsed()) {
            const std::string path = cli_evaluate(config, robustness, checkpoint);
            std::cout << "report written to " << path << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
