// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include <iostream>

#include "driftforge/commands.hpp"

using namespace driftforge;

int main(int argc, char** argv) {
    CLI::App app{"driftforge: incremental sequential-recommendation experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    i64 seed_override = -1;
    std::vector<std::string> strategies_override;

    app.add_option("--config", config_path, "experiment config (JSON)")->required();
    app.add_option("--out", out_override, "output directory (overrides config)");
    app.add_option("--seed", seed_override, "base seed (overrides config)");
    app.add_option("--strategies", strategies_override, "strategy list or 'all'")->delimiter(',');

    auto* prepare = app.add_subcommand("prepare", "ingest or synthesize data and write stage manifests");
    auto* run = app.add_subcommand("run", "train and evaluate the requested strategies");
    auto* ablate = app.add_subcommand("ablate", "one-axis component or hyperparameter sweep");
    auto* eval = app.add_subcommand("eval", "score a saved checkpoint on one stage");

    std::string axis = "components";
    std::vector<double> grid;
    ablate->add_option("--axis", axis, "components | fisher-update | topk | alpha");
    ablate->add_option("--grid", grid, "numeric grid for topk/alpha")->delimiter(',');

    std::string checkpoint;
    int test_stage = 1;
    eval->add_option("--ckpt", checkpoint, "checkpoint file")->required();
    eval->add_option("--stage", test_stage, "stage whose samples form the test set");

    CLI11_PARSE(app, argc, argv);

    try {
        ExperimentConfig cfg = load_config(config_path);
        if (seed_override >= 0) {
            cfg.seed = static_cast<u64>(seed_override);
            cfg.dataset.scenario.seed = static_cast<u64>(seed_override);
        }
        if (!strategies_override.empty()) cfg.strategies = strategies_override;
        cfg.validate();
        const std::string out = out_override.empty() ? cfg.output_dir : out_override;

        if (prepare->parsed()) cmd_prepare(cfg, out);
        if (run->parsed()) cmd_run(cfg, out);
        if (ablate->parsed()) cmd_ablate(cfg, out, axis, grid);
        if (eval->parsed()) cmd_eval(cfg, out, checkpoint, test_stage);
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
