// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "driftforge/config.hpp"

namespace driftforge {

// Resolves the configured dataset (file or synthetic) into staged data.
StageSplit load_stages(const ExperimentConfig& cfg);

// Expands the configured strategy names ("all" covers every built-in).
std::vector<Strategy> resolve_strategies(const std::vector<std::string>& names);

// Writes per-stage manifests under <out>/stages and prints a summary
// table of the stage statistics.
void cmd_prepare(const ExperimentConfig& cfg, const std::string& out_dir);

// Runs every requested strategy over the staged protocol; emits per
// strategy metrics.csv, resources.csv, checkpoints and a structured
// run.log, plus a combined summary.csv and the frozen effective config.
void cmd_run(const ExperimentConfig& cfg, const std::string& out_dir);

// One-axis sweeps: "components" (screening x consistency grid),
// "fisher-update" (static / per-batch / per-batch+smoothing),
// "topk" and "alpha" (numeric grids).
void cmd_ablate(const ExperimentConfig& cfg, const std::string& out_dir, const std::string& axis,
                const std::vector<double>& grid);

// Evaluates a saved checkpoint on the complete samples of one stage
// (vocabulary-filtered to the checkpoint's embedding table).
MetricsReport cmd_eval(const ExperimentConfig& cfg, const std::string& out_dir, const std::string& checkpoint_path,
                       int test_stage);

}  // namespace driftforge
