// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "driftforge/fisher.hpp"
#include "driftforge/infonce.hpp"
#include "driftforge/metrics.hpp"
#include "driftforge/synthetic.hpp"
#include "driftforge/trainer.hpp"

namespace driftforge {

struct DatasetConfig {
    std::string kind = "synthetic";  // "synthetic" | "tsv" | "jsonl"
    std::string path;                // input file for tsv/jsonl
    DriftScenario scenario;          // used when kind == "synthetic"
};

// Everything one experiment needs; round-trips through JSON losslessly.
struct ExperimentConfig {
    DatasetConfig dataset;
    StagePlan stage_plan;
    ModelConfig model;  // vocab_size is filled per stage at runtime
    TrainConfig train;
    FisherConfig screening;
    ContrastiveConfig contrastive;
    EvalOptions eval;
    std::vector<std::string> strategies = {"finetune", "sa-caisr"};
    std::string output_dir = "out";
    u64 seed = 1;

    void validate() const;
};

nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);

ExperimentConfig load_config(const std::string& path);
void save_config(const std::string& path, const ExperimentConfig& cfg);

}  // namespace driftforge
