// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "driftforge/adam.hpp"
#include "driftforge/data.hpp"
#include "driftforge/fisher.hpp"
#include "driftforge/infonce.hpp"
#include "driftforge/metrics.hpp"
#include "driftforge/model.hpp"

namespace driftforge {

enum class Strategy { SaCaisr, Scratch, Finetune, Retrain, Ewc };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& name);
std::vector<Strategy> all_strategies();

struct TrainConfig {
    double alpha = 1.0;  // weight of the consistency term
    i64 batch_size = 256;
    AdamConfig adam;
    i64 max_epochs = 100;
    i64 patience = 5;
    u64 seed = 1;
    Strategy strategy = Strategy::SaCaisr;
    double ewc_lambda = 100.0;
    // one shared updated-model forward serves both the CE loss and the
    // consistency anchors; false runs a second anchor pass
    bool shared_forward = true;
    // Fisher-guided masking of the reference (the screening component)
    bool screening_enabled = true;
    enum class Consistency { InfoNce, Kl, None } consistency = Consistency::InfoNce;
    void validate() const;
};

struct EpochLog {
    int stage = 0;
    i64 epoch = 0;
    double ce = 0;
    double infonce = 0;
    double total = 0;
    double val_recall20 = 0;
    double seconds = 0;
};

struct StageResult {
    int stage = -1;
    ParamSet best_params;
    ModelConfig model_cfg;
    i64 epochs_run = 0;
    i64 best_epoch = 0;
    double wall_seconds = 0;
    i64 peak_rss_bytes = 0;
    std::vector<double> val_recall_trajectory;
    std::vector<EpochLog> logs;
};

struct StageInputs {
    int stage_index = 0;
    std::vector<Sample> train;
    std::vector<Sample> valid;
    i64 vocab_items = 0;  // cumulative item count (excluding padding)
};

struct TrainHooks {
    // called after every optimizer step with the frozen reference (null
    // for strategies without one) and the global batch index
    std::function<void(const ParamSet* reference, i64 batch_index)> after_batch;
};

// Per-stage EWC context: diagonal squared-gradient scores accumulated on
// the previous stage's data at its end, plus the anchor parameters.
struct EwcContext {
    NamedTensors fisher;
    ParamSet anchor;
};

// Trains one stage following the configured strategy. For sa-caisr this
// is the per-batch loop: CE on the updated model, reference-model CE
// gradients feeding the conflict EMA, probabilistic masking of the frozen
// reference, a consistency loss against the filtered reference, restore,
// and a joint Adam step; Fisher decay and Recall@20 early stopping close
// each epoch. `reference` is null on the first stage (plain CE training).
StageResult train_stage(const ParamSet& init_params, const ParamSet* reference, const StageInputs& stage,
                        const ModelConfig& cfg, const TrainConfig& tcfg, const FisherConfig& fcfg,
                        const ContrastiveConfig& ccfg, ConflictScreener* screener, const EwcContext* ewc,
                        const TrainHooks& hooks = {});

// Squared-gradient diagonal averaged over the stage's batches, computed
// with the given parameters held fixed (the EWC importance estimate).
NamedTensors estimate_sq_grad_diagonal(const ParamSet& params, const ModelConfig& cfg,
                                       const std::vector<Sample>& samples, i64 batch_size);

struct StageOutcome {
    StageResult result;
    MetricsReport test;  // stage m model on filtered stage m+1 samples
    // accumulated conflict scores at stage end (sa-caisr only), so the
    // next stage can optionally resume them from disk
    NamedTensors fisher_scores;
};

struct ExperimentOutcome {
    Strategy strategy;
    std::vector<StageOutcome> stages;
};

// Executes the staged protocol: the model at each stage is initialized
// per strategy, trained on that stage's 90:10 split, and tested on the
// next stage's complete (vocabulary-filtered) sample set. The split's
// last stage serves as the final test target only.
ExperimentOutcome run_experiment(const StageSplit& split, const ModelConfig& base_cfg, const TrainConfig& tcfg,
                                 const FisherConfig& fcfg, const ContrastiveConfig& ccfg, const EvalOptions& eopts,
                                 const TrainHooks& hooks = {});

// Seed-stream tags (stable across strategies so identical sub-streams
// line up between runs that must match bit-for-bit).
namespace seed_tag {
constexpr u64 kInit = 0x100;
constexpr u64 kGrow = 0x200;
constexpr u64 kShuffle = 0x300;
constexpr u64 kDropout = 0x400;
constexpr u64 kMask = 0x500;
constexpr u64 kSplit = 0x600;
}  // namespace seed_tag

}  // namespace driftforge
