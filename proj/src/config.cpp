// SPDX-License-Identifier: Apache-2.0
#include "driftforge/config.hpp"

#include <fstream>

namespace driftforge {

using nlohmann::json;

namespace {

template <typename T>
void read_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void ExperimentConfig::validate() const {
    DF_CHECK(dataset.kind == "synthetic" || dataset.kind == "tsv" || dataset.kind == "jsonl",
             "config: dataset.kind must be synthetic, tsv or jsonl");
    if (dataset.kind != "synthetic") DF_CHECK(!dataset.path.empty(), "config: dataset.path required for " << dataset.kind);
    if (dataset.kind == "synthetic") driftforge::validate(dataset.scenario);
    DF_CHECK(stage_plan.k_core >= 1, "config: k_core must be >= 1");
    DF_CHECK(stage_plan.max_seq_len >= 1, "config: max_seq_len must be >= 1");
    DF_CHECK(model.hidden_dim % model.n_heads == 0, "config: hidden_dim must divide by n_heads");
    DF_CHECK(model.dropout_rate >= 0.0 && model.dropout_rate < 1.0, "config: dropout_rate must be in [0,1)");
    train.validate();
    screening.validate();
    contrastive.validate();
    DF_CHECK(!strategies.empty(), "config: strategies list is empty");
    for (const auto& s : strategies)
        if (s != "all") (void)strategy_from_string(s);
    DF_CHECK(!output_dir.empty(), "config: output_dir is empty");
}

json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["dataset"] = {{"kind", cfg.dataset.kind}, {"path", cfg.dataset.path}};
    const auto& sc = cfg.dataset.scenario;
    j["dataset"]["scenario"] = {{"n_categories", sc.n_categories},
                                {"items_per_category", sc.items_per_category},
                                {"stage_popularity", sc.stage_popularity},
                                {"sessions_per_stage", sc.sessions_per_stage},
                                {"min_session_len", sc.min_session_len},
                                {"max_session_len", sc.max_session_len},
                                {"category_stickiness", sc.category_stickiness},
                                {"stage_gap_seconds", sc.stage_gap_seconds},
                                {"seed", sc.seed}};
    j["stage_plan"] = {{"mode", cfg.stage_plan.mode == StagePlan::Mode::BaseBlocks ? "base-plus-blocks" : "fixed-window"},
                       {"window_seconds", cfg.stage_plan.window_seconds},
                       {"base_fraction", cfg.stage_plan.base_fraction},
                       {"n_blocks", cfg.stage_plan.n_blocks},
                       {"k_core", cfg.stage_plan.k_core},
                       {"max_seq_len", cfg.stage_plan.max_seq_len}};
    j["model"] = {{"hidden_dim", cfg.model.hidden_dim},
                  {"n_blocks", cfg.model.n_blocks},
                  {"n_heads", cfg.model.n_heads},
                  {"max_seq_len", cfg.model.max_seq_len},
                  {"dropout_rate", cfg.model.dropout_rate}};
    j["train"] = {{"alpha", cfg.train.alpha},
                  {"batch_size", cfg.train.batch_size},
                  {"lr", cfg.train.adam.lr},
                  {"adam_beta1", cfg.train.adam.beta1},
                  {"adam_beta2", cfg.train.adam.beta2},
                  {"max_epochs", cfg.train.max_epochs},
                  {"patience", cfg.train.patience},
                  {"ewc_lambda", cfg.train.ewc_lambda},
                  {"shared_forward", cfg.train.shared_forward}};
    j["screening"] = {{"ema_beta", cfg.screening.ema_beta},
                      {"decay_gamma", cfg.screening.decay_gamma},
                      {"p_max", cfg.screening.p_max},
                      {"epsilon", cfg.screening.epsilon},
                      {"persist_fisher", cfg.screening.persist_across_stages},
                      {"mode", cfg.screening.mode == FisherConfig::Mode::PerBatch ? "batch" : "stage"}};
    j["contrastive"] = {{"temperature", cfg.contrastive.temperature},
                        {"top_k", cfg.contrastive.top_k},
                        {"similarity",
                         cfg.contrastive.similarity == ContrastiveConfig::Similarity::Cosine ? "cosine" : "dot"},
                        {"negatives_from_positives", cfg.contrastive.negatives_from_positives}};
    j["eval"] = {{"batch_size", cfg.eval.batch_size}, {"exclude_seen", cfg.eval.exclude_seen}};
    j["strategies"] = cfg.strategies;
    j["output_dir"] = cfg.output_dir;
    j["seed"] = cfg.seed;
    return j;
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig cfg;
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        read_if(d, "kind", cfg.dataset.kind);
        read_if(d, "path", cfg.dataset.path);
        if (d.contains("scenario")) {
            const auto& s = d.at("scenario");
            auto& sc = cfg.dataset.scenario;
            read_if(s, "n_categories", sc.n_categories);
            read_if(s, "items_per_category", sc.items_per_category);
            read_if(s, "stage_popularity", sc.stage_popularity);
            read_if(s, "sessions_per_stage", sc.sessions_per_stage);
            read_if(s, "min_session_len", sc.min_session_len);
            read_if(s, "max_session_len", sc.max_session_len);
            read_if(s, "category_stickiness", sc.category_stickiness);
            read_if(s, "stage_gap_seconds", sc.stage_gap_seconds);
            read_if(s, "seed", sc.seed);
        }
    }
    if (j.contains("stage_plan")) {
        const auto& p = j.at("stage_plan");
        std::string mode = "base-plus-blocks";
        read_if(p, "mode", mode);
        DF_CHECK(mode == "base-plus-blocks" || mode == "fixed-window", "config: unknown stage_plan.mode " << mode);
        cfg.stage_plan.mode = mode == "base-plus-blocks" ? StagePlan::Mode::BaseBlocks : StagePlan::Mode::FixedWindow;
        read_if(p, "window_seconds", cfg.stage_plan.window_seconds);
        read_if(p, "base_fraction", cfg.stage_plan.base_fraction);
        read_if(p, "n_blocks", cfg.stage_plan.n_blocks);
        read_if(p, "k_core", cfg.stage_plan.k_core);
        read_if(p, "max_seq_len", cfg.stage_plan.max_seq_len);
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        read_if(m, "hidden_dim", cfg.model.hidden_dim);
        read_if(m, "n_blocks", cfg.model.n_blocks);
        read_if(m, "n_heads", cfg.model.n_heads);
        read_if(m, "max_seq_len", cfg.model.max_seq_len);
        read_if(m, "dropout_rate", cfg.model.dropout_rate);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        read_if(t, "alpha", cfg.train.alpha);
        read_if(t, "batch_size", cfg.train.batch_size);
        read_if(t, "lr", cfg.train.adam.lr);
        read_if(t, "adam_beta1", cfg.train.adam.beta1);
        read_if(t, "adam_beta2", cfg.train.adam.beta2);
        read_if(t, "max_epochs", cfg.train.max_epochs);
        read_if(t, "patience", cfg.train.patience);
        read_if(t, "ewc_lambda", cfg.train.ewc_lambda);
        read_if(t, "shared_forward", cfg.train.shared_forward);
    }
    if (j.contains("screening")) {
        const auto& s = j.at("screening");
        read_if(s, "ema_beta", cfg.screening.ema_beta);
        read_if(s, "decay_gamma", cfg.screening.decay_gamma);
        read_if(s, "p_max", cfg.screening.p_max);
        read_if(s, "epsilon", cfg.screening.epsilon);
        read_if(s, "persist_fisher", cfg.screening.persist_across_stages);
        std::string mode = "batch";
        read_if(s, "mode", mode);
        DF_CHECK(mode == "batch" || mode == "stage", "config: unknown screening.mode " << mode);
        cfg.screening.mode = mode == "batch" ? FisherConfig::Mode::PerBatch : FisherConfig::Mode::PerStage;
    }
    if (j.contains("contrastive")) {
        const auto& c = j.at("contrastive");
        read_if(c, "temperature", cfg.contrastive.temperature);
        read_if(c, "top_k", cfg.contrastive.top_k);
        std::string sim = "cosine";
        read_if(c, "similarity", sim);
        DF_CHECK(sim == "cosine" || sim == "dot", "config: unknown similarity " << sim);
        cfg.contrastive.similarity =
            sim == "cosine" ? ContrastiveConfig::Similarity::Cosine : ContrastiveConfig::Similarity::Dot;
        read_if(c, "negatives_from_positives", cfg.contrastive.negatives_from_positives);
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        read_if(e, "batch_size", cfg.eval.batch_size);
        read_if(e, "exclude_seen", cfg.eval.exclude_seen);
    }
    read_if(j, "strategies", cfg.strategies);
    read_if(j, "output_dir", cfg.output_dir);
    read_if(j, "seed", cfg.seed);
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    DF_CHECK(in.good(), "config: cannot open '" << path << "'");
    json j = json::parse(in, nullptr, true, true);  // allow comments
    return config_from_json(j);
}

void save_config(const std::string& path, const ExperimentConfig& cfg) {
    std::ofstream out(path);
    DF_CHECK(out.good(), "config: cannot write '" << path << "'");
    out << config_to_json(cfg).dump(2) << "\n";
}

}  // namespace driftforge
