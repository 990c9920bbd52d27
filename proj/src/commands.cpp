// SPDX-License-Identifier: Apache-2.0
#include "driftforge/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

namespace driftforge {

namespace fs = std::filesystem;
using nlohmann::json;

StageSplit load_stages(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<InteractionEvent> events;
    if (cfg.dataset.kind == "synthetic") {
        events = generate_drift(cfg.dataset.scenario);
    } else {
        DF_CHECK(fs::exists(cfg.dataset.path), "dataset path '" << cfg.dataset.path << "' does not exist");
        events = ingest(cfg.dataset.path, cfg.dataset.kind == "tsv" ? IngestFormat::Tsv : IngestFormat::JsonLines);
    }
    return split_stages(events, cfg.stage_plan);
}

std::vector<Strategy> resolve_strategies(const std::vector<std::string>& names) {
    std::vector<Strategy> out;
    std::set<std::string> seen;
    for (const auto& name : names) {
        if (name == "all") {
            for (Strategy s : all_strategies())
                if (seen.insert(to_string(s)).second) out.push_back(s);
            continue;
        }
        if (seen.insert(name).second) out.push_back(strategy_from_string(name));
    }
    return out;
}

namespace {

json manifest_json(const StageData& st) {
    return json{{"stage", st.stage_index},
                {"users", st.stats.users},
                {"new_users", st.stats.new_users},
                {"items", st.stats.items},
                {"new_items", st.stats.new_items},
                {"interactions", st.stats.interactions},
                {"avg_actions_per_user", st.stats.avg_actions_per_user},
                {"avg_actions_per_item", st.stats.avg_actions_per_item},
                {"cumulative_items", st.vocab_items}};
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    DF_CHECK(out.good(), "cannot write '" << path.string() << "'");
    out << text;
}

class IncompleteMarker {
public:
    explicit IncompleteMarker(const fs::path& dir) : path_(dir / "_INCOMPLETE") { write_text(path_, "run in progress\n"); }
    ~IncompleteMarker() {
        if (!done_) std::cerr << "[driftforge] run did not finish; partial outputs flagged by " << path_ << "\n";
    }
    void finish() {
        done_ = true;
        fs::remove(path_);
    }

private:
    fs::path path_;
    bool done_ = false;
};

std::string resource_csv_header() { return "stage,epochs_run,best_epoch,wall_seconds,peak_rss_bytes"; }

std::string resource_csv_row(const StageResult& r) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d,%lld,%lld,%.3f,%lld", r.stage, static_cast<long long>(r.epochs_run),
                  static_cast<long long>(r.best_epoch), r.wall_seconds, static_cast<long long>(r.peak_rss_bytes));
    return buf;
}

json epoch_log_json(const EpochLog& log) {
    return json{{"stage", log.stage},   {"epoch", log.epoch},
                {"ce", log.ce},         {"infonce", log.infonce},
                {"total", log.total},   {"val_recall20", log.val_recall20},
                {"seconds", log.seconds}};
}

void write_outcome(const fs::path& dir, const ExperimentOutcome& outcome, const FisherConfig& fcfg) {
    fs::create_directories(dir / "checkpoints");
    std::string metrics = metrics_csv_header(false) + "\n";
    std::string resources = resource_csv_header() + "\n";
    std::string log;
    for (const auto& st : outcome.stages) {
        metrics += metrics_csv_row(st.test) + "\n";
        resources += resource_csv_row(st.result) + "\n";
        for (const auto& e : st.result.logs) log += epoch_log_json(e).dump() + "\n";
        st.result.best_params.save((dir / ("checkpoints/stage_" + std::to_string(st.result.stage) + ".ckpt")).string(),
                                   st.result.model_cfg);
        if (!st.fisher_scores.empty()) {
            // the same format ConflictScreener::load consumes
            std::map<std::string, double> meta = {{"ema_beta", fcfg.ema_beta},
                                                  {"decay_gamma", fcfg.decay_gamma},
                                                  {"p_max", fcfg.p_max},
                                                  {"epsilon", fcfg.epsilon}};
            write_file((dir / ("checkpoints/stage_" + std::to_string(st.result.stage) + ".fisher")).string(),
                       encode_records("DRIFTFORGE-FISHER-1", meta, st.fisher_scores));
        }
    }
    write_text(dir / "metrics.csv", metrics);
    write_text(dir / "resources.csv", resources);
    write_text(dir / "run.log", log);
}

ExperimentOutcome run_one(const StageSplit& split, const ExperimentConfig& cfg, Strategy strategy) {
    TrainConfig tcfg = cfg.train;
    tcfg.strategy = strategy;
    tcfg.seed = cfg.seed;
    return run_experiment(split, cfg.model, tcfg, cfg.screening, cfg.contrastive, cfg.eval);
}

}  // namespace

void cmd_prepare(const ExperimentConfig& cfg, const std::string& out_dir) {
    StageSplit split = load_stages(cfg);
    const fs::path stages_dir = fs::path(out_dir) / "stages";
    fs::create_directories(stages_dir);
    std::cout << "stage  users  new_users  items  new_items  interactions  act/user  act/item\n";
    for (const auto& st : split.stages) {
        write_text(stages_dir / ("stage_" + std::to_string(st.stage_index) + ".manifest"),
                   manifest_json(st).dump(2) + "\n");
        char line[200];
        std::snprintf(line, sizeof(line), "%5d %6lld %10lld %6lld %10lld %13lld %9.2f %9.2f\n", st.stage_index,
                      static_cast<long long>(st.stats.users), static_cast<long long>(st.stats.new_users),
                      static_cast<long long>(st.stats.items), static_cast<long long>(st.stats.new_items),
                      static_cast<long long>(st.stats.interactions), st.stats.avg_actions_per_user,
                      st.stats.avg_actions_per_item);
        std::cout << line;
    }
}

void cmd_run(const ExperimentConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    IncompleteMarker marker(out_dir);
    // freeze the effective config next to the outputs
    ExperimentConfig frozen = cfg;
    frozen.output_dir = out_dir;
    save_config((fs::path(out_dir) / "config.json").string(), frozen);

    if (!fs::exists(fs::path(out_dir) / "stages")) cmd_prepare(cfg, out_dir);
    StageSplit split = load_stages(cfg);

    std::string summary = metrics_csv_header(true) + "\n";
    for (Strategy strategy : resolve_strategies(cfg.strategies)) {
        std::cout << "[driftforge] running strategy " << to_string(strategy) << "\n";
        ExperimentOutcome outcome = run_one(split, cfg, strategy);
        write_outcome(fs::path(out_dir) / to_string(strategy), outcome, cfg.screening);
        for (const auto& st : outcome.stages) summary += metrics_csv_row(st.test, to_string(strategy)) + "\n";
    }
    write_text(fs::path(out_dir) / "summary.csv", summary);
    marker.finish();
}

void cmd_ablate(const ExperimentConfig& cfg, const std::string& out_dir, const std::string& axis,
                const std::vector<double>& grid) {
    fs::create_directories(out_dir);
    IncompleteMarker marker(out_dir);
    StageSplit split = load_stages(cfg);

    struct Arm {
        std::string label;
        ExperimentConfig cfg;
        Strategy strategy = Strategy::SaCaisr;
    };
    std::vector<Arm> arms;
    if (axis == "components") {
        // 2x2 grid over the screening mask and the consistency term; with
        // both removed the arm reduces to plain fine-tuning
        for (bool fisher : {false, true})
            for (bool infonce : {false, true}) {
                Arm arm;
                arm.label = std::string(fisher ? "fisher" : "-") + "+" + (infonce ? "infonce" : "-");
                arm.cfg = cfg;
                arm.cfg.train.screening_enabled = fisher;
                if (!fisher && !infonce) {
                    arm.strategy = Strategy::Finetune;
                } else {
                    arm.cfg.train.consistency =
                        infonce ? TrainConfig::Consistency::InfoNce : TrainConfig::Consistency::Kl;
                }
                arms.push_back(std::move(arm));
            }
    } else if (axis == "fisher-update") {
        for (const auto& [label, mode, beta] :
             std::vector<std::tuple<std::string, FisherConfig::Mode, double>>{
                 {"static", FisherConfig::Mode::PerStage, cfg.screening.ema_beta},
                 {"batch", FisherConfig::Mode::PerBatch, 0.0},
                 {"batch+smooth", FisherConfig::Mode::PerBatch, cfg.screening.ema_beta}}) {
            Arm arm;
            arm.label = label;
            arm.cfg = cfg;
            arm.cfg.screening.mode = mode;
            arm.cfg.screening.ema_beta = beta;
            arms.push_back(std::move(arm));
        }
    } else if (axis == "topk") {
        std::vector<double> ks = grid.empty() ? std::vector<double>{1, 4, 16} : grid;
        for (double k : ks) {
            Arm arm;
            arm.label = "k=" + std::to_string(static_cast<i64>(k));
            arm.cfg = cfg;
            arm.cfg.contrastive.top_k = static_cast<i64>(k);
            arms.push_back(std::move(arm));
        }
    } else if (axis == "alpha") {
        std::vector<double> alphas = grid.empty() ? std::vector<double>{0.0, 0.5, 1.0, 2.0, 4.0} : grid;
        for (double a : alphas) {
            Arm arm;
            char label[32];
            std::snprintf(label, sizeof(label), "alpha=%g", a);
            arm.label = label;
            arm.cfg = cfg;
            arm.cfg.train.alpha = a;
            arms.push_back(std::move(arm));
        }
    } else {
        DF_CHECK(false, "ablate: unknown axis '"
                            << axis << "' (expected components, fisher-update, topk or alpha)");
    }

    std::string csv = "arm," + metrics_csv_header(false) + "\n";
    for (const auto& arm : arms) {
        std::cout << "[driftforge] ablation arm " << arm.label << "\n";
        ExperimentOutcome outcome = run_one(split, arm.cfg, arm.strategy);
        const auto& final_stage = outcome.stages.back();
        csv += arm.label + "," + metrics_csv_row(final_stage.test) + "\n";
    }
    const std::string path = (fs::path(out_dir) / ("ablation_" + axis + ".csv")).string();
    write_text(path, csv);
    std::cout << csv;
    marker.finish();
}

MetricsReport cmd_eval(const ExperimentConfig& cfg, const std::string& out_dir, const std::string& checkpoint_path,
                       int test_stage) {
    StageSplit split = load_stages(cfg);
    DF_CHECK(test_stage >= 0 && test_stage < static_cast<int>(split.stages.size()),
             "eval: stage " << test_stage << " out of range");
    auto [params, model_cfg] = ParamSet::load(checkpoint_path);
    const i64 known_items = model_cfg.vocab_size - 1;
    auto test = filter_test(build_samples(split.stages[static_cast<size_t>(test_stage)].sessions,
                                          model_cfg.max_seq_len),
                            known_items);
    DF_CHECK(!test.empty(), "eval: no test cases survive vocabulary filtering");
    MetricsReport rep = evaluate_stage(params, model_cfg, test, cfg.eval, test_stage);
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "eval.csv", metrics_csv_header(false) + "\n" + metrics_csv_row(rep) + "\n");
    std::cout << metrics_csv_header(false) << "\n" << metrics_csv_row(rep) << "\n";
    return rep;
}

}  // namespace driftforge
