// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "driftforge/resources.hpp"
#include "driftforge/synthetic.hpp"
#include "driftforge/trainer.hpp"

using namespace driftforge;

namespace {

ModelConfig test_model() {
    ModelConfig cfg;
    cfg.hidden_dim = 16;
    cfg.n_blocks = 1;
    cfg.n_heads = 1;
    cfg.max_seq_len = 8;
    cfg.dropout_rate = 0.1;
    return cfg;
}

StageSplit drifting_split(u64 seed, int n_stages = 3, int sessions = 60) {
    DriftScenario sc;
    sc.n_categories = 8;
    sc.items_per_category = 25;
    sc.sessions_per_stage = sessions;
    sc.min_session_len = 3;
    sc.max_session_len = 6;
    sc.seed = seed;
    for (int m = 0; m < n_stages; ++m) {
        std::vector<double> pop(8, 0.0);
        // popularity rotates slowly across stages
        for (int c = 0; c < 8; ++c) pop[static_cast<size_t>(c)] = (c == m % 8) ? 0.3 : 0.1;
        sc.stage_popularity.push_back(pop);
    }
    auto events = generate_drift(sc);
    StagePlan plan;
    plan.mode = StagePlan::Mode::FixedWindow;
    plan.window_seconds = sc.stage_gap_seconds;
    plan.k_core = 2;
    plan.max_seq_len = 8;
    return split_stages(events, plan);
}

TrainConfig fast_train(Strategy s, u64 seed) {
    TrainConfig t;
    t.strategy = s;
    t.seed = seed;
    t.batch_size = 64;
    t.max_epochs = 3;
    t.patience = 5;
    t.alpha = 0.5;
    t.adam.lr = 2e-3;
    return t;
}

std::string stage_hashes(const ExperimentOutcome& o) {
    std::string s;
    for (const auto& st : o.stages) s += st.result.best_params.sha256(st.result.model_cfg) + "\n";
    return s;
}

}  // namespace

TEST_CASE("alpha=0 sa-caisr is bit-identical to finetune") {
    auto split = drifting_split(5);
    ModelConfig cfg = test_model();
    FisherConfig fcfg;
    ContrastiveConfig ccfg;
    EvalOptions eopts;

    TrainConfig fin = fast_train(Strategy::Finetune, 99);
    TrainConfig sa = fast_train(Strategy::SaCaisr, 99);
    sa.alpha = 0.0;

    auto a = run_experiment(split, cfg, fin, fcfg, ccfg, eopts);
    auto b = run_experiment(split, cfg, sa, fcfg, ccfg, eopts);
    REQUIRE(a.stages.size() == b.stages.size());
    CHECK(stage_hashes(a) == stage_hashes(b));
    for (size_t m = 0; m < a.stages.size(); ++m)
        CHECK(a.stages[m].test.recall20 == b.stages[m].test.recall20);
}

TEST_CASE("ewc with lambda=0 matches finetune under the same seed") {
    auto split = drifting_split(7);
    ModelConfig cfg = test_model();
    TrainConfig fin = fast_train(Strategy::Finetune, 3);
    TrainConfig ewc = fast_train(Strategy::Ewc, 3);
    ewc.ewc_lambda = 0.0;
    auto a = run_experiment(split, cfg, fin, FisherConfig{}, ContrastiveConfig{}, EvalOptions{});
    auto b = run_experiment(split, cfg, ewc, FisherConfig{}, ContrastiveConfig{}, EvalOptions{});
    CHECK(stage_hashes(a) == stage_hashes(b));
}

TEST_CASE("same seed reruns are bit-identical; different seeds differ") {
    auto split = drifting_split(11);
    ModelConfig cfg = test_model();
    TrainConfig t1 = fast_train(Strategy::SaCaisr, 21);
    auto a = run_experiment(split, cfg, t1, FisherConfig{}, ContrastiveConfig{}, EvalOptions{});
    auto b = run_experiment(split, cfg, t1, FisherConfig{}, ContrastiveConfig{}, EvalOptions{});
    CHECK(stage_hashes(a) == stage_hashes(b));
    TrainConfig t2 = fast_train(Strategy::SaCaisr, 22);
    auto c = run_experiment(split, cfg, t2, FisherConfig{}, ContrastiveConfig{}, EvalOptions{});
    CHECK(stage_hashes(a) != stage_hashes(c));
}

TEST_CASE("reference stays frozen through sa-caisr batches") {
    auto split = drifting_split(13);
    ModelConfig cfg = test_model();
    TrainConfig tcfg = fast_train(Strategy::SaCaisr, 31);
    tcfg.max_epochs = 2;

    std::string ref_hash;
    i64 checks = 0;
    TrainHooks hooks;
    hooks.after_batch = [&](const ParamSet* reference, i64) {
        if (!reference) return;
        ModelConfig rc = cfg;
        rc.vocab_size = reference->vocab_size();
        const std::string h = reference->sha256(rc);
        if (ref_hash.empty()) ref_hash = h;
        CHECK(h == ref_hash);
        ++checks;
    };
    run_experiment(split, cfg, tcfg, FisherConfig{}, ContrastiveConfig{}, EvalOptions{}, hooks);
    CHECK(checks > 0);
}

TEST_CASE("loss decomposition holds for every logged epoch") {
    auto split = drifting_split(17);
    ModelConfig cfg = test_model();
    TrainConfig tcfg = fast_train(Strategy::SaCaisr, 41);
    auto out = run_experiment(split, cfg, tcfg, FisherConfig{}, ContrastiveConfig{}, EvalOptions{});
    i64 n_logs = 0;
    for (const auto& st : out.stages)
        for (const auto& log : st.result.logs) {
            CHECK(log.total == log.ce + tcfg.alpha * log.infonce);
            ++n_logs;
        }
    CHECK(n_logs > 0);
}

TEST_CASE("early stopping halts within best_epoch + patience and returns the best checkpoint") {
    auto split = drifting_split(19, 2, 120);
    ModelConfig cfg = test_model();
    TrainConfig tcfg = fast_train(Strategy::Finetune, 51);
    tcfg.max_epochs = 40;
    tcfg.patience = 3;
    auto out = run_experiment(split, cfg, tcfg, FisherConfig{}, ContrastiveConfig{}, EvalOptions{});
    for (const auto& st : out.stages) {
        CHECK(st.result.epochs_run <= st.result.best_epoch + tcfg.patience);
        // returned checkpoint is the best-validation epoch, not the last
        double best = -1;
        i64 best_ep = 0;
        for (size_t e = 0; e < st.result.val_recall_trajectory.size(); ++e)
            if (st.result.val_recall_trajectory[e] > best) {
                best = st.result.val_recall_trajectory[e];
                best_ep = static_cast<i64>(e) + 1;
            }
        CHECK(st.result.best_epoch == best_ep);
    }
}

TEST_CASE("single batch, single epoch equals a hand-stepped Adam oracle") {
    ModelConfig cfg = test_model();
    cfg.dropout_rate = 0.0;
    cfg.vocab_size = 31;
    Rng rng(61);
    ParamSet init = ParamSet::init(cfg, rng);

    StageInputs stage;
    stage.stage_index = 0;
    stage.vocab_items = 30;
    Rng datarng(62);
    for (int i = 0; i < 24; ++i) {
        Sample s;
        const i64 len = 1 + datarng.uniform_int(5);
        for (i64 j = 0; j < len; ++j) s.prefix.push_back(1 + datarng.uniform_int(30));
        s.target = 1 + datarng.uniform_int(30);
        stage.train.push_back(s);
        if (i % 6 == 0) stage.valid.push_back(s);
    }
    TrainConfig tcfg = fast_train(Strategy::Finetune, 63);
    tcfg.max_epochs = 1;
    tcfg.batch_size = 64;  // one batch

    auto result = train_stage(init, nullptr, stage, cfg, tcfg, FisherConfig{}, ContrastiveConfig{}, nullptr, nullptr);

    // oracle: analytic gradients on the same batch, one reference Adam step
    PaddedBatch batch = pad_batch(stage.train);
    std::vector<i64> targets;
    for (const auto& s : stage.train) targets.push_back(s.target);
    Tape tape;
    auto bound = model_forward(tape, init, cfg, batch, true, true, nullptr);
    auto loss = ce_loss(tape, score_items(tape, bound.h_last, bound.param_ids[0]), targets);
    auto grads = tape.gradients(loss, bound.param_ids);
    ParamSet want = init;
    AdamState adam(want);
    adam.step(want, grads, tcfg.adam);

    for (i64 i = 0; i < want.size(); ++i)
        for (i64 j = 0; j < want.tensor(i).numel(); ++j)
            CHECK(std::abs(result.best_params.tensor(i).at(j) - want.tensor(i).at(j)) < 1e-8);
}

TEST_CASE("two near-identical stages beat the random-ranking floor") {
    // identical popularity across stages: the trained model must beat the
    // expected Recall@20 of random ranking, K/|I|
    DriftScenario sc;
    sc.n_categories = 8;
    sc.items_per_category = 25;
    sc.sessions_per_stage = 150;
    sc.min_session_len = 3;
    sc.max_session_len = 6;
    sc.seed = 71;
    sc.stage_popularity = {std::vector<double>(8, 0.125), std::vector<double>(8, 0.125)};
    StagePlan plan;
    plan.mode = StagePlan::Mode::FixedWindow;
    plan.window_seconds = sc.stage_gap_seconds;
    plan.k_core = 2;
    plan.max_seq_len = 8;
    auto split = split_stages(generate_drift(sc), plan);

    ModelConfig cfg = test_model();
    TrainConfig tcfg = fast_train(Strategy::Finetune, 73);
    tcfg.max_epochs = 10;
    auto out = run_experiment(split, cfg, tcfg, FisherConfig{}, ContrastiveConfig{}, EvalOptions{});
    const double floor = 20.0 / static_cast<double>(split.stages.back().vocab_items);
    CHECK(out.stages.back().test.recall20 >= floor);
}

TEST_CASE("resource tracking: wall clock and peak memory") {
    ResourceTracker tracker;
    auto first = tracker.sample();
    CHECK(first.wall_seconds < 0.5);
    CHECK(first.peak_rss_bytes > 0);

    {
        // a touched 100 MB buffer must push the high-water mark at least
        // 100 MB past the resident size measured before the allocation
        const i64 rss_before = current_rss_bytes();
        std::vector<char> buffer(100 * 1024 * 1024);
        for (size_t i = 0; i < buffer.size(); i += 4096) buffer[i] = static_cast<char>(i);
        auto after = tracker.sample();
        CHECK(after.peak_rss_bytes >= rss_before + 100 * 1024 * 1024);
        CHECK(after.wall_seconds >= first.wall_seconds);
    }

    // repeatability: two identical samples agree (the mark is monotone)
    auto a = tracker.sample();
    auto b = tracker.sample();
    CHECK(std::abs(static_cast<double>(a.peak_rss_bytes - b.peak_rss_bytes)) <=
          0.1 * static_cast<double>(a.peak_rss_bytes));
}

TEST_CASE("sa-caisr emits resumable conflict scores") {
    auto split = drifting_split(23);
    ModelConfig cfg = test_model();
    TrainConfig tcfg = fast_train(Strategy::SaCaisr, 91);
    auto out = run_experiment(split, cfg, tcfg, FisherConfig{}, ContrastiveConfig{}, EvalOptions{});
    CHECK(out.stages.front().fisher_scores.empty());  // no reference on the base stage
    CHECK(!out.stages.back().fisher_scores.empty());
    for (const auto& [name, f] : out.stages.back().fisher_scores)
        for (i64 i = 0; i < f.numel(); ++i) CHECK(f.at(i) >= 0.0);
}

TEST_CASE("error paths carry stage context") {
    ModelConfig cfg = test_model();
    cfg.vocab_size = 10;
    Rng rng(81);
    ParamSet init = ParamSet::init(cfg, rng);
    StageInputs empty;
    empty.stage_index = 4;
    CHECK_THROWS(train_stage(init, nullptr, empty, cfg, fast_train(Strategy::Finetune, 1), FisherConfig{},
                             ContrastiveConfig{}, nullptr, nullptr));

    // a non-finite parameter is caught and reported with batch context
    init.at("pos_emb").at(0) = std::nan("");
    StageInputs stage;
    stage.stage_index = 2;
    stage.vocab_items = 9;
    Sample s;
    s.prefix = {1, 2};
    s.target = 3;
    stage.train.push_back(s);
    try {
        train_stage(init, nullptr, stage, cfg, fast_train(Strategy::Finetune, 1), FisherConfig{}, ContrastiveConfig{},
                    nullptr, nullptr);
        FAIL("expected error");
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        CHECK(msg.find("stage 2") != std::string::npos);
        CHECK(msg.find("batch") != std::string::npos);
    }
}
