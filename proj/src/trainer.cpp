// SPDX-License-Identifier: Apache-2.0
#include "driftforge/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "driftforge/resources.hpp"

namespace driftforge {

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::SaCaisr: return "sa-caisr";
        case Strategy::Scratch: return "scratch";
        case Strategy::Finetune: return "finetune";
        case Strategy::Retrain: return "retrain";
        case Strategy::Ewc: return "ewc";
    }
    return "unknown";
}

Strategy strategy_from_string(const std::string& name) {
    for (Strategy s : all_strategies())
        if (to_string(s) == name) return s;
    DF_CHECK(false, "unknown strategy '" << name << "'");
    throw std::runtime_error("unreachable");
}

std::vector<Strategy> all_strategies() {
    return {Strategy::Scratch, Strategy::Finetune, Strategy::Retrain, Strategy::Ewc, Strategy::SaCaisr};
}

void TrainConfig::validate() const {
    DF_CHECK(alpha >= 0.0, "train: alpha must be >= 0");
    DF_CHECK(batch_size >= 1, "train: batch_size must be >= 1");
    DF_CHECK(max_epochs >= 1, "train: max_epochs must be >= 1");
    DF_CHECK(patience >= 1, "train: patience must be >= 1");
    DF_CHECK(ewc_lambda >= 0.0, "train: ewc_lambda must be >= 0");
    adam.validate();
}

namespace {

std::vector<i64> shuffled_indices(i64 n, Rng& rng) {
    std::vector<i64> order(static_cast<size_t>(n));
    for (i64 i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    for (i64 i = n - 1; i > 0; --i) {
        const i64 j = rng.uniform_int(i + 1);
        std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    return order;
}

double validation_recall20(const ParamSet& params, const ModelConfig& cfg, const std::vector<Sample>& valid) {
    if (valid.empty()) return 0.0;
    EvalOptions opts;
    return evaluate_stage(params, cfg, valid, opts).recall20;
}

struct BatchView {
    std::vector<Sample> samples;
    std::vector<i64> targets;
};

BatchView gather_batch(const std::vector<Sample>& all, const std::vector<i64>& order, i64 begin, i64 end) {
    BatchView view;
    view.samples.reserve(static_cast<size_t>(end - begin));
    for (i64 i = begin; i < end; ++i) {
        view.samples.push_back(all[static_cast<size_t>(order[static_cast<size_t>(i)])]);
        view.targets.push_back(view.samples.back().target);
    }
    return view;
}

}  // namespace

NamedTensors estimate_sq_grad_diagonal(const ParamSet& params, const ModelConfig& cfg,
                                       const std::vector<Sample>& samples, i64 batch_size) {
    NamedTensors fisher;
    for (const auto& [name, t] : params.entries()) fisher.emplace_back(name, Tensor(t.shape()));
    if (samples.empty()) return fisher;
    i64 n_batches = 0;
    for (size_t begin = 0; begin < samples.size(); begin += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(samples.size(), begin + static_cast<size_t>(batch_size));
        std::vector<Sample> chunk(samples.begin() + static_cast<std::ptrdiff_t>(begin),
                                  samples.begin() + static_cast<std::ptrdiff_t>(end));
        PaddedBatch batch = pad_batch(chunk);
        std::vector<i64> targets;
        for (const auto& s : chunk) targets.push_back(s.target);
        Tape tape;
        auto bound = model_forward(tape, params, cfg, batch, false, true, nullptr);
        auto loss = ce_loss(tape, score_items(tape, bound.h_last, bound.param_ids[0]), targets);
        auto grads = tape.gradients(loss, bound.param_ids);
        for (size_t i = 0; i < fisher.size(); ++i) {
            Tensor& f = fisher[i].second;
            const Tensor& g = grads[i];
            for (i64 j = 0; j < f.numel(); ++j) f.at(j) += g.at(j) * g.at(j);
        }
        ++n_batches;
    }
    for (auto& [name, f] : fisher)
        for (i64 j = 0; j < f.numel(); ++j) f.at(j) /= static_cast<double>(n_batches);
    return fisher;
}

StageResult train_stage(const ParamSet& init_params, const ParamSet* reference, const StageInputs& stage,
                        const ModelConfig& cfg, const TrainConfig& tcfg, const FisherConfig& fcfg,
                        const ContrastiveConfig& ccfg, ConflictScreener* screener, const EwcContext* ewc,
                        const TrainHooks& hooks) {
    cfg.validate();
    tcfg.validate();
    fcfg.validate();
    DF_CHECK(!stage.train.empty(), "train_stage: stage " << stage.stage_index << " has no training batch");

    const bool sa = tcfg.strategy == Strategy::SaCaisr && reference != nullptr;
    const bool use_screening = sa && tcfg.screening_enabled;
    const bool use_consistency = sa && tcfg.consistency != TrainConfig::Consistency::None && tcfg.alpha != 0.0;
    const bool use_ewc = tcfg.strategy == Strategy::Ewc && ewc != nullptr && tcfg.ewc_lambda != 0.0;
    DF_CHECK(!use_screening || screener != nullptr, "train_stage: screening requires a ConflictScreener");

    ResourceTracker tracker;
    StageResult result;
    result.stage = stage.stage_index;
    result.model_cfg = cfg;
    result.best_params = init_params;

    ParamSet params = init_params;
    AdamState adam(params);
    const u64 stage_tag = static_cast<u64>(stage.stage_index);
    Rng shuffle_rng = Rng(tcfg.seed).derive(seed_tag::kShuffle + stage_tag);
    Rng dropout_rng = Rng(tcfg.seed).derive(seed_tag::kDropout + stage_tag);
    Rng mask_rng = Rng(tcfg.seed).derive(seed_tag::kMask + stage_tag);

    // static per-stage conflict estimate: one running-mean pass before
    // training, probabilities then stay fixed for the whole stage
    if (use_screening && fcfg.mode == FisherConfig::Mode::PerStage) {
        screener->reset(*reference);
        screener->set_scores(estimate_sq_grad_diagonal(*reference, cfg, stage.train, tcfg.batch_size));
    }

    double best_recall = -1.0;
    i64 global_batch = 0;
    const i64 n_train = static_cast<i64>(stage.train.size());
    for (i64 epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
        auto order = shuffled_indices(n_train, shuffle_rng);
        double epoch_ce = 0.0, epoch_nce = 0.0;
        i64 n_batches = 0;
        for (i64 begin = 0; begin < n_train; begin += tcfg.batch_size) {
            const i64 end = std::min(n_train, begin + tcfg.batch_size);
            BatchView view = gather_batch(stage.train, order, begin, end);
            try {
                PaddedBatch batch = pad_batch(view.samples);
                Tape tape;
                auto bound = model_forward(tape, params, cfg, batch, true, true, &dropout_rng);
                Tape::Id logits = score_items(tape, bound.h_last, bound.param_ids[0]);
                Tape::Id loss = ce_loss(tape, logits, view.targets);
                const double ce_value = tape.val(loss).at(0);
                double nce_value = 0.0;
                std::optional<BoundModel> anchor_bound;

                if (sa) {
                    // (b) conflict update: gradients through the frozen
                    // reference on the current batch
                    if (use_screening && fcfg.mode == FisherConfig::Mode::PerBatch) {
                        Tape ref_tape;
                        auto ref_bound = model_forward(ref_tape, *reference, cfg, batch, false, true, nullptr);
                        auto ref_loss =
                            ce_loss(ref_tape, score_items(ref_tape, ref_bound.h_last, ref_bound.param_ids[0]),
                                    view.targets);
                        auto ref_grads = ref_tape.gradients(ref_loss, ref_bound.param_ids);
                        NamedTensors named;
                        for (i64 i = 0; i < reference->size(); ++i)
                            named.emplace_back(reference->name(i), std::move(ref_grads[static_cast<size_t>(i)]));
                        screener->accumulate(named);
                    }
                    // (c)+(d) masked reference, consistency, restore
                    if (use_consistency) {
                        const ParamSet* positive_params = reference;
                        std::optional<std::pair<ParamSet, MaskSample>> masked;
                        if (use_screening) {
                            masked = screener->apply_mask(*reference, mask_rng);
                            positive_params = &masked->first;
                        }
                        Tape pos_tape;
                        auto pos_bound = model_forward(pos_tape, *positive_params, cfg, batch, false, false, nullptr);
                        Tape::Id consistency = -1;
                        if (tcfg.consistency == TrainConfig::Consistency::InfoNce) {
                            Tape::Id anchors = bound.h_last;
                            if (!tcfg.shared_forward) {
                                anchor_bound = model_forward(tape, params, cfg, batch, true, true, &dropout_rng);
                                anchors = anchor_bound->h_last;
                            }
                            consistency = infonce_topk(tape, anchors, pos_tape.val(pos_bound.h_last), ccfg);
                        } else {
                            auto ref_logits =
                                score_items(pos_tape, pos_bound.h_last, pos_bound.param_ids[0]);
                            consistency = kl_consistency(tape, logits, pos_tape.val(ref_logits));
                        }
                        if (use_screening) screener->restore();
                        nce_value = tape.val(consistency).at(0);
                        loss = tape.add(loss, tape.scale(consistency, tcfg.alpha));
                    } else if (use_screening) {
                        // keep the masking protocol exercised even when the
                        // consistency term is off (alpha = 0 ablations)
                        auto masked = screener->apply_mask(*reference, mask_rng);
                        screener->restore();
                    }
                }

                if (use_ewc) {
                    Tape::Id penalty = -1;
                    for (i64 i = 0; i < params.size(); ++i) {
                        Tape::Id anchor = tape.constant(ewc->anchor.tensor(i));
                        Tape::Id weight = tape.constant(ewc->fisher[static_cast<size_t>(i)].second);
                        Tape::Id diff = tape.sub(bound.param_ids[static_cast<size_t>(i)], anchor);
                        Tape::Id term = tape.sum(tape.mul(weight, tape.mul(diff, diff)));
                        penalty = penalty < 0 ? term : tape.add(penalty, term);
                    }
                    loss = tape.add(loss, tape.scale(penalty, 0.5 * tcfg.ewc_lambda));
                }

                std::vector<Tape::Id> wrt = bound.param_ids;
                if (anchor_bound)
                    wrt.insert(wrt.end(), anchor_bound->param_ids.begin(), anchor_bound->param_ids.end());
                auto grads = tape.gradients(loss, wrt);
                if (anchor_bound) {
                    // the separate anchor pass binds its own leaves; fold
                    // its gradient contributions back in
                    const size_t n = bound.param_ids.size();
                    for (size_t i = 0; i < n; ++i)
                        for (i64 j = 0; j < grads[i].numel(); ++j) grads[i].at(j) += grads[n + i].at(j);
                    grads.resize(n);
                }
                adam.step(params, grads, tcfg.adam);
                epoch_ce += ce_value;
                epoch_nce += nce_value;
                ++n_batches;
                ++global_batch;
                if (hooks.after_batch) hooks.after_batch(reference, global_batch);
            } catch (const std::exception& e) {
                DF_CHECK(false, "train_stage: stage " << stage.stage_index << " epoch " << epoch << " batch "
                                                      << n_batches << ": " << e.what());
            }
        }
        // (f) end of epoch: conflict decay, validation, early stopping
        if (use_screening && fcfg.mode == FisherConfig::Mode::PerBatch) screener->decay();
        const double recall = validation_recall20(params, cfg, stage.valid);
        result.val_recall_trajectory.push_back(recall);
        EpochLog log;
        log.stage = stage.stage_index;
        log.epoch = epoch;
        log.ce = epoch_ce / static_cast<double>(n_batches);
        log.infonce = epoch_nce / static_cast<double>(n_batches);
        log.total = log.ce + tcfg.alpha * log.infonce;
        log.val_recall20 = recall;
        log.seconds = tracker.sample().wall_seconds;
        result.logs.push_back(log);
        result.epochs_run = epoch;
        if (recall > best_recall) {
            best_recall = recall;
            result.best_epoch = epoch;
            result.best_params = params;
        }
        if (epoch - result.best_epoch >= tcfg.patience) break;
    }
    const ResourceSample sample = tracker.sample();
    result.wall_seconds = sample.wall_seconds;
    result.peak_rss_bytes = sample.peak_rss_bytes;
    return result;
}

ExperimentOutcome run_experiment(const StageSplit& split, const ModelConfig& base_cfg, const TrainConfig& tcfg,
                                 const FisherConfig& fcfg, const ContrastiveConfig& ccfg, const EvalOptions& eopts,
                                 const TrainHooks& hooks) {
    DF_CHECK(split.stages.size() >= 2, "run_experiment: needs at least two stages (the last is the test target)");
    tcfg.validate();
    ExperimentOutcome outcome;
    outcome.strategy = tcfg.strategy;

    const size_t n_trained = split.stages.size() - 1;
    std::optional<ParamSet> prev_params;
    std::optional<EwcContext> ewc_ctx;
    std::optional<ConflictScreener> screener;

    // per-stage train/valid splits are shared across strategies
    std::vector<TrainValid> splits;
    for (const auto& st : split.stages)
        splits.push_back(split_train_valid(st.sessions, base_cfg.max_seq_len,
                                           Rng(tcfg.seed).derive(seed_tag::kSplit + static_cast<u64>(st.stage_index))
                                               .next_u64()));

    for (size_t m = 0; m < n_trained; ++m) {
        const StageData& st = split.stages[m];
        ModelConfig cfg = base_cfg;
        cfg.vocab_size = st.vocab_items + 1;

        StageInputs inputs;
        inputs.stage_index = st.stage_index;
        inputs.vocab_items = st.vocab_items;
        if (tcfg.strategy == Strategy::Retrain) {
            for (size_t j = 0; j <= m; ++j) {
                inputs.train.insert(inputs.train.end(), splits[j].train.begin(), splits[j].train.end());
                inputs.valid.insert(inputs.valid.end(), splits[j].valid.begin(), splits[j].valid.end());
            }
        } else {
            inputs.train = splits[m].train;
            inputs.valid = splits[m].valid;
        }

        // strategy-specific initialization
        ParamSet init = [&]() {
            const bool fresh = tcfg.strategy == Strategy::Scratch || tcfg.strategy == Strategy::Retrain ||
                               m == 0 || !prev_params.has_value();
            if (fresh) {
                Rng init_rng = Rng(tcfg.seed).derive(seed_tag::kInit + static_cast<u64>(m));
                return ParamSet::init(cfg, init_rng);
            }
            ParamSet grown = *prev_params;
            Rng grow_rng = Rng(tcfg.seed).derive(seed_tag::kGrow + static_cast<u64>(m));
            grown.grow_vocab(cfg.vocab_size, grow_rng);
            return grown;
        }();

        const bool incremental = m > 0 && tcfg.strategy == Strategy::SaCaisr;
        std::optional<ParamSet> reference;
        if (incremental) {
            reference = init;  // frozen copy of the previous-stage model
            if (!screener.has_value()) {
                screener.emplace(*reference, fcfg);
            } else if (fcfg.persist_across_stages) {
                screener->grow_to(*reference);
            } else {
                screener->reset(*reference);
            }
        }

        std::optional<EwcContext> ewc_grown;
        const EwcContext* ewc = nullptr;
        if (tcfg.strategy == Strategy::Ewc && m > 0 && ewc_ctx.has_value()) {
            // new vocabulary rows carry zero importance, so their anchor
            // values are irrelevant; grow both with zeros
            ewc_grown = *ewc_ctx;
            Tensor& emb = ewc_grown->anchor.at("item_emb");
            if (emb.dim(0) < cfg.vocab_size) {
                Tensor grown({cfg.vocab_size, emb.dim(1)});
                std::copy(emb.data(), emb.data() + emb.numel(), grown.data());
                emb = std::move(grown);
                Tensor& f = ewc_grown->fisher[0].second;
                DF_CHECK(ewc_grown->fisher[0].first == "item_emb", "ewc: unexpected parameter order");
                Tensor fg({cfg.vocab_size, f.dim(1)});
                std::copy(f.data(), f.data() + f.numel(), fg.data());
                f = std::move(fg);
            }
            ewc = &*ewc_grown;
        }

        StageResult result = train_stage(init, incremental ? &*reference : nullptr, inputs, cfg, tcfg, fcfg, ccfg,
                                         screener.has_value() ? &*screener : nullptr, ewc, hooks);

        StageOutcome so;
        so.result = std::move(result);

        // test on the complete next stage, filtered to the known vocabulary
        const StageData& next = split.stages[m + 1];
        auto test = filter_test(build_samples(next.sessions, base_cfg.max_seq_len), st.vocab_items);
        DF_CHECK(!test.empty(), "run_experiment: stage " << next.stage_index
                                                         << " test set is empty after vocabulary filtering");
        so.test = evaluate_stage(so.result.best_params, cfg, test, eopts, st.stage_index);

        if (tcfg.strategy == Strategy::Ewc) {
            EwcContext ctx;
            ctx.anchor = so.result.best_params;
            ctx.fisher = estimate_sq_grad_diagonal(so.result.best_params, cfg, inputs.train, tcfg.batch_size);
            ewc_ctx = std::move(ctx);
        }
        if (incremental && screener.has_value()) so.fisher_scores = screener->fisher();
        prev_params = so.result.best_params;
        outcome.stages.push_back(std::move(so));
    }
    return outcome;
}

}  // namespace driftforge
