// SPDX-License-Identifier: Apache-2.0
#include "driftforge/metrics.hpp"

#include <cmath>
#include <cstdio>

namespace driftforge {

i64 rank_of_target(std::span<const double> logits, i64 target_col, const std::vector<unsigned char>* excluded) {
    const i64 n = static_cast<i64>(logits.size());
    DF_CHECK(target_col >= 0 && target_col < n, "rank_of_target: target column out of range");
    DF_CHECK(!excluded || static_cast<i64>(excluded->size()) == n, "rank_of_target: exclusion mask size mismatch");
    DF_CHECK(!excluded || !(*excluded)[static_cast<size_t>(target_col)], "rank_of_target: target is excluded");
    const double zt = logits[static_cast<size_t>(target_col)];
    i64 ahead = 0;
    for (i64 j = 0; j < n; ++j) {
        if (j == target_col) continue;
        if (excluded && (*excluded)[static_cast<size_t>(j)]) continue;
        const double zj = logits[static_cast<size_t>(j)];
        if (zj > zt || (zj == zt && j < target_col)) ++ahead;
    }
    return 1 + ahead;
}

CaseMetrics metrics_at_k(i64 rank, i64 k) {
    DF_CHECK(rank >= 1 && k >= 1, "metrics_at_k: rank and K must be >= 1");
    CaseMetrics out;
    if (rank <= k) {
        out.recall = 1.0;
        out.mrr = 1.0 / static_cast<double>(rank);
        out.ndcg = 1.0 / std::log2(static_cast<double>(rank) + 1.0);
    }
    return out;
}

MetricsReport evaluate_stage(const ParamSet& params, const ModelConfig& cfg, const std::vector<Sample>& test_samples,
                             const EvalOptions& opts, int stage_index) {
    DF_CHECK(!test_samples.empty(), "evaluate_stage: zero test cases");
    DF_CHECK(opts.batch_size >= 1, "evaluate_stage: batch_size must be >= 1");
    MetricsReport rep;
    rep.stage = stage_index;
    const i64 items = cfg.vocab_size - 1;
    for (size_t begin = 0; begin < test_samples.size(); begin += static_cast<size_t>(opts.batch_size)) {
        const size_t end = std::min(test_samples.size(), begin + static_cast<size_t>(opts.batch_size));
        std::span<const Sample> chunk(test_samples.data() + begin, end - begin);
        PaddedBatch batch = pad_batch(chunk);
        Tape tape;
        auto bound = model_forward(tape, params, cfg, batch, false, false, nullptr);
        auto logits = score_items(tape, bound.h_last, bound.param_ids[0]);
        const Tensor& z = tape.val(logits);
        for (size_t b = 0; b < chunk.size(); ++b) {
            const Sample& smp = chunk[b];
            std::vector<unsigned char> excluded;
            if (opts.exclude_seen) {
                excluded.assign(static_cast<size_t>(items), 0);
                for (i64 it : smp.prefix)
                    if (it != smp.target) excluded[static_cast<size_t>(it - 1)] = 1;
            }
            const i64 r = rank_of_target(std::span<const double>(z.data() + static_cast<i64>(b) * items,
                                                                 static_cast<size_t>(items)),
                                         smp.target - 1, opts.exclude_seen ? &excluded : nullptr);
            const CaseMetrics m10 = metrics_at_k(r, 10);
            const CaseMetrics m20 = metrics_at_k(r, 20);
            rep.recall10 += m10.recall;
            rep.mrr10 += m10.mrr;
            rep.ndcg10 += m10.ndcg;
            rep.recall20 += m20.recall;
            rep.mrr20 += m20.mrr;
            rep.ndcg20 += m20.ndcg;
            ++rep.n_cases;
        }
    }
    const double n = static_cast<double>(rep.n_cases);
    rep.recall10 /= n;
    rep.mrr10 /= n;
    rep.ndcg10 /= n;
    rep.recall20 /= n;
    rep.mrr20 /= n;
    rep.ndcg20 /= n;
    return rep;
}

std::string metrics_csv_header(bool with_strategy) {
    std::string head = with_strategy ? "strategy,stage,n_cases" : "stage,n_cases";
    return head + ",mrr@10,recall@10,ndcg@10,mrr@20,recall@20,ndcg@20";
}

std::string metrics_csv_row(const MetricsReport& r, const std::string& strategy) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%d,%lld,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", r.stage,
                  static_cast<long long>(r.n_cases), r.mrr10, r.recall10, r.ndcg10, r.mrr20, r.recall20, r.ndcg20);
    std::string row(buf);
    if (!strategy.empty()) row = strategy + "," + row;
    return row;
}

}  // namespace driftforge
