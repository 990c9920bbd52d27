// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "driftforge/model.hpp"

namespace driftforge {

struct MetricsReport {
    int stage = -1;
    i64 n_cases = 0;
    double mrr10 = 0, recall10 = 0, ndcg10 = 0;
    double mrr20 = 0, recall20 = 0, ndcg20 = 0;
};

// 1 + number of non-excluded items ranked ahead of the target: strictly
// greater logits count, and equal logits at a lower item index count
// (pessimistic, deterministic tie handling). target_col is 0-based.
i64 rank_of_target(std::span<const double> logits, i64 target_col, const std::vector<unsigned char>* excluded);

struct CaseMetrics {
    double recall = 0, mrr = 0, ndcg = 0;
};

// recall = [r <= K]; mrr = 1/r if r <= K else 0; ndcg = 1/log2(r+1) if
// r <= K else 0 (ideal DCG is 1 for a single ground-truth item).
CaseMetrics metrics_at_k(i64 rank, i64 k);

struct EvalOptions {
    i64 batch_size = 256;
    // exclude items already in the prefix from the candidate ranking
    // (the target itself is never excluded)
    bool exclude_seen = false;
};

// Full-ranking Recall/MRR/NDCG@{10,20} as unweighted means over test
// cases. Test samples must already have passed filter_test.
MetricsReport evaluate_stage(const ParamSet& params, const ModelConfig& cfg, const std::vector<Sample>& test_samples,
                             const EvalOptions& opts, int stage_index = -1);

// CSV with Table-2 column order (MRR@10, Recall@10, NDCG@10, MRR@20,
// Recall@20, NDCG@20).
std::string metrics_csv_header(bool with_strategy);
std::string metrics_csv_row(const MetricsReport& r, const std::string& strategy = "");

}  // namespace driftforge
