// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "driftforge/tape.hpp"

namespace driftforge {

struct ContrastiveConfig {
    double temperature = 0.2;
    i64 top_k = 16;  // clamped to batch - 1 at use time
    enum class Similarity { Cosine, Dot } similarity = Similarity::Cosine;
    // Alternative reading of the negative set: draw negatives from the
    // positives' representations instead of the other anchors.
    bool negatives_from_positives = false;
    // Optional shared projection applied to both branches before the
    // similarity; empty means identity.
    Tensor projection;
    void validate() const;
};

// The k indices != self_index with the largest similarity; ties broken by
// lower index. k is clamped to row size - 1.
std::vector<i64> select_hard_negatives(std::span<const double> sim_row, i64 self_index, i64 k);

// Top-k hard-negative InfoNCE between tracked anchors and detached
// positives (same inputs through the filtered reference). Gradient flows
// into the anchors only; positives are plain values by construction.
// Returns a constant 0 with a logged warning when the batch has no
// negatives (B < 2).
Tape::Id infonce_topk(Tape& tape, Tape::Id anchors, const Tensor& positives, const ContrastiveConfig& cfg);

// Forward KL(reference || updated) over next-item distributions, mean per
// batch row; the ablation fallback when InfoNCE is disabled.
Tape::Id kl_consistency(Tape& tape, Tape::Id logits_updated, const Tensor& logits_reference);

}  // namespace driftforge
