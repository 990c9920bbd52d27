// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "driftforge/model.hpp"
#include "driftforge/serialize.hpp"

namespace driftforge {

struct FisherConfig {
    double ema_beta = 0.9;     // smoothing coefficient of the per-batch EMA
    double decay_gamma = 0.9;  // end-of-epoch decay factor
    double p_max = 0.3;        // maximum masking probability
    double epsilon = 1e-8;     // normalization stabilizer
    bool persist_across_stages = false;
    // PerBatch re-estimates conflict every batch (EMA); PerStage freezes a
    // single estimate taken before training starts.
    enum class Mode { PerBatch, PerStage } mode = Mode::PerBatch;
    void validate() const;
};

// One sampled mask: per parameter tensor the drop probabilities it was
// drawn from and the keep/drop outcome per element.
struct MaskSample {
    NamedTensors probabilities;
    std::vector<std::pair<std::string, std::vector<unsigned char>>> keep;
    u64 rng_draws = 0;
};

// F <- beta * F + (1 - beta) * g^2, element-wise.
void ema_update(Tensor& fisher, const Tensor& grad, double beta);

// Per-tensor normalized scaling: p_i = (F_i - min F) / (max F - min F + eps) * p_max.
// A constant tensor gets p identically 0.
Tensor mask_probabilities_for(const Tensor& fisher, double p_max, double epsilon);

// Dropout-style masking of one tensor: element i becomes 0 with
// probability p_i, else w_i / (1 - p_i). Fills `keep` with the per-element
// outcome when non-null.
Tensor mask_tensor(const Tensor& weights, const Tensor& p, Rng& rng, std::vector<unsigned char>* keep);

// Accumulated per-parameter conflict scores over the frozen reference
// model, with dropout-style masking. Masking is copy-on-apply: the
// reference ParamSet handed in is never modified, so restore is exact by
// construction (and enforced as a protocol: restore without a prior apply
// is an error).
class ConflictScreener {
public:
    ConflictScreener(const ParamSet& like, FisherConfig cfg);

    void reset(const ParamSet& like);    // zero scores, adopt shapes
    void grow_to(const ParamSet& like);  // keep scores, zero-fill new rows

    void accumulate(const NamedTensors& grads);
    // Replaces the accumulated scores outright (static per-stage mode).
    void set_scores(NamedTensors scores);
    NamedTensors mask_probabilities() const;
    std::pair<ParamSet, MaskSample> apply_mask(const ParamSet& reference, Rng& rng);
    void restore();
    void decay();

    bool mask_active() const { return mask_active_; }
    const NamedTensors& fisher() const { return fisher_; }
    const FisherConfig& config() const { return cfg_; }

    void save(const std::string& path) const;
    void load(const std::string& path);

private:
    FisherConfig cfg_;
    NamedTensors fisher_;
    bool mask_active_ = false;
};

}  // namespace driftforge
