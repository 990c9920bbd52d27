// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "driftforge/model.hpp"

namespace driftforge {

struct AdamConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-8;
    void validate() const;
};

// Standard bias-corrected Adam over a ParamSet. Moments are kept per
// parameter tensor in ParamSet order.
class AdamState {
public:
    explicit AdamState(const ParamSet& like);

    void grow_to(const ParamSet& like);  // zero-filled moments for new rows
    void step(ParamSet& params, const std::vector<Tensor>& grads, const AdamConfig& cfg);
    i64 steps() const { return t_; }

private:
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    i64 t_ = 0;
};

}  // namespace driftforge
