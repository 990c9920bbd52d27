// SPDX-License-Identifier: Apache-2.0
#include "driftforge/adam.hpp"

#include <algorithm>
#include <cmath>

namespace driftforge {

void AdamConfig::validate() const {
    DF_CHECK(lr > 0.0, "adam: lr must be positive");
    DF_CHECK(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "adam: betas must be in [0,1)");
    DF_CHECK(eps > 0.0, "adam: eps must be positive");
}

AdamState::AdamState(const ParamSet& like) {
    for (const auto& [name, t] : like.entries()) {
        m_.emplace_back(t.shape());
        v_.emplace_back(t.shape());
    }
}

void AdamState::grow_to(const ParamSet& like) {
    DF_CHECK(m_.size() == like.entries().size(), "adam grow: parameter count changed");
    for (size_t i = 0; i < m_.size(); ++i) {
        const Tensor& want = like.entries()[i].second;
        if (m_[i].same_shape(want)) continue;
        DF_CHECK(want.rank() == 2 && m_[i].rank() == 2 && want.dim(0) >= m_[i].dim(0) && want.dim(1) == m_[i].dim(1),
                 "adam grow: incompatible reshape");
        Tensor gm(want.shape()), gv(want.shape());
        std::copy(m_[i].data(), m_[i].data() + m_[i].numel(), gm.data());
        std::copy(v_[i].data(), v_[i].data() + v_[i].numel(), gv.data());
        m_[i] = std::move(gm);
        v_[i] = std::move(gv);
    }
}

void AdamState::step(ParamSet& params, const std::vector<Tensor>& grads, const AdamConfig& cfg) {
    cfg.validate();
    DF_CHECK(static_cast<i64>(grads.size()) == params.size(), "adam: gradient count mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
    for (i64 i = 0; i < params.size(); ++i) {
        Tensor& theta = params.tensor(i);
        const Tensor& g = grads[static_cast<size_t>(i)];
        DF_CHECK(theta.same_shape(g), "adam: shape mismatch for " << params.name(i));
        Tensor& m = m_[static_cast<size_t>(i)];
        Tensor& v = v_[static_cast<size_t>(i)];
        for (i64 j = 0; j < theta.numel(); ++j) {
            const double gj = g.at(j);
            m.at(j) = cfg.beta1 * m.at(j) + (1.0 - cfg.beta1) * gj;
            v.at(j) = cfg.beta2 * v.at(j) + (1.0 - cfg.beta2) * gj * gj;
            const double mhat = m.at(j) / bc1;
            const double vhat = v.at(j) / bc2;
            theta.at(j) -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

}  // namespace driftforge
