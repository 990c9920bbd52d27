// SPDX-License-Identifier: Apache-2.0
#include "driftforge/fisher.hpp"

#include <algorithm>
#include <cmath>

namespace driftforge {

void FisherConfig::validate() const {
    DF_CHECK(ema_beta >= 0.0 && ema_beta < 1.0, "fisher: ema_beta must be in [0,1)");
    DF_CHECK(decay_gamma > 0.0 && decay_gamma <= 1.0, "fisher: decay_gamma must be in (0,1]");
    DF_CHECK(p_max >= 0.0 && p_max < 1.0, "fisher: p_max must be in [0,1)");
    DF_CHECK(epsilon > 0.0, "fisher: epsilon must be positive");
}

void ema_update(Tensor& fisher, const Tensor& grad, double beta) {
    DF_CHECK(fisher.same_shape(grad),
             "fisher ema: shape mismatch " << fisher.shape_str() << " vs " << grad.shape_str());
    double* f = fisher.data();
    const double* g = grad.data();
    for (i64 i = 0; i < fisher.numel(); ++i) f[i] = beta * f[i] + (1.0 - beta) * g[i] * g[i];
}

Tensor mask_probabilities_for(const Tensor& fisher, double p_max, double epsilon) {
    Tensor p(fisher.shape());
    const double* f = fisher.data();
    double lo = f[0], hi = f[0];
    for (i64 i = 1; i < fisher.numel(); ++i) {
        lo = std::min(lo, f[i]);
        hi = std::max(hi, f[i]);
    }
    const double denom = hi - lo + epsilon;
    for (i64 i = 0; i < fisher.numel(); ++i) p.at(i) = (f[i] - lo) / denom * p_max;
    return p;
}

ConflictScreener::ConflictScreener(const ParamSet& like, FisherConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    reset(like);
}

void ConflictScreener::reset(const ParamSet& like) {
    fisher_.clear();
    for (const auto& [name, t] : like.entries()) fisher_.emplace_back(name, Tensor(t.shape()));
    mask_active_ = false;
}

void ConflictScreener::grow_to(const ParamSet& like) {
    DF_CHECK(fisher_.size() == like.entries().size(), "fisher grow: parameter count changed");
    for (size_t i = 0; i < fisher_.size(); ++i) {
        const Tensor& want = like.entries()[i].second;
        Tensor& have = fisher_[i].second;
        DF_CHECK(fisher_[i].first == like.entries()[i].first, "fisher grow: name mismatch");
        if (have.same_shape(want)) continue;
        DF_CHECK(have.rank() == want.rank() && have.rank() == 2 && want.dim(0) >= have.dim(0) &&
                     want.dim(1) == have.dim(1),
                 "fisher grow: incompatible reshape for " << fisher_[i].first);
        Tensor grown(want.shape());
        std::copy(have.data(), have.data() + have.numel(), grown.data());
        have = std::move(grown);
    }
}

void ConflictScreener::accumulate(const NamedTensors& grads) {
    DF_CHECK(grads.size() == fisher_.size(), "fisher: gradient count " << grads.size() << " does not match "
                                                                       << fisher_.size());
    for (size_t i = 0; i < fisher_.size(); ++i) {
        DF_CHECK(grads[i].first == fisher_[i].first, "fisher: name mismatch at " << i);
        ema_update(fisher_[i].second, grads[i].second, cfg_.ema_beta);
    }
}

void ConflictScreener::set_scores(NamedTensors scores) {
    DF_CHECK(scores.size() == fisher_.size(), "set_scores: parameter count mismatch");
    for (size_t i = 0; i < scores.size(); ++i) {
        DF_CHECK(scores[i].first == fisher_[i].first, "set_scores: name mismatch at " << i);
        DF_CHECK(scores[i].second.same_shape(fisher_[i].second), "set_scores: shape mismatch for " << scores[i].first);
        for (i64 j = 0; j < scores[i].second.numel(); ++j)
            DF_CHECK(scores[i].second.at(j) >= 0.0, "set_scores: negative score in " << scores[i].first);
    }
    fisher_ = std::move(scores);
}

NamedTensors ConflictScreener::mask_probabilities() const {
    NamedTensors out;
    out.reserve(fisher_.size());
    for (const auto& [name, f] : fisher_) out.emplace_back(name, mask_probabilities_for(f, cfg_.p_max, cfg_.epsilon));
    return out;
}

Tensor mask_tensor(const Tensor& weights, const Tensor& p, Rng& rng, std::vector<unsigned char>* keep) {
    DF_CHECK(weights.same_shape(p), "mask_tensor: shape mismatch");
    Tensor out = weights;
    if (keep) keep->assign(static_cast<size_t>(out.numel()), 1);
    for (i64 j = 0; j < out.numel(); ++j) {
        const double pj = p.at(j);
        DF_CHECK(pj < 1.0, "mask_tensor: masking probability reached 1");
        if (rng.uniform() < pj) {
            out.at(j) = 0.0;
            if (keep) (*keep)[static_cast<size_t>(j)] = 0;
        } else {
            out.at(j) /= (1.0 - pj);
        }
    }
    return out;
}

std::pair<ParamSet, MaskSample> ConflictScreener::apply_mask(const ParamSet& reference, Rng& rng) {
    DF_CHECK(!mask_active_, "apply_mask: a mask is already applied");
    DF_CHECK(reference.entries().size() == fisher_.size(), "apply_mask: parameter count mismatch");
    ParamSet masked = reference;
    MaskSample sample;
    sample.probabilities = mask_probabilities();
    const u64 draws_before = rng.draws();
    for (size_t i = 0; i < fisher_.size(); ++i) {
        DF_CHECK(reference.entries()[i].first == fisher_[i].first, "apply_mask: name mismatch at " << i);
        const Tensor& p = sample.probabilities[i].second;
        DF_CHECK(masked.tensor(static_cast<i64>(i)).same_shape(p),
                 "apply_mask: shape mismatch for " << fisher_[i].first);
        std::vector<unsigned char> keep;
        masked.tensor(static_cast<i64>(i)) = mask_tensor(masked.tensor(static_cast<i64>(i)), p, rng, &keep);
        sample.keep.emplace_back(fisher_[i].first, std::move(keep));
    }
    sample.rng_draws = rng.draws() - draws_before;
    mask_active_ = true;
    return {std::move(masked), std::move(sample)};
}

void ConflictScreener::restore() {
    DF_CHECK(mask_active_, "restore: no mask is currently applied");
    mask_active_ = false;
}

void ConflictScreener::decay() {
    for (auto& [name, f] : fisher_) {
        double* d = f.data();
        for (i64 i = 0; i < f.numel(); ++i) d[i] *= cfg_.decay_gamma;
    }
}

void ConflictScreener::save(const std::string& path) const {
    std::map<std::string, double> meta = {{"ema_beta", cfg_.ema_beta},
                                          {"decay_gamma", cfg_.decay_gamma},
                                          {"p_max", cfg_.p_max},
                                          {"epsilon", cfg_.epsilon}};
    write_file(path, encode_records("DRIFTFORGE-FISHER-1", meta, fisher_));
}

void ConflictScreener::load(const std::string& path) {
    auto decoded = decode_records(read_file(path), "DRIFTFORGE-FISHER-1");
    cfg_.ema_beta = decoded.meta.at("ema_beta");
    cfg_.decay_gamma = decoded.meta.at("decay_gamma");
    cfg_.p_max = decoded.meta.at("p_max");
    cfg_.epsilon = decoded.meta.at("epsilon");
    cfg_.validate();
    fisher_ = std::move(decoded.records);
    for (const auto& [name, f] : fisher_)
        for (i64 i = 0; i < f.numel(); ++i)
            DF_CHECK(f.at(i) >= 0.0, "fisher load: negative score in " << name);
    mask_active_ = false;
}

}  // namespace driftforge
