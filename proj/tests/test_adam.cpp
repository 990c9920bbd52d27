// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "driftforge/adam.hpp"

using namespace driftforge;

namespace {

ModelConfig unit_config() {
    ModelConfig cfg;
    cfg.hidden_dim = 2;
    cfg.n_blocks = 1;
    cfg.n_heads = 1;
    cfg.max_seq_len = 2;
    cfg.dropout_rate = 0.0;
    cfg.vocab_size = 3;
    return cfg;
}

}  // namespace

TEST_CASE("first step with unit gradient moves by about -lr") {
    ModelConfig cfg = unit_config();
    Rng rng(1);
    ParamSet params = ParamSet::init(cfg, rng);
    const double before = params.at("pos_emb").at(0);
    std::vector<Tensor> grads;
    for (i64 i = 0; i < params.size(); ++i) grads.emplace_back(params.tensor(i).shape());
    // unit gradient on one coordinate of pos_emb (index 1 in ParamSet order)
    grads[1].at(0) = 1.0;
    AdamConfig acfg;
    acfg.lr = 0.001;
    AdamState adam(params);
    adam.step(params, grads, acfg);
    const double delta = params.at("pos_emb").at(0) - before;
    // bias correction cancels at t=1: delta = -lr * 1/(1 + eps)
    CHECK(delta == doctest::Approx(-0.001 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("zero gradients leave parameters unchanged forever") {
    ModelConfig cfg = unit_config();
    Rng rng(2);
    ParamSet params = ParamSet::init(cfg, rng);
    ParamSet before = params;
    std::vector<Tensor> grads;
    for (i64 i = 0; i < params.size(); ++i) grads.emplace_back(params.tensor(i).shape());
    AdamState adam(params);
    AdamConfig acfg;
    for (int t = 0; t < 25; ++t) adam.step(params, grads, acfg);
    for (i64 i = 0; i < params.size(); ++i)
        for (i64 j = 0; j < params.tensor(i).numel(); ++j) CHECK(params.tensor(i).at(j) == before.tensor(i).at(j));
}

TEST_CASE("ten steps on a quadratic match a scalar reference to 1e-12") {
    // minimize f(x) = 0.5 * (x - 3)^2 starting from 0, gradient x - 3
    ModelConfig cfg = unit_config();
    Rng rng(3);
    ParamSet params = ParamSet::init(cfg, rng);
    params.at("pos_emb").at(0) = 0.0;
    AdamConfig acfg;
    acfg.lr = 0.1;
    AdamState adam(params);

    // scalar reference implementation
    double x = 0.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 10; ++t) {
        std::vector<Tensor> grads;
        for (i64 i = 0; i < params.size(); ++i) grads.emplace_back(params.tensor(i).shape());
        grads[1].at(0) = params.at("pos_emb").at(0) - 3.0;
        adam.step(params, grads, acfg);

        const double g = x - 3.0;
        m = acfg.beta1 * m + (1 - acfg.beta1) * g;
        v = acfg.beta2 * v + (1 - acfg.beta2) * g * g;
        const double mhat = m / (1 - std::pow(acfg.beta1, t));
        const double vhat = v / (1 - std::pow(acfg.beta2, t));
        x -= acfg.lr * mhat / (std::sqrt(vhat) + acfg.eps);
        CHECK(std::abs(params.at("pos_emb").at(0) - x) < 1e-12);
    }
    CHECK(adam.steps() == 10);
}

TEST_CASE("moments grow with the vocabulary") {
    ModelConfig cfg = unit_config();
    Rng rng(4);
    ParamSet params = ParamSet::init(cfg, rng);
    AdamState adam(params);
    std::vector<Tensor> grads;
    for (i64 i = 0; i < params.size(); ++i) grads.emplace_back(params.tensor(i).shape());
    grads[0].at(cfg.hidden_dim) = 2.0;  // row 1 of item_emb
    AdamConfig acfg;
    adam.step(params, grads, acfg);

    Rng growr(5);
    params.grow_vocab(5, growr);
    adam.grow_to(params);
    std::vector<Tensor> grads2;
    for (i64 i = 0; i < params.size(); ++i) grads2.emplace_back(params.tensor(i).shape());
    adam.step(params, grads2, acfg);  // must not throw on the new shape
    CHECK(params.at("item_emb").dim(0) == 5);
}
