// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "driftforge/tape.hpp"
#include "fd_util.hpp"

using namespace driftforge;

TEST_CASE("matmul value examples") {
    Tape t;
    auto a = t.leaf(Tensor({2, 2}, {1, 0, 0, 1}), false);
    auto b = t.leaf(Tensor({2, 2}, {3, 4, 5, 6}), false);
    auto c = t.matmul(a, b);
    CHECK(t.val(c).view()[0] == 3);
    CHECK(t.val(c).view()[3] == 6);

    auto a1 = t.leaf(Tensor({1, 2}, {1, 2}), false);
    auto b1 = t.leaf(Tensor({2, 1}, {3, 4}), false);
    CHECK(t.val(t.matmul(a1, b1)).at(0) == doctest::Approx(11.0));

    CHECK_THROWS(t.matmul(a1, a1));  // inner dims disagree
}

TEST_CASE("backward of linear and quadratic sums") {
    // loss = sum(W) -> gradient of all ones
    {
        Tape t;
        auto w = t.leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}), true);
        auto loss = t.sum(w);
        Tape::Id wrt[] = {w};
        auto g = t.gradients(loss, wrt);
        for (i64 i = 0; i < 6; ++i) CHECK(g[0].at(i) == 1.0);
    }
    // loss = sum(W * W), W = [2,-3] -> gradient [4,-6]
    {
        Tape t;
        auto w = t.leaf(Tensor({2}, {2, -3}), true);
        auto loss = t.sum(t.mul(w, w));
        Tape::Id wrt[] = {w};
        auto g = t.gradients(loss, wrt);
        CHECK(g[0].at(0) == doctest::Approx(4.0));
        CHECK(g[0].at(1) == doctest::Approx(-6.0));
    }
}

TEST_CASE("untouched parameters get zero gradients") {
    Tape t;
    auto w = t.leaf(Tensor({2}, {1, 1}), true);
    auto unused = t.leaf(Tensor({3}, {5, 5, 5}), true);
    auto loss = t.sum(w);
    Tape::Id wrt[] = {w, unused};
    auto g = t.gradients(loss, wrt);
    CHECK(g[1].numel() == 3);
    for (i64 i = 0; i < 3; ++i) CHECK(g[1].at(i) == 0.0);
}

TEST_CASE("loss must be scalar") {
    Tape t;
    auto w = t.leaf(Tensor({2}, {1, 1}), true);
    Tape::Id wrt[] = {w};
    CHECK_THROWS(t.gradients(w, wrt));
}

namespace {

// A tiny two-layer network over tape primitives, exercising every op used
// by the full model: y = sum(softmax(relu(LN(x W1 + b1)) W2 + b2) * mask).
double tiny_net_loss(Tape& t, const std::vector<Tape::Id>& p, Tape::Id x) {
    auto h1 = t.add_bias(t.matmul(x, p[0]), p[1]);
    auto n1 = t.layer_norm(h1, p[2], p[3]);
    auto a1 = t.relu(n1);
    auto h2 = t.add_bias(t.matmul(a1, p[4]), p[5]);
    auto sm = t.softmax_rows(h2);
    auto picked = t.mul(sm, t.constant(Tensor({2, 4}, {1, 0, 0, 0, 0, 0, 1, 0})));
    return t.val(t.sum(picked)).at(0);
}

}  // namespace

TEST_CASE("tiny two-layer model gradients match central finite differences") {
    Rng rng(123);
    std::vector<Tensor> params;
    params.push_back(Tensor({3, 4}));  // W1
    params.push_back(Tensor({4}));     // b1
    params.push_back(Tensor::full({4}, 1.0));  // ln gain
    params.push_back(Tensor({4}));             // ln shift
    params.push_back(Tensor({4, 4}));          // W2
    params.push_back(Tensor({4}));             // b2
    for (auto& p : params)
        for (i64 i = 0; i < p.numel(); ++i) p.at(i) += 0.4 * rng.normal();
    Tensor x({2, 3}, {0.3, -1.2, 0.8, 1.1, 0.2, -0.7});

    auto build = [&](const std::vector<Tensor>& pv, std::vector<Tape::Id>* out_ids, Tape& t) {
        std::vector<Tape::Id> ids;
        for (const auto& p : pv) ids.push_back(t.leaf(p, true));
        if (out_ids) *out_ids = ids;
        auto xid = t.leaf(x, false);
        auto h1 = t.add_bias(t.matmul(xid, ids[0]), ids[1]);
        auto n1 = t.layer_norm(h1, ids[2], ids[3]);
        auto a1 = t.relu(n1);
        auto h2 = t.add_bias(t.matmul(a1, ids[4]), ids[5]);
        auto sm = t.softmax_rows(h2);
        auto picked = t.mul(sm, t.constant(Tensor({2, 4}, {1, 0, 0, 0, 0, 0, 1, 0})));
        return t.sum(picked);
    };

    Tape t;
    std::vector<Tape::Id> ids;
    auto loss = build(params, &ids, t);
    auto grads = t.gradients(loss, ids);

    auto eval = [&](const std::vector<Tensor>& pv) {
        Tape tt;
        return tt.val(build(pv, nullptr, tt)).at(0);
    };
    const double err = testutil::max_fd_rel_error(params, eval, grads);
    CHECK(err < 1e-4);
}

TEST_CASE("replaying the same tape is bit-reproducible") {
    auto run = [](u64 seed) {
        Rng rng(seed);
        Tape t;
        Tensor w({6, 6});
        for (i64 i = 0; i < w.numel(); ++i) w.at(i) = rng.normal();
        auto wid = t.leaf(w, true);
        auto d = t.dropout(t.matmul(wid, wid), 0.3, rng, true);
        auto loss = t.sum(t.mul(d, d));
        Tape::Id wrt[] = {wid};
        auto g = t.gradients(loss, wrt);
        return std::make_pair(t.val(loss).at(0), g[0]);
    };
    auto [l1, g1] = run(99);
    auto [l2, g2] = run(99);
    CHECK(l1 == l2);
    for (i64 i = 0; i < g1.numel(); ++i) CHECK(g1.at(i) == g2.at(i));
}

TEST_CASE("take_rows and embedding_rows gather and scatter") {
    Tape t;
    auto table = t.leaf(Tensor({4, 2}, {0, 0, 1, 2, 3, 4, 5, 6}), true);
    auto ids = std::make_shared<std::vector<i64>>(std::vector<i64>{2, 0, 2});
    auto got = t.embedding_rows(table, ids);
    CHECK(t.val(got).at2(0, 1) == 4);
    CHECK(t.val(got).at2(1, 0) == 0);
    auto loss = t.sum(got);
    Tape::Id wrt[] = {table};
    auto g = t.gradients(loss, wrt);
    // row 2 was gathered twice; padding row 0 receives no gradient
    CHECK(g[0].at2(2, 0) == 2.0);
    CHECK(g[0].at2(0, 0) == 0.0);
    CHECK(g[0].at2(1, 0) == 0.0);

    Tape t2;
    auto m = t2.leaf(Tensor({3, 2}, {1, 2, 3, 4, 5, 6}), true);
    auto rows = std::make_shared<std::vector<i64>>(std::vector<i64>{0, 0});
    auto taken = t2.take_rows(m, rows);
    auto loss2 = t2.sum(taken);
    Tape::Id wrt2[] = {m};
    auto g2 = t2.gradients(loss2, wrt2);
    CHECK(g2[0].at2(0, 0) == 2.0);  // row 0 counted twice here (not an embedding)
}

TEST_CASE("split/merge heads round-trip") {
    Tape t;
    Rng rng(4);
    Tensor x({6, 8});
    for (i64 i = 0; i < x.numel(); ++i) x.at(i) = rng.normal();
    auto xid = t.leaf(x, true);
    auto split = t.split_heads(xid, 2, 3, 2);
    CHECK(t.val(split).shape() == std::vector<i64>{4, 3, 4});
    auto merged = t.merge_heads(split, 2, 3, 2);
    for (i64 i = 0; i < x.numel(); ++i) CHECK(t.val(merged).at(i) == x.at(i));
}
