// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "driftforge/metrics.hpp"
#include "driftforge/rng.hpp"

using namespace driftforge;

TEST_CASE("rank_of_target analytic cases") {
    {
        std::vector<double> z = {0.1, 0.9, 0.3};
        CHECK(rank_of_target(z, 1, nullptr) == 1);  // unique max
    }
    {
        // all logits equal, five items, target index 2: two lower-index ties ahead
        std::vector<double> z(5, 0.5);
        CHECK(rank_of_target(z, 2, nullptr) == 3);
    }
    {
        std::vector<double> z = {0.2, 0.8, 0.5};
        std::vector<unsigned char> excl = {0, 1, 0};  // best item excluded
        CHECK(rank_of_target(z, 2, &excl) == 1);
        CHECK_THROWS(rank_of_target(z, 1, &excl));  // target excluded
    }
}

TEST_CASE("rank_of_target matches a full argsort oracle on random logits") {
    Rng rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        const i64 n = 2 + rng.uniform_int(40);
        std::vector<double> z(static_cast<size_t>(n));
        for (auto& v : z) v = rng.uniform_int(6) * 0.25;  // deliberate ties
        const i64 target = rng.uniform_int(n);
        // oracle: stable argsort by (-logit, index), rank = position of target
        std::vector<i64> idx(static_cast<size_t>(n));
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](i64 a, i64 b) {
            if (z[static_cast<size_t>(a)] != z[static_cast<size_t>(b)])
                return z[static_cast<size_t>(a)] > z[static_cast<size_t>(b)];
            return a < b;
        });
        const i64 want = 1 + static_cast<i64>(std::find(idx.begin(), idx.end(), target) - idx.begin());
        CHECK(rank_of_target(z, target, nullptr) == want);
    }
}

TEST_CASE("metrics_at_k formula substitutions") {
    {
        auto m = metrics_at_k(1, 10);
        CHECK(m.recall == 1.0);
        CHECK(m.mrr == 1.0);
        CHECK(m.ndcg == 1.0);
    }
    {
        auto m = metrics_at_k(3, 10);
        CHECK(m.recall == 1.0);
        CHECK(m.mrr == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
        CHECK(m.ndcg == doctest::Approx(0.5).epsilon(1e-15));  // 1/log2(4)
    }
    {
        auto m = metrics_at_k(11, 10);
        CHECK(m.recall == 0.0);
        CHECK(m.mrr == 0.0);
        CHECK(m.ndcg == 0.0);
    }
}

TEST_CASE("per-case bounds and monotonicity in K") {
    for (i64 r = 1; r <= 40; ++r) {
        double prev_recall = -1, prev_mrr = -1, prev_ndcg = -1;
        for (i64 k = 1; k <= 40; ++k) {
            auto m = metrics_at_k(r, k);
            CHECK(m.mrr <= m.recall);
            CHECK(m.ndcg <= m.recall);
            CHECK(m.recall >= prev_recall);
            CHECK(m.mrr >= prev_mrr);
            CHECK(m.ndcg >= prev_ndcg);
            prev_recall = m.recall;
            prev_mrr = m.mrr;
            prev_ndcg = m.ndcg;
        }
    }
}

TEST_CASE("mean metrics over random rank vectors match a per-case loop oracle") {
    Rng rng(7);
    const i64 n = 1000;
    std::vector<i64> ranks;
    for (i64 i = 0; i < n; ++i) ranks.push_back(1 + rng.uniform_int(60));
    double want_r10 = 0, want_m10 = 0, want_n10 = 0, want_r20 = 0, want_m20 = 0, want_n20 = 0;
    for (i64 r : ranks) {
        if (r <= 10) {
            want_r10 += 1.0;
            want_m10 += 1.0 / static_cast<double>(r);
            want_n10 += 1.0 / std::log2(static_cast<double>(r) + 1.0);
        }
        if (r <= 20) {
            want_r20 += 1.0;
            want_m20 += 1.0 / static_cast<double>(r);
            want_n20 += 1.0 / std::log2(static_cast<double>(r) + 1.0);
        }
    }
    double got_r10 = 0, got_m10 = 0, got_n10 = 0, got_r20 = 0, got_m20 = 0, got_n20 = 0;
    for (i64 r : ranks) {
        auto a = metrics_at_k(r, 10);
        auto b = metrics_at_k(r, 20);
        got_r10 += a.recall;
        got_m10 += a.mrr;
        got_n10 += a.ndcg;
        got_r20 += b.recall;
        got_m20 += b.mrr;
        got_n20 += b.ndcg;
    }
    CHECK(std::abs(got_r10 - want_r10) < 1e-12);
    CHECK(std::abs(got_m10 - want_m10) < 1e-12);
    CHECK(std::abs(got_n10 - want_n10) < 1e-12);
    CHECK(std::abs(got_r20 - want_r20) < 1e-12);
    CHECK(std::abs(got_m20 - want_m20) < 1e-12);
    CHECK(std::abs(got_n20 - want_n20) < 1e-12);
    CHECK(got_r10 <= got_r20);
}

TEST_CASE("evaluate_stage means, determinism and permutation invariance") {
    ModelConfig cfg;
    cfg.hidden_dim = 8;
    cfg.n_blocks = 1;
    cfg.n_heads = 1;
    cfg.max_seq_len = 5;
    cfg.dropout_rate = 0.0;
    cfg.vocab_size = 30;
    Rng rng(11);
    ParamSet params = ParamSet::init(cfg, rng);

    Rng datarng(12);
    std::vector<Sample> test;
    for (int i = 0; i < 200; ++i) {
        Sample s;
        const i64 len = 1 + datarng.uniform_int(4);
        for (i64 j = 0; j < len; ++j) s.prefix.push_back(1 + datarng.uniform_int(29));
        s.target = 1 + datarng.uniform_int(29);
        test.push_back(std::move(s));
    }
    EvalOptions opts;
    auto rep = evaluate_stage(params, cfg, test, opts, 0);
    CHECK(rep.n_cases == 200);
    CHECK(rep.recall10 <= rep.recall20);
    CHECK(rep.mrr20 <= rep.recall20);
    CHECK(rep.ndcg20 <= rep.recall20);

    // per-case loop oracle with batch size 1
    EvalOptions one;
    one.batch_size = 1;
    auto rep1 = evaluate_stage(params, cfg, test, one, 0);
    CHECK(std::abs(rep.recall20 - rep1.recall20) < 1e-12);
    CHECK(std::abs(rep.mrr10 - rep1.mrr10) < 1e-12);
    CHECK(std::abs(rep.ndcg20 - rep1.ndcg20) < 1e-12);

    // shuffling test cases leaves the means unchanged
    std::vector<Sample> shuffled = test;
    Rng shufrng(13);
    for (i64 i = static_cast<i64>(shuffled.size()) - 1; i > 0; --i)
        std::swap(shuffled[static_cast<size_t>(i)], shuffled[static_cast<size_t>(shufrng.uniform_int(i + 1))]);
    auto rep2 = evaluate_stage(params, cfg, shuffled, opts, 0);
    CHECK(std::abs(rep.recall20 - rep2.recall20) < 1e-12);
    CHECK(std::abs(rep.ndcg10 - rep2.ndcg10) < 1e-12);

    CHECK_THROWS(evaluate_stage(params, cfg, {}, opts, 0));
}

TEST_CASE("csv rows follow the fixed column order") {
    MetricsReport r;
    r.stage = 2;
    r.n_cases = 10;
    r.mrr10 = 0.1;
    r.recall10 = 0.2;
    r.ndcg10 = 0.15;
    r.mrr20 = 0.12;
    r.recall20 = 0.3;
    r.ndcg20 = 0.18;
    CHECK(metrics_csv_header(false) == "stage,n_cases,mrr@10,recall@10,ndcg@10,mrr@20,recall@20,ndcg@20");
    CHECK(metrics_csv_row(r) == "2,10,0.100000,0.200000,0.150000,0.120000,0.300000,0.180000");
    CHECK(metrics_csv_row(r, "finetune") ==
          "finetune,2,10,0.100000,0.200000,0.150000,0.120000,0.300000,0.180000");
}
