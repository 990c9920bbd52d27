// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <string>

#include "driftforge/data.hpp"
#include "driftforge/rng.hpp"

using namespace driftforge;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& content) {
        static int counter = 0;
        path = "df_test_" + std::to_string(counter++) + ".tsv";
        std::ofstream out(path);
        out << content;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

std::vector<InteractionEvent> synthetic_stream(i64 n, u64 seed, i64 users = 10) {
    Rng rng(seed);
    std::vector<InteractionEvent> ev;
    for (i64 i = 0; i < n; ++i) {
        ev.push_back({"u" + std::to_string(rng.uniform_int(users)), "i" + std::to_string(rng.uniform_int(30)),
                      i});  // distinct timestamps
    }
    return ev;
}

}  // namespace

TEST_CASE("ingest parses, sorts and deduplicates") {
    TempFile f("u2\ti1\t30\nu1\ti2\t20\nu1\ti1\t10\n");
    auto ev = ingest(f.path);
    REQUIRE(ev.size() == 3);
    CHECK(ev[0].user == "u1");
    CHECK(ev[0].timestamp == 10);
    CHECK(ev[1].timestamp == 20);
    CHECK(ev[2].user == "u2");

    TempFile dup("u1\ti1\t10\nu1\ti1\t10\n");
    CHECK(ingest(dup.path).size() == 1);

    TempFile hdr("user\titem\ttimestamp\nu1\ti1\t10\n");
    CHECK(ingest(hdr.path).size() == 1);

    TempFile bad("u1\ti1\t10\nu2\ti2\tnot_a_number\n");
    try {
        ingest(bad.path);
        FAIL("expected error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("base-plus-blocks split yields 60/10/10/10/10 on 100 events") {
    auto ev = synthetic_stream(100, 7);
    StagePlan plan;
    plan.mode = StagePlan::Mode::BaseBlocks;
    plan.base_fraction = 0.6;
    plan.n_blocks = 4;
    plan.k_core = 1;  // pre-filter sizes
    auto split = split_stages(ev, plan);
    REQUIRE(split.stages.size() == 5);
    std::vector<i64> want = {60, 10, 10, 10, 10};
    for (size_t i = 0; i < 5; ++i) CHECK(split.stages[i].stats.interactions == want[i]);
}

TEST_CASE("fixed-window split on one week of events yields one stage") {
    std::vector<InteractionEvent> ev;
    for (i64 i = 0; i < 50; ++i) ev.push_back({"u" + std::to_string(i % 5), "i" + std::to_string(i % 7), i * 3600});
    StagePlan plan;
    plan.mode = StagePlan::Mode::FixedWindow;
    plan.window_seconds = 7 * 24 * 3600;
    plan.k_core = 1;
    auto split = split_stages(ev, plan);
    CHECK(split.stages.size() == 1);
}

TEST_CASE("k-core filter leaves no session shorter than k") {
    auto ev = synthetic_stream(300, 13, 60);  // many short sessions
    StagePlan plan;
    plan.mode = StagePlan::Mode::BaseBlocks;
    plan.n_blocks = 2;
    plan.k_core = 3;
    auto split = split_stages(ev, plan);
    // brute-force oracle: every surviving session has >= 3 events
    for (const auto& st : split.stages)
        for (const auto& s : st.sessions) CHECK(s.items.size() >= 3);
}

TEST_CASE("stage partition properties on random streams") {
    for (u64 seed : {1ULL, 2ULL, 3ULL}) {
        auto ev = synthetic_stream(400, seed, 25);
        StagePlan plan;
        plan.mode = StagePlan::Mode::BaseBlocks;
        plan.n_blocks = 3;
        plan.k_core = 1;
        auto split = split_stages(ev, plan);
        i64 total = 0;
        i64 prev_max_ts = -1;
        i64 prev_vocab = 0;
        for (const auto& st : split.stages) {
            i64 lo = 1'000'000'000, hi = -1;
            for (const auto& s : st.sessions) {
                total += static_cast<i64>(s.items.size());
            }
            // recover stage event ts bounds via session order is lost; use stats
            (void)lo;
            (void)hi;
            CHECK(st.vocab_items >= prev_vocab);  // vocabulary monotonicity
            prev_vocab = st.vocab_items;
        }
        CHECK(total == 400);  // union of stages covers all events (k_core=1)
        (void)prev_max_ts;
    }
}

TEST_CASE("stages are disjoint and time-ordered") {
    auto ev = synthetic_stream(200, 21, 15);
    StagePlan plan;
    plan.mode = StagePlan::Mode::FixedWindow;
    plan.window_seconds = 50;
    plan.k_core = 1;
    auto split = split_stages(ev, plan);
    REQUIRE(split.stages.size() == 4);
    // reconstruct per-stage timestamp ranges through the raw stream order:
    // window w holds timestamps [w*50, (w+1)*50)
    for (size_t w = 0; w < split.stages.size(); ++w) {
        i64 n_in_window = 0;
        for (const auto& e : ev)
            if (e.timestamp / 50 == static_cast<i64>(w)) ++n_in_window;
        CHECK(split.stages[w].stats.interactions == n_in_window);
    }
}

TEST_CASE("build_samples definition and truncation") {
    Session s{0, {5, 6, 7}};
    auto samples = build_samples({s}, 50);
    REQUIRE(samples.size() == 2);
    CHECK(samples[0].prefix == std::vector<i64>{5});
    CHECK(samples[0].target == 6);
    CHECK(samples[1].prefix == std::vector<i64>{5, 6});
    CHECK(samples[1].target == 7);

    Session single{0, {5}};
    CHECK(build_samples({single}, 50).empty());

    // length 60, max 50: last prefix has length 50 and ends at item 59 (1-based: position 59)
    Session longs{0, {}};
    for (i64 i = 1; i <= 60; ++i) longs.items.push_back(i);
    auto ls = build_samples({longs}, 50);
    REQUIRE(ls.size() == 59);
    const auto& last = ls.back();
    CHECK(last.prefix.size() == 50);
    CHECK(last.prefix.back() == 59);
    CHECK(last.target == 60);
    // enumeration oracle: sample t has prefix = items[max(0,t-50)..t)
    for (size_t t = 1; t <= 59; ++t) {
        const auto& smp = ls[t - 1];
        const size_t start = t > 50 ? t - 50 : 0;
        CHECK(smp.prefix.size() == t - start);
        CHECK(smp.prefix.front() == longs.items[start]);
        CHECK(smp.target == longs.items[t]);
    }
}

TEST_CASE("sample count identity: T-1 samples per session") {
    Rng rng(3);
    std::vector<Session> sessions;
    i64 want = 0;
    for (int i = 0; i < 30; ++i) {
        Session s{i, {}};
        const i64 len = 2 + rng.uniform_int(9);
        for (i64 j = 0; j < len; ++j) s.items.push_back(1 + rng.uniform_int(20));
        want += len - 1;
        sessions.push_back(std::move(s));
    }
    CHECK(static_cast<i64>(build_samples(sessions, 100).size()) == want);
}

TEST_CASE("train/valid split is 90:10 by session and seeded") {
    std::vector<Session> sessions;
    for (i64 i = 0; i < 100; ++i) sessions.push_back({i, {i + 1, i + 2, i + 3}});
    auto tv1 = split_train_valid(sessions, 50, 77);
    auto tv2 = split_train_valid(sessions, 50, 77);
    CHECK(tv1.train.size() == 180);  // 90 sessions x 2 samples
    CHECK(tv1.valid.size() == 20);
    REQUIRE(tv1.train.size() == tv2.train.size());
    for (size_t i = 0; i < tv1.train.size(); ++i) CHECK(tv1.train[i].target == tv2.train[i].target);
    auto tv3 = split_train_valid(sessions, 50, 78);
    bool differs = false;
    for (size_t i = 0; i < tv1.train.size() && !differs; ++i)
        differs = tv1.train[i].prefix != tv3.train[i].prefix;
    CHECK(differs);
}

TEST_CASE("filter_test drops unseen targets and prunes prefixes") {
    std::vector<Sample> samples = {
        {{1, 2}, 9},     // unseen target -> removed
        {{1, 2}, 3},     // all seen -> unchanged
        {{1, 7, 2}, 3},  // unseen prefix item 7 dropped
        {{9}, 3},        // prefix empties -> removed
    };
    auto out = filter_test(samples, 5);
    REQUIRE(out.size() == 2);
    CHECK(out[0].prefix == std::vector<i64>{1, 2});
    CHECK(out[1].prefix == std::vector<i64>{1, 2});
    // set-membership oracle
    for (const auto& s : out) {
        CHECK(s.target <= 5);
        for (i64 it : s.prefix) CHECK(it <= 5);
    }
}

TEST_CASE("sessions_from_events maps onto an existing id space") {
    std::vector<std::string> names = {"<pad>", "a", "b"};
    std::vector<InteractionEvent> ev = {{"x", "b", 1}, {"x", "zz", 2}, {"x", "a", 3}};
    auto sessions = sessions_from_events(ev, names);
    REQUIRE(sessions.size() == 1);
    REQUIRE(sessions[0].items.size() == 3);
    CHECK(sessions[0].items[0] == 2);
    CHECK(sessions[0].items[1] > 100);  // out-of-vocabulary sentinel
    CHECK(sessions[0].items[2] == 1);
}
