// SPDX-License-Identifier: Apache-2.0
#include "driftforge/synthetic.hpp"

#include <cmath>
#include <string>

#include "driftforge/rng.hpp"

namespace driftforge {

namespace {

int sample_category(const std::vector<double>& popularity, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (size_t c = 0; c < popularity.size(); ++c) {
        acc += popularity[c];
        if (u < acc) return static_cast<int>(c);
    }
    return static_cast<int>(popularity.size()) - 1;
}

std::string item_name(int category, i64 idx) { return "c" + std::to_string(category) + "_i" + std::to_string(idx); }

i64 ring_step(int category) { return 1 + (category % 5); }

}  // namespace

void validate(const DriftScenario& sc) {
    DF_CHECK(sc.n_categories >= 1 && sc.items_per_category >= 1, "scenario: categories and items must be positive");
    DF_CHECK(!sc.stage_popularity.empty(), "scenario: needs at least one stage popularity vector");
    DF_CHECK(sc.sessions_per_stage >= 1, "scenario: sessions_per_stage must be positive");
    if (!sc.sessions_schedule.empty()) {
        DF_CHECK(sc.sessions_schedule.size() == sc.stage_popularity.size(),
                 "scenario: sessions_schedule must have one entry per stage");
        for (int n : sc.sessions_schedule) DF_CHECK(n >= 1, "scenario: sessions_schedule entries must be positive");
    }
    DF_CHECK(sc.min_session_len >= 2 && sc.max_session_len >= sc.min_session_len,
             "scenario: session length range invalid");
    DF_CHECK(sc.category_stickiness >= 0.0 && sc.category_stickiness <= 1.0, "scenario: stickiness must be in [0,1]");
    DF_CHECK(sc.item_structure_noise >= 0.0 && sc.item_structure_noise <= 1.0,
             "scenario: item_structure_noise must be in [0,1]");
    for (size_t m = 0; m < sc.stage_popularity.size(); ++m) {
        const auto& p = sc.stage_popularity[m];
        DF_CHECK(static_cast<int>(p.size()) == sc.n_categories,
                 "scenario: stage " << m << " popularity has wrong arity");
        double s = 0.0;
        for (double v : p) {
            DF_CHECK(v >= 0.0, "scenario: negative popularity in stage " << m);
            s += v;
        }
        DF_CHECK(std::abs(s - 1.0) <= 1e-12, "scenario: stage " << m << " popularity sums to " << s << ", not 1");
    }
}

std::vector<InteractionEvent> generate_drift(const DriftScenario& sc) {
    validate(sc);
    Rng rng(sc.seed);
    std::vector<InteractionEvent> events;
    i64 user_counter = 0;
    for (size_t m = 0; m < sc.stage_popularity.size(); ++m) {
        const auto& pop = sc.stage_popularity[m];
        i64 ts = static_cast<i64>(m) * sc.stage_gap_seconds;
        const int n_sessions = sc.sessions_schedule.empty() ? sc.sessions_per_stage : sc.sessions_schedule[m];
        for (int s = 0; s < n_sessions; ++s) {
            const int session_cat = sample_category(pop, rng);
            const i64 len = sc.min_session_len + rng.uniform_int(sc.max_session_len - sc.min_session_len + 1);
            const std::string user = "u" + std::to_string(user_counter++);
            i64 prev_idx = -1;
            int prev_cat = -1;
            for (i64 k = 0; k < len; ++k) {
                int cat = session_cat;
                if (sc.category_stickiness < 1.0 && rng.uniform() >= sc.category_stickiness)
                    cat = sample_category(pop, rng);
                i64 idx;
                if (prev_idx >= 0 && cat == prev_cat && rng.uniform() >= sc.item_structure_noise)
                    idx = (prev_idx + ring_step(cat)) % sc.items_per_category;
                else
                    idx = rng.uniform_int(sc.items_per_category);
                events.push_back({user, item_name(cat, idx), ts++});
                prev_idx = idx;
                prev_cat = cat;
            }
        }
    }
    return events;
}

std::vector<InteractionEvent> generate_category_probe(const DriftScenario& sc, int category, int n_sessions,
                                                      u64 seed) {
    validate(sc);
    DF_CHECK(category >= 0 && category < sc.n_categories, "probe: category out of range");
    DF_CHECK(n_sessions >= 1, "probe: n_sessions must be positive");
    Rng rng(seed);
    std::vector<InteractionEvent> out;
    i64 ts = 0;
    for (int s = 0; s < n_sessions; ++s) {
        const std::string user = "probe_u" + std::to_string(s);
        const i64 len = sc.min_session_len + rng.uniform_int(sc.max_session_len - sc.min_session_len + 1);
        i64 prev_idx = -1;
        for (i64 k = 0; k < len; ++k) {
            i64 idx;
            if (prev_idx >= 0 && rng.uniform() >= sc.item_structure_noise)
                idx = (prev_idx + ring_step(category)) % sc.items_per_category;
            else
                idx = rng.uniform_int(sc.items_per_category);
            out.push_back({user, item_name(category, idx), ts++});
            prev_idx = idx;
        }
    }
    return out;
}

}  // namespace driftforge
