// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "driftforge/data.hpp"

namespace driftforge {

// Synthetic drifting interaction stream. Each stage draws sessions whose
// category comes from that stage's popularity vector; items are uniform
// within the category. Stages are separated on the time axis so a
// fixed-window split of stage_gap_seconds recovers them exactly.
struct DriftScenario {
    int n_categories = 8;
    int items_per_category = 50;
    std::vector<std::vector<double>> stage_popularity;  // one distribution per stage
    int sessions_per_stage = 1000;
    // optional per-stage override of sessions_per_stage (e.g. a heavier
    // base stage); empty means uniform
    std::vector<int> sessions_schedule;
    int min_session_len = 3;
    int max_session_len = 8;
    // probability of each event staying in the session's category (the
    // remainder re-draws a category from the stage vector)
    double category_stickiness = 1.0;
    // with item_structure_noise < 1, items inside a category follow a
    // successor ring: the next item is (prev + step_c) mod
    // items_per_category with probability 1 - noise, else uniform in the
    // category. The step 1 + (c mod 5) is category-specific, so the
    // transition geometry is knowledge the model must keep per category.
    // The per-item marginal stays uniform either way.
    double item_structure_noise = 1.0;
    i64 stage_gap_seconds = 1'000'000;
    u64 seed = 1;
};

void validate(const DriftScenario& sc);

std::vector<InteractionEvent> generate_drift(const DriftScenario& sc);

// Sessions confined to one category, for probing retention of a stable
// preference; users are disjoint from generate_drift's. Map onto a dense
// id space with sessions_from_events.
std::vector<InteractionEvent> generate_category_probe(const DriftScenario& sc, int category, int n_sessions,
                                                      u64 seed);

}  // namespace driftforge
