// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "driftforge/common.hpp"

namespace driftforge {

// One (user, item, timestamp) record; the atom of all datasets.
struct InteractionEvent {
    std::string user;
    std::string item;
    i64 timestamp = 0;
};

enum class IngestFormat { Tsv, JsonLines };

// Parses `user<TAB>item<TAB>timestamp` lines (an unparsable first line is
// treated as a header) or JSON records with user/item/timestamp fields.
// Exact duplicate triples are dropped; events come back stably sorted by
// (user, timestamp) with file order breaking timestamp ties.
std::vector<InteractionEvent> ingest(const std::string& path, IngestFormat format = IngestFormat::Tsv);

struct StagePlan {
    enum class Mode { FixedWindow, BaseBlocks };
    Mode mode = Mode::BaseBlocks;
    i64 window_seconds = 7 * 24 * 3600;  // FixedWindow only
    double base_fraction = 0.6;          // BaseBlocks only
    int n_blocks = 4;                    // BaseBlocks only
    int k_core = 2;
    i64 max_seq_len = 50;
};

// One user's interactions within one stage, in time order, re-indexed to
// dense item ids (0 is reserved for padding).
struct Session {
    i64 user = 0;
    std::vector<i64> items;
};

// One next-item training case.
struct Sample {
    std::vector<i64> prefix;
    i64 target = 0;
};

struct StageStats {
    i64 users = 0;
    i64 new_users = 0;
    i64 items = 0;
    i64 new_items = 0;
    i64 interactions = 0;
    double avg_actions_per_user = 0.0;
    double avg_actions_per_item = 0.0;
};

struct StageData {
    int stage_index = 0;
    std::vector<Session> sessions;  // post k-core, chronological
    i64 vocab_items = 0;            // cumulative: ids 1..vocab_items seen so far
    StageStats stats;
};

struct StageSplit {
    std::vector<StageData> stages;
    std::vector<std::string> item_names;  // dense id -> original key; [0] is the pad slot
    std::vector<std::string> user_names;
};

// Temporal segmentation with per-stage k-core filtering and global dense
// re-indexing by first appearance. Stages partition the event stream in
// time order; the item vocabulary is cumulative across stages.
StageSplit split_stages(const std::vector<InteractionEvent>& events, const StagePlan& plan);

// Emits ([i1..it], i_{t+1}) for t = 1..T-1 per session; prefixes longer
// than max_seq_len keep the most recent max_seq_len items.
std::vector<Sample> build_samples(const std::vector<Session>& sessions, i64 max_seq_len);

struct TrainValid {
    std::vector<Sample> train;
    std::vector<Sample> valid;
};

// Seeded 90:10 split by session, then per-side sample construction.
TrainValid split_train_valid(const std::vector<Session>& sessions, i64 max_seq_len, u64 seed);

// Keeps only samples whose target was seen in prior stages (id within
// known_vocab_items); unseen prefix items are removed and samples left
// with an empty prefix are dropped.
std::vector<Sample> filter_test(const std::vector<Sample>& samples, i64 known_vocab_items);

// Groups raw events into per-user sessions mapped onto an existing dense
// id space (one session per user; caller supplies the id list produced by
// split_stages). Items outside that space get an out-of-vocabulary
// sentinel id that filter_test later drops.
std::vector<Session> sessions_from_events(const std::vector<InteractionEvent>& events,
                                          const std::vector<std::string>& item_names);

}  // namespace driftforge
