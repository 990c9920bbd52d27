// SPDX-License-Identifier: Apache-2.0
#include "driftforge/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "driftforge/rng.hpp"

namespace driftforge {

namespace {

bool parse_tsv_line(const std::string& line, InteractionEvent& ev) {
    const size_t t1 = line.find('\t');
    if (t1 == std::string::npos) return false;
    const size_t t2 = line.find('\t', t1 + 1);
    if (t2 == std::string::npos) return false;
    ev.user = line.substr(0, t1);
    ev.item = line.substr(t1 + 1, t2 - t1 - 1);
    std::string ts = line.substr(t2 + 1);
    while (!ts.empty() && (ts.back() == '\r' || ts.back() == ' ')) ts.pop_back();
    if (ev.user.empty() || ev.item.empty() || ts.empty()) return false;
    size_t pos = 0;
    try {
        const long long v = std::stoll(ts, &pos);
        if (pos != ts.size() || v < 0) return false;
        ev.timestamp = v;
    } catch (const std::exception&) {
        return false;
    }
    return true;
}

bool parse_json_line(const std::string& line, InteractionEvent& ev) {
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("user") || !j.contains("item") || !j.contains("timestamp")) return false;
    if (!j["timestamp"].is_number_integer()) return false;
    ev.user = j["user"].is_string() ? j["user"].get<std::string>() : j["user"].dump();
    ev.item = j["item"].is_string() ? j["item"].get<std::string>() : j["item"].dump();
    ev.timestamp = j["timestamp"].get<i64>();
    return !ev.user.empty() && !ev.item.empty() && ev.timestamp >= 0;
}

}  // namespace

std::vector<InteractionEvent> ingest(const std::string& path, IngestFormat format) {
    std::ifstream in(path);
    DF_CHECK(in.good(), "ingest: cannot open '" << path << "'");
    std::vector<InteractionEvent> events;
    std::set<std::tuple<std::string, std::string, i64>> seen;
    std::string line;
    i64 line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        InteractionEvent ev;
        const bool ok = format == IngestFormat::Tsv ? parse_tsv_line(line, ev) : parse_json_line(line, ev);
        if (!ok) {
            if (line_no == 1) continue;  // optional header
            DF_CHECK(false, "ingest: unparsable line " << line_no << " in '" << path << "'");
        }
        if (seen.insert({ev.user, ev.item, ev.timestamp}).second) events.push_back(std::move(ev));
    }
    std::stable_sort(events.begin(), events.end(), [](const InteractionEvent& a, const InteractionEvent& b) {
        if (a.user != b.user) return a.user < b.user;
        return a.timestamp < b.timestamp;
    });
    return events;
}

namespace {

struct IndexedEvent {
    i64 user = 0;
    i64 item = 0;
    i64 timestamp = 0;
    i64 order = 0;  // position in the chronological stream
};

}  // namespace

StageSplit split_stages(const std::vector<InteractionEvent>& events, const StagePlan& plan) {
    DF_CHECK(!events.empty(), "split_stages: no events");
    DF_CHECK(plan.k_core >= 1, "split_stages: k_core must be >= 1");
    DF_CHECK(plan.max_seq_len >= 1, "split_stages: max_seq_len must be >= 1");

    // chronological stream; input order breaks timestamp ties
    std::vector<const InteractionEvent*> stream;
    stream.reserve(events.size());
    for (const auto& e : events) stream.push_back(&e);
    std::stable_sort(stream.begin(), stream.end(),
                     [](const InteractionEvent* a, const InteractionEvent* b) { return a->timestamp < b->timestamp; });

    // stage boundaries
    const i64 n = static_cast<i64>(stream.size());
    std::vector<std::pair<i64, i64>> ranges;  // [begin, end) into stream
    if (plan.mode == StagePlan::Mode::BaseBlocks) {
        DF_CHECK(plan.base_fraction > 0.0 && plan.base_fraction < 1.0,
                 "split_stages: base_fraction must be in (0,1)");
        DF_CHECK(plan.n_blocks >= 1, "split_stages: n_blocks must be >= 1");
        const i64 base = static_cast<i64>(static_cast<double>(n) * plan.base_fraction);
        DF_CHECK(base >= 1, "split_stages: plan yields an empty stage (base block)");
        ranges.emplace_back(0, base);
        const i64 rest = n - base;
        i64 cursor = base;
        for (int b = 0; b < plan.n_blocks; ++b) {
            i64 sz = rest / plan.n_blocks + (b < rest % plan.n_blocks ? 1 : 0);
            DF_CHECK(sz >= 1, "split_stages: plan yields an empty stage (block " << b + 1 << ")");
            ranges.emplace_back(cursor, cursor + sz);
            cursor += sz;
        }
    } else {
        DF_CHECK(plan.window_seconds >= 1, "split_stages: window_seconds must be >= 1");
        const i64 t0 = stream.front()->timestamp;
        const i64 t_last = stream.back()->timestamp;
        const i64 n_windows = (t_last - t0) / plan.window_seconds + 1;
        std::vector<std::vector<i64>> buckets(static_cast<size_t>(n_windows));
        for (i64 i = 0; i < n; ++i) {
            const i64 w = (stream[static_cast<size_t>(i)]->timestamp - t0) / plan.window_seconds;
            buckets[static_cast<size_t>(w)].push_back(i);
        }
        for (i64 w = 0; w < n_windows; ++w)
            DF_CHECK(!buckets[static_cast<size_t>(w)].empty(),
                     "split_stages: plan yields an empty stage (window " << w << ")");
        // windows respect chronological order, so ranges are contiguous
        i64 cursor = 0;
        for (i64 w = 0; w < n_windows; ++w) {
            const i64 sz = static_cast<i64>(buckets[static_cast<size_t>(w)].size());
            ranges.emplace_back(cursor, cursor + sz);
            cursor += sz;
        }
    }

    // per-stage sessions (pre-index), then k-core, then global re-indexing
    StageSplit out;
    out.item_names.push_back("<pad>");
    std::unordered_map<std::string, i64> item_ids;
    std::unordered_map<std::string, i64> user_ids;
    std::unordered_set<i64> users_seen;
    i64 items_seen_total = 0;

    for (size_t si = 0; si < ranges.size(); ++si) {
        const auto [beg, end] = ranges[si];
        // group stage events by user, keeping stream order within user
        std::map<std::string, std::vector<const InteractionEvent*>> by_user;
        std::map<std::string, i64> first_pos;
        for (i64 i = beg; i < end; ++i) {
            const InteractionEvent* e = stream[static_cast<size_t>(i)];
            auto& vec = by_user[e->user];
            if (vec.empty()) first_pos[e->user] = i;
            vec.push_back(e);
        }
        // sessions ordered by first appearance in the stream
        std::vector<std::pair<i64, const std::string*>> order;
        order.reserve(by_user.size());
        for (const auto& [user, vec] : by_user) order.emplace_back(first_pos[user], &user);
        std::sort(order.begin(), order.end());

        StageData stage;
        stage.stage_index = static_cast<int>(si);
        std::unordered_set<i64> stage_users, stage_items;
        for (const auto& [pos, user_ptr] : order) {
            const auto& vec = by_user[*user_ptr];
            if (static_cast<int>(vec.size()) < plan.k_core) continue;  // k-core filter
            Session s;
            auto uit = user_ids.find(*user_ptr);
            if (uit == user_ids.end()) {
                uit = user_ids.emplace(*user_ptr, static_cast<i64>(out.user_names.size())).first;
                out.user_names.push_back(*user_ptr);
            }
            s.user = uit->second;
            for (const InteractionEvent* e : vec) {
                auto it = item_ids.find(e->item);
                if (it == item_ids.end()) {
                    it = item_ids.emplace(e->item, static_cast<i64>(out.item_names.size())).first;
                    out.item_names.push_back(e->item);
                    ++items_seen_total;
                }
                s.items.push_back(it->second);
                stage_items.insert(it->second);
            }
            if (!users_seen.count(s.user)) ++stage.stats.new_users;
            stage_users.insert(s.user);
            stage.stats.interactions += static_cast<i64>(s.items.size());
            stage.sessions.push_back(std::move(s));
        }
        DF_CHECK(!stage.sessions.empty(),
                 "split_stages: stage " << si << " is empty after k-core filtering (k=" << plan.k_core << ")");
        for (i64 u : stage_users) users_seen.insert(u);
        stage.stats.users = static_cast<i64>(stage_users.size());
        stage.stats.items = static_cast<i64>(stage_items.size());
        // new items are exactly the ids assigned while scanning this stage
        stage.stats.new_items = items_seen_total - (si == 0 ? 0 : out.stages.back().vocab_items);
        stage.vocab_items = items_seen_total;
        stage.stats.avg_actions_per_user =
            static_cast<double>(stage.stats.interactions) / static_cast<double>(stage.stats.users);
        stage.stats.avg_actions_per_item =
            static_cast<double>(stage.stats.interactions) / static_cast<double>(stage.stats.items);
        out.stages.push_back(std::move(stage));
    }
    return out;
}

std::vector<Sample> build_samples(const std::vector<Session>& sessions, i64 max_seq_len) {
    DF_CHECK(max_seq_len >= 1, "build_samples: max_seq_len must be >= 1");
    std::vector<Sample> out;
    for (const auto& s : sessions) {
        const i64 t_max = static_cast<i64>(s.items.size());
        for (i64 t = 1; t < t_max; ++t) {
            Sample smp;
            const i64 start = std::max<i64>(0, t - max_seq_len);
            smp.prefix.assign(s.items.begin() + start, s.items.begin() + t);
            smp.target = s.items[static_cast<size_t>(t)];
            out.push_back(std::move(smp));
        }
    }
    return out;
}

TrainValid split_train_valid(const std::vector<Session>& sessions, i64 max_seq_len, u64 seed) {
    const i64 n = static_cast<i64>(sessions.size());
    std::vector<i64> order(static_cast<size_t>(n));
    for (i64 i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    Rng rng(seed);
    for (i64 i = n - 1; i > 0; --i) {
        const i64 j = rng.uniform_int(i + 1);
        std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    const i64 n_valid = n >= 2 ? std::max<i64>(1, n / 10) : 0;
    std::vector<Session> train_sessions, valid_sessions;
    for (i64 i = 0; i < n; ++i) {
        const auto& s = sessions[static_cast<size_t>(order[static_cast<size_t>(i)])];
        if (i < n - n_valid)
            train_sessions.push_back(s);
        else
            valid_sessions.push_back(s);
    }
    TrainValid tv;
    tv.train = build_samples(train_sessions, max_seq_len);
    tv.valid = build_samples(valid_sessions, max_seq_len);
    return tv;
}

std::vector<Session> sessions_from_events(const std::vector<InteractionEvent>& events,
                                          const std::vector<std::string>& item_names) {
    constexpr i64 kUnknown = 1'000'000'000;
    std::unordered_map<std::string, i64> item_ids;
    for (size_t i = 1; i < item_names.size(); ++i) item_ids.emplace(item_names[i], static_cast<i64>(i));
    std::map<std::string, std::vector<const InteractionEvent*>> by_user;
    std::map<std::string, size_t> first_pos;
    for (size_t i = 0; i < events.size(); ++i) {
        auto& vec = by_user[events[i].user];
        if (vec.empty()) first_pos[events[i].user] = i;
        vec.push_back(&events[i]);
    }
    std::vector<std::pair<size_t, const std::string*>> order;
    for (const auto& [user, vec] : by_user) order.emplace_back(first_pos[user], &user);
    std::sort(order.begin(), order.end());
    std::vector<Session> out;
    i64 next_user = 0;
    for (const auto& [pos, user_ptr] : order) {
        auto vec = by_user[*user_ptr];
        std::stable_sort(vec.begin(), vec.end(),
                         [](const InteractionEvent* a, const InteractionEvent* b) { return a->timestamp < b->timestamp; });
        Session s;
        s.user = next_user++;
        for (const InteractionEvent* e : vec) {
            auto it = item_ids.find(e->item);
            s.items.push_back(it == item_ids.end() ? kUnknown : it->second);
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<Sample> filter_test(const std::vector<Sample>& samples, i64 known_vocab_items) {
    std::vector<Sample> out;
    for (const auto& s : samples) {
        if (s.target < 1 || s.target > known_vocab_items) continue;
        Sample kept;
        kept.target = s.target;
        for (i64 it : s.prefix)
            if (it >= 1 && it <= known_vocab_items) kept.prefix.push_back(it);
        if (kept.prefix.empty()) continue;
        out.push_back(std::move(kept));
    }
    return out;
}

}  // namespace driftforge
