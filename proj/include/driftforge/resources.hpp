// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>

#include "driftforge/common.hpp"

namespace driftforge {

// Process peak resident set size in bytes (high-water mark).
i64 peak_rss_bytes();

// Current resident set size in bytes.
i64 current_rss_bytes();

struct ResourceSample {
    double wall_seconds = 0.0;
    i64 peak_rss_bytes = 0;
};

class ResourceTracker {
public:
    ResourceTracker() : start_(std::chrono::steady_clock::now()) {}
    ResourceSample sample() const {
        ResourceSample s;
        s.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        s.peak_rss_bytes = driftforge::peak_rss_bytes();
        return s;
    }

private:
    std::chrono::steady_clock::time_point start_;
};

}  // namespace driftforge
