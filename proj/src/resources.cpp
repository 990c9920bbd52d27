// SPDX-License-Identifier: Apache-2.0
#include "driftforge/resources.hpp"

#include <sys/resource.h>

#include <fstream>
#include <string>

namespace driftforge {

i64 peak_rss_bytes() {
    struct rusage usage {};
    if (getrusage(RUSAGE_SELF, &usage) != 0) return 0;
    // ru_maxrss is kilobytes on Linux
    return static_cast<i64>(usage.ru_maxrss) * 1024;
}

i64 current_rss_bytes() {
    std::ifstream in("/proc/self/status");
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("VmRSS:", 0) == 0) {
            i64 kb = 0;
            for (char c : line)
                if (c >= '0' && c <= '9') kb = kb * 10 + (c - '0');
            return kb * 1024;
        }
    }
    return 0;
}

}  // namespace driftforge
