// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <sstream>
#include <string>

namespace driftforge {

using i64 = std::int64_t;
using u64 = std::uint64_t;

// Runtime contract check; throws with the formatted message.
#define DF_CHECK(cond, msg)                                      \
    do {                                                         \
        if (!(cond)) {                                           \
            std::ostringstream oss__;                            \
            oss__ << msg;                                        \
            throw std::runtime_error(oss__.str());               \
        }                                                        \
    } while (0)

}  // namespace driftforge
