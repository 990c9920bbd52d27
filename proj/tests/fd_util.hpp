// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "driftforge/tensor.hpp"

namespace driftforge::testutil {

// Central finite differences over every element of every parameter tensor.
// `eval` must rebuild the computation from scratch for the given parameter
// values and return the scalar loss. Returns the max relative error
// against `analytic`, with denominator max(|a|, |fd|, floor).
inline double max_fd_rel_error(std::vector<Tensor> params,
                               const std::function<double(const std::vector<Tensor>&)>& eval,
                               const std::vector<Tensor>& analytic, double h = 1e-5, double floor = 1e-8) {
    double worst = 0.0;
    for (size_t p = 0; p < params.size(); ++p) {
        for (i64 i = 0; i < params[p].numel(); ++i) {
            const double orig = params[p].at(i);
            params[p].at(i) = orig + h;
            const double up = eval(params);
            params[p].at(i) = orig - h;
            const double down = eval(params);
            params[p].at(i) = orig;
            const double fd = (up - down) / (2.0 * h);
            const double a = analytic[p].at(i);
            const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor});
            if (rel > worst) worst = rel;
        }
    }
    return worst;
}

}  // namespace driftforge::testutil
