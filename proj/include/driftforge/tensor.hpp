// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "driftforge/common.hpp"

namespace driftforge {

// Dense row-major tensor of 64-bit reals. Values are immutable once a
// tensor leaves the operation that produced it; public operations must
// leave every element finite.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<i64> shape);
    Tensor(std::vector<i64> shape, std::vector<double> data);
    static Tensor full(std::vector<i64> shape, double value);
    static Tensor scalar(double value);
    static Tensor row(std::initializer_list<double> values);

    const std::vector<i64>& shape() const { return shape_; }
    i64 rank() const { return static_cast<i64>(shape_.size()); }
    i64 dim(i64 i) const { return shape_[static_cast<size_t>(i)]; }
    i64 numel() const { return static_cast<i64>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<const double> view() const { return data_; }
    std::span<double> view() { return data_; }

    double& at(i64 i) { return data_[static_cast<size_t>(i)]; }
    double at(i64 i) const { return data_[static_cast<size_t>(i)]; }
    double& at2(i64 r, i64 c) { return data_[static_cast<size_t>(r * dim(1) + c)]; }
    double at2(i64 r, i64 c) const { return data_[static_cast<size_t>(r * dim(1) + c)]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    std::string shape_str() const;

    // Throws naming `what` if any element is NaN or infinite.
    void check_finite(const std::string& what) const;

private:
    std::vector<i64> shape_;
    std::vector<double> data_;
};

i64 shape_numel(const std::vector<i64>& shape);

}  // namespace driftforge
