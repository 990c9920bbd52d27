// SPDX-License-Identifier: Apache-2.0
#include "driftforge/tensor.hpp"

#include <cmath>
#include <sstream>

namespace driftforge {

i64 shape_numel(const std::vector<i64>& shape) {
    i64 n = 1;
    for (i64 d : shape) {
        DF_CHECK(d > 0, "tensor dimension must be positive, got " << d);
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<i64> shape)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), 0.0) {}

Tensor::Tensor(std::vector<i64> shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    DF_CHECK(shape_numel(shape_) == static_cast<i64>(data_.size()),
             "tensor data length " << data_.size() << " does not match shape " << shape_str());
}

Tensor Tensor::full(std::vector<i64> shape, double value) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = value;
    return t;
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::row(std::initializer_list<double> values) {
    return Tensor({static_cast<i64>(values.size())}, std::vector<double>(values));
}

std::string Tensor::shape_str() const {
    std::ostringstream oss;
    oss << "[";
    for (size_t i = 0; i < shape_.size(); ++i) oss << (i ? "x" : "") << shape_[i];
    oss << "]";
    return oss.str();
}

void Tensor::check_finite(const std::string& what) const {
    for (size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
            std::ostringstream oss;
            oss << "non-finite value " << data_[i] << " in tensor '" << what << "' " << shape_str() << " at flat index "
                << i;
            throw std::runtime_error(oss.str());
        }
    }
}

}  // namespace driftforge
