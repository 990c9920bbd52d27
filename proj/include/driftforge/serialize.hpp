// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "driftforge/tensor.hpp"

namespace driftforge {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Flat little-endian record archive: a magic header line, scalar metadata,
// then (name, shape, raw f64 values) records in order.
std::vector<unsigned char> encode_records(const std::string& magic, const std::map<std::string, double>& meta,
                                          const NamedTensors& records);

struct DecodedRecords {
    std::map<std::string, double> meta;
    NamedTensors records;
};

DecodedRecords decode_records(const std::vector<unsigned char>& bytes, const std::string& expected_magic);

void write_file(const std::string& path, const std::vector<unsigned char>& bytes);
std::vector<unsigned char> read_file(const std::string& path);

std::string sha256_hex(const std::vector<unsigned char>& bytes);

}  // namespace driftforge
