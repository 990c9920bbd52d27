// SPDX-License-Identifier: Apache-2.0
#include "driftforge/serialize.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <fstream>

namespace driftforge {

namespace {

template <typename T>
void put(std::vector<unsigned char>& out, const T& v) {
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(const std::vector<unsigned char>& in, size_t& pos) {
    DF_CHECK(pos + sizeof(T) <= in.size(), "decode: truncated archive");
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

void put_string(std::vector<unsigned char>& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

std::string get_string(const std::vector<unsigned char>& in, size_t& pos) {
    const auto len = get<std::uint32_t>(in, pos);
    DF_CHECK(pos + len <= in.size(), "decode: truncated string");
    std::string s(reinterpret_cast<const char*>(in.data() + pos), len);
    pos += len;
    return s;
}

}  // namespace

std::vector<unsigned char> encode_records(const std::string& magic, const std::map<std::string, double>& meta,
                                          const NamedTensors& records) {
    std::vector<unsigned char> out;
    out.insert(out.end(), magic.begin(), magic.end());
    out.push_back('\n');
    put<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
    for (const auto& [k, v] : meta) {
        put_string(out, k);
        put<double>(out, v);
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(records.size()));
    for (const auto& [name, t] : records) {
        put_string(out, name);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (i64 d : t.shape()) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
        const auto* p = reinterpret_cast<const unsigned char*>(t.data());
        out.insert(out.end(), p, p + sizeof(double) * static_cast<size_t>(t.numel()));
    }
    return out;
}

DecodedRecords decode_records(const std::vector<unsigned char>& bytes, const std::string& expected_magic) {
    size_t pos = 0;
    std::string magic;
    while (pos < bytes.size() && bytes[pos] != '\n') magic.push_back(static_cast<char>(bytes[pos++]));
    DF_CHECK(pos < bytes.size(), "decode: missing header terminator");
    ++pos;
    DF_CHECK(magic == expected_magic, "decode: header '" << magic << "' does not match '" << expected_magic << "'");
    DecodedRecords out;
    const auto n_meta = get<std::uint32_t>(bytes, pos);
    for (std::uint32_t i = 0; i < n_meta; ++i) {
        std::string k = get_string(bytes, pos);
        out.meta[k] = get<double>(bytes, pos);
    }
    const auto n_rec = get<std::uint32_t>(bytes, pos);
    for (std::uint32_t i = 0; i < n_rec; ++i) {
        std::string name = get_string(bytes, pos);
        const auto rank = get<std::uint32_t>(bytes, pos);
        std::vector<i64> shape;
        for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<i64>(get<std::uint64_t>(bytes, pos)));
        const i64 n = shape_numel(shape);
        std::vector<double> data(static_cast<size_t>(n));
        DF_CHECK(pos + sizeof(double) * data.size() <= bytes.size(), "decode: truncated tensor data");
        std::memcpy(data.data(), bytes.data() + pos, sizeof(double) * data.size());
        pos += sizeof(double) * data.size();
        out.records.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    DF_CHECK(pos == bytes.size(), "decode: trailing bytes in archive");
    return out;
}

void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    DF_CHECK(out.good(), "cannot open '" << path << "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    DF_CHECK(out.good(), "short write to '" << path << "'");
}

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    DF_CHECK(in.good(), "cannot open '" << path << "'");
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string sha256_hex(const std::vector<unsigned char>& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    DF_CHECK(EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) == 1, "sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

}  // namespace driftforge
