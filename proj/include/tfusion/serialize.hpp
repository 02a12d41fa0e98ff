#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tfusion/tensor.hpp"

namespace tfusion {

// Flat weight container, magic "TFLW1". Per parameter: name length (u64 LE),
// name bytes, rank (u64 LE), dims (u64 LE each), values (f32 LE). Records run
// to end of file in insertion order; round trip is bit-exact.

namespace detail {

inline void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f32(std::ostream& os, float v) {
    const uint32_t u = std::bit_cast<uint32_t>(v);
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline bool get_u64(std::istream& is, uint64_t& v) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) return false;
    v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return true;
}

inline bool get_f32(std::istream& is, float& v) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
    uint32_t u = 0;
    for (int i = 0; i < 4; ++i) u |= static_cast<uint32_t>(b[i]) << (8 * i);
    v = std::bit_cast<float>(u);
    return true;
}

}  // namespace detail

using NamedTensorList = std::vector<std::pair<std::string, Tensor>>;

inline void save_weights(const std::string& path, const NamedTensorList& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_weights: cannot open " + path);
    os.write("TFLW1", 5);
    for (const auto& [name, t] : params) {
        detail::put_u64(os, name.size());
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::put_u64(os, static_cast<uint64_t>(t.rank()));
        for (int64_t d : t.shape) detail::put_u64(os, static_cast<uint64_t>(d));
        for (int64_t i = 0; i < t.numel(); ++i) detail::put_f32(os, t[i]);
    }
    if (!os) throw std::runtime_error("save_weights: write failed for " + path);
}

inline NamedTensorList load_weights(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_weights: cannot open " + path);
    char magic[5];
    if (!is.read(magic, 5) || std::string(magic, 5) != "TFLW1")
        throw std::runtime_error("load_weights: bad magic in " + path);
    NamedTensorList out;
    uint64_t name_len = 0;
    while (detail::get_u64(is, name_len)) {
        std::string name(name_len, '\0');
        if (!is.read(name.data(), static_cast<std::streamsize>(name_len)))
            throw std::runtime_error("load_weights: truncated name in " + path);
        uint64_t rank = 0;
        if (!detail::get_u64(is, rank)) throw std::runtime_error("load_weights: truncated rank in " + path);
        std::vector<int64_t> shape(rank);
        for (uint64_t i = 0; i < rank; ++i) {
            uint64_t d = 0;
            if (!detail::get_u64(is, d)) throw std::runtime_error("load_weights: truncated dims in " + path);
            shape[i] = static_cast<int64_t>(d);
        }
        Tensor t = Tensor::zeros(shape);
        for (int64_t i = 0; i < t.numel(); ++i)
            if (!detail::get_f32(is, (*t.data)[static_cast<size_t>(i)]))
                throw std::runtime_error("load_weights: truncated values in " + path);
        out.emplace_back(std::move(name), std::move(t));
    }
    return out;
}

}  // namespace tfusion
