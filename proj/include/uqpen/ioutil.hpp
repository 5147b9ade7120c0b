#pragma once

#include "uqpen/errors.hpp"

#include <charconv>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

namespace uqpen {

// Shortest decimal representation that round-trips the double exactly.
inline std::string format_double(double value) {
    char buf[32];
    auto result = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, result.ptr);
}

inline double parse_double(std::string_view text, const std::string& context) {
    double value = 0.0;
    auto result = std::from_chars(text.data(), text.data() + text.size(), value);
    if (result.ec != std::errc() || result.ptr != text.data() + text.size()) {
        throw ParseError(context + ": invalid number '" + std::string(text) + "'");
    }
    return value;
}

inline long parse_long(std::string_view text, const std::string& context) {
    long value = 0;
    auto result = std::from_chars(text.data(), text.data() + text.size(), value);
    if (result.ec != std::errc() || result.ptr != text.data() + text.size()) {
        throw ParseError(context + ": invalid integer '" + std::string(text) + "'");
    }
    return value;
}

// Little-endian binary primitives for artifact files.

inline void write_u32le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) {
        b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    }
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64le(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) {
        b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    }
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline void write_f64le(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64le(out, bits);
}

inline std::uint32_t read_u32le(std::istream& in, const std::string& context) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw FormatError(context + ": truncated file");
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    }
    return v;
}

inline std::uint64_t read_u64le(std::istream& in, const std::string& context) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) {
        throw FormatError(context + ": truncated file");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    }
    return v;
}

inline double read_f64le(std::istream& in, const std::string& context) {
    std::uint64_t bits = read_u64le(in, context);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

} // namespace uqpen
