#pragma once

// Little-endian helpers shared by the packed-frame, embedding and checkpoint
// formats.

#include "forge/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

namespace forge::detail {

static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");

inline void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_f32(std::ostream& out, float v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline std::uint32_t read_u32(std::istream& in, const std::string& what) {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("truncated " + what);
    return v;
}

inline float read_f32(std::istream& in, const std::string& what) {
    float v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("truncated " + what);
    return v;
}

inline void expect_magic(std::istream& in, const char (&magic)[5], const std::string& what) {
    char buf[4];
    if (!in.read(buf, 4) || std::memcmp(buf, magic, 4) != 0) throw IoError("bad magic in " + what);
}

}  // namespace forge::detail
