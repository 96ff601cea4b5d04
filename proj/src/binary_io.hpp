#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "resobj/errors.hpp"

namespace resobj::detail {

static_assert(std::endian::native == std::endian::little, "payload I/O assumes a little-endian host");

inline void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_f32(std::ostream& os, double v) {
    const float f = static_cast<float>(v);
    os.write(reinterpret_cast<const char*>(&f), sizeof f);
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
    std::uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
        throw FormatError(std::string("truncated file while reading ") + what);
    }
    return v;
}

inline double read_f32(std::istream& is, const char* what) {
    float f = 0.0f;
    if (!is.read(reinterpret_cast<char*>(&f), sizeof f)) {
        throw FormatError(std::string("truncated file while reading ") + what);
    }
    return static_cast<double>(f);
}

inline std::string read_bytes(std::istream& is, std::size_t n, const char* what) {
    std::string s(n, '\0');
    if (!is.read(s.data(), static_cast<std::streamsize>(n))) {
        throw FormatError(std::string("truncated file while reading ") + what);
    }
    return s;
}

}  // namespace resobj::detail
