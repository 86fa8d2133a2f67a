#pragma once

#include "grasp/common.hpp"

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

namespace grasp::binio {

static_assert(std::endian::native == std::endian::little, "artifact formats assume a little-endian host");

template <typename T>
void write(std::ostream& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

inline void write_bytes(std::ostream& out, const void* data, std::size_t n) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::istream& in, void* data, std::size_t n, const char* what) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        throw IoError(std::string("truncated file while reading ") + what);
    }
}

template <typename T>
T read(std::istream& in, const char* what) {
    T value{};
    read_bytes(in, &value, sizeof(T), what);
    return value;
}

inline void expect_magic(std::istream& in, const std::string& magic) {
    std::string got(magic.size(), '\0');
    read_bytes(in, got.data(), got.size(), "magic");
    if (got != magic) {
        throw IoError("bad magic: expected " + magic);
    }
}

}  // namespace grasp::binio
