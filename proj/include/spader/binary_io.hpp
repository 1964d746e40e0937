#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>

namespace spader {

// Little-endian encoders, independent of host byte order.

template <class UInt>
void write_le(std::ostream& out, UInt value) {
    char bytes[sizeof(UInt)];
    for (std::size_t i = 0; i < sizeof(UInt); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
    out.write(bytes, sizeof(UInt));
}

template <class UInt>
UInt read_le(std::istream& in) {
    unsigned char bytes[sizeof(UInt)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(UInt))) {
        throw std::runtime_error("unexpected end of binary stream");
    }
    UInt value = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) value |= static_cast<UInt>(bytes[i]) << (8 * i);
    return value;
}

// Bulk transfers in chunks; byte swapping only on big-endian hosts.

inline void write_f64_le(std::ostream& out, std::span<const double> values) {
    constexpr std::size_t kChunk = 4096;
    std::uint64_t buf[kChunk];
    for (std::size_t start = 0; start < values.size(); start += kChunk) {
        const std::size_t n = std::min(kChunk, values.size() - start);
        for (std::size_t i = 0; i < n; ++i) {
            buf[i] = std::bit_cast<std::uint64_t>(values[start + i]);
            if constexpr (std::endian::native == std::endian::big) buf[i] = __builtin_bswap64(buf[i]);
        }
        out.write(reinterpret_cast<const char*>(buf), static_cast<std::streamsize>(n * sizeof(double)));
    }
}

inline void read_f64_le(std::istream& in, std::span<double> values) {
    constexpr std::size_t kChunk = 4096;
    std::uint64_t buf[kChunk];
    for (std::size_t start = 0; start < values.size(); start += kChunk) {
        const std::size_t n = std::min(kChunk, values.size() - start);
        if (!in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(n * sizeof(double)))) {
            throw std::runtime_error("unexpected end of binary stream");
        }
        for (std::size_t i = 0; i < n; ++i) {
            if constexpr (std::endian::native == std::endian::big) buf[i] = __builtin_bswap64(buf[i]);
            values[start + i] = std::bit_cast<double>(buf[i]);
        }
    }
}

}  // namespace spader
