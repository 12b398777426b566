#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace keyfort {

using Bytes = std::vector<uint8_t>;
using Digest32 = std::array<uint8_t, 32>;
using Mac16 = std::array<uint8_t, 16>;
using Ticks = uint64_t;

inline Bytes to_bytes(std::string_view s) {
    return Bytes(s.begin(), s.end());
}

inline std::string to_string(const Bytes& b) {
    return std::string(b.begin(), b.end());
}

std::string hex(const uint8_t* data, size_t n);

inline std::string hex(const Bytes& b) { return hex(b.data(), b.size()); }

template <size_t N>
std::string hex(const std::array<uint8_t, N>& a) {
    return hex(a.data(), N);
}

// Returns false on odd length or non-hex characters.
bool from_hex(std::string_view s, Bytes& out);

}  // namespace keyfort
