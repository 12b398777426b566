#include "keyfort/bytes.hpp"

namespace keyfort {

static const char* kHexDigits = "0123456789abcdef";

std::string hex(const uint8_t* data, size_t n) {
    std::string out;
    out.reserve(n * 2);
    for (size_t i = 0; i < n; ++i) {
        out.push_back(kHexDigits[data[i] >> 4]);
        out.push_back(kHexDigits[data[i] & 0xf]);
    }
    return out;
}

static int nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

bool from_hex(std::string_view s, Bytes& out) {
    if (s.size() % 2 != 0) return false;
    out.clear();
    out.reserve(s.size() / 2);
    for (size_t i = 0; i < s.size(); i += 2) {
        int h = nibble(s[i]);
        int l = nibble(s[i + 1]);
        if (h < 0 || l < 0) return false;
        out.push_back(uint8_t((h << 4) | l));
    }
    return true;
}

}  // namespace keyfort
