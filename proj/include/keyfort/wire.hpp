#pragma once

#include <array>
#include <cstring>
#include <optional>
#include <string>

#include "keyfort/bytes.hpp"

namespace keyfort::wire {

// Canonical big-endian, length-prefixed encoding. Every persisted or
// transmitted structure goes through these two classes so equal values
// always produce identical bytes.

class Writer {
public:
    void u8(uint8_t v) { buf_.push_back(v); }
    void u32(uint32_t v) {
        for (int i = 3; i >= 0; --i) buf_.push_back(uint8_t(v >> (8 * i)));
    }
    void u64(uint64_t v) {
        for (int i = 7; i >= 0; --i) buf_.push_back(uint8_t(v >> (8 * i)));
    }
    // u32 length prefix + raw bytes
    void bytes(const Bytes& b) {
        u32(uint32_t(b.size()));
        buf_.insert(buf_.end(), b.begin(), b.end());
    }
    void str(const std::string& s) {
        u32(uint32_t(s.size()));
        buf_.insert(buf_.end(), s.begin(), s.end());
    }
    template <size_t N>
    void fixed(const std::array<uint8_t, N>& a) {
        buf_.insert(buf_.end(), a.begin(), a.end());
    }
    void raw(const Bytes& b) { buf_.insert(buf_.end(), b.begin(), b.end()); }

    const Bytes& data() const { return buf_; }
    Bytes take() { return std::move(buf_); }

private:
    Bytes buf_;
};

class Reader {
public:
    explicit Reader(const Bytes& b) : p_(b.data()), n_(b.size()) {}
    Reader(const uint8_t* p, size_t n) : p_(p), n_(n) {}

    bool failed() const { return failed_; }
    bool done() const { return pos_ == n_; }
    size_t remaining() const { return n_ - pos_; }

    uint8_t u8() {
        if (!need(1)) return 0;
        return p_[pos_++];
    }
    uint32_t u32() {
        if (!need(4)) return 0;
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = (v << 8) | p_[pos_++];
        return v;
    }
    uint64_t u64() {
        if (!need(8)) return 0;
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v = (v << 8) | p_[pos_++];
        return v;
    }
    Bytes bytes() {
        uint32_t len = u32();
        if (!need(len)) return {};
        Bytes out(p_ + pos_, p_ + pos_ + len);
        pos_ += len;
        return out;
    }
    std::string str() {
        Bytes b = bytes();
        return std::string(b.begin(), b.end());
    }
    template <size_t N>
    std::array<uint8_t, N> fixed() {
        std::array<uint8_t, N> out{};
        if (!need(N)) return out;
        std::memcpy(out.data(), p_ + pos_, N);
        pos_ += N;
        return out;
    }

private:
    bool need(size_t k) {
        if (failed_ || n_ - pos_ < k) {
            failed_ = true;
            return false;
        }
        return true;
    }

    const uint8_t* p_;
    size_t n_;
    size_t pos_ = 0;
    bool failed_ = false;
};

}  // namespace keyfort::wire
