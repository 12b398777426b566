#include "keyfort/crypto.hpp"

#include <openssl/hmac.h>
#include <openssl/sha.h>

#include <cstring>

#include "keyfort/wire.hpp"

namespace keyfort::crypto {

Digest32 digest(const uint8_t* data, size_t n) {
    Digest32 out{};
    SHA256(data, n, out.data());
    return out;
}

Digest32 digest(const Bytes& b) { return digest(b.data(), b.size()); }

static Digest32 hmac32(const Digest32& key, const uint8_t* data, size_t n) {
    Digest32 out{};
    unsigned int len = 0;
    HMAC(EVP_sha256(), key.data(), int(key.size()), data, n, out.data(), &len);
    return out;
}

Bytes xof(const Digest32& seed, size_t out_len) {
    Bytes out;
    out.reserve(out_len);
    uint64_t block = 0;
    while (out.size() < out_len) {
        wire::Writer w;
        w.fixed(seed);
        w.u64(block++);
        Digest32 d = digest(w.data());
        size_t take = std::min(d.size(), out_len - out.size());
        out.insert(out.end(), d.begin(), d.begin() + take);
    }
    return out;
}

Result<Measurement> measure(const Bytes& binary) {
    if (binary.empty()) return Err::EmptyBinary;
    return Measurement{digest(binary)};
}

Result<KeyMaterial> derive_transport_key(const Digest32& seed, const Measurement& m_s,
                                         const Measurement& m_d) {
    wire::Writer w;
    w.fixed(seed);
    w.fixed(m_s.m);
    w.fixed(m_d.m);
    return KeyMaterial{digest(w.data())};
}

KeyMaterial derive_seal_key(const KeyMaterial& device_key, const Measurement& m) {
    wire::Writer w;
    w.fixed(device_key.bytes);
    w.str("seal");
    w.fixed(m.m);
    return KeyMaterial{digest(w.data())};
}

static KeyMaterial subkey(const KeyMaterial& k, const char* label) {
    wire::Writer w;
    w.fixed(k.bytes);
    w.str(label);
    return KeyMaterial{digest(w.data())};
}

AeadResult aead_seal(const KeyMaterial& k, const Bytes& plaintext, const Bytes& aad) {
    KeyMaterial ke = subkey(k, "enc");
    KeyMaterial km = subkey(k, "mac");
    Bytes stream = xof(ke.bytes, plaintext.size());
    Bytes c(plaintext.size());
    for (size_t i = 0; i < plaintext.size(); ++i) c[i] = plaintext[i] ^ stream[i];

    wire::Writer cover;
    cover.bytes(aad);
    cover.bytes(c);
    Digest32 full = hmac32(km.bytes, cover.data().data(), cover.data().size());
    Mac16 tag{};
    std::memcpy(tag.data(), full.data(), tag.size());
    return AeadResult{std::move(c), tag};
}

Result<Bytes> aead_open(const KeyMaterial& k, const Bytes& ciphertext, const Mac16& tag,
                        const Bytes& aad) {
    KeyMaterial ke = subkey(k, "enc");
    KeyMaterial km = subkey(k, "mac");

    wire::Writer cover;
    cover.bytes(aad);
    cover.bytes(ciphertext);
    Digest32 full = hmac32(km.bytes, cover.data().data(), cover.data().size());
    if (std::memcmp(full.data(), tag.data(), tag.size()) != 0) return Err::AuthFailure;

    Bytes stream = xof(ke.bytes, ciphertext.size());
    Bytes p(ciphertext.size());
    for (size_t i = 0; i < ciphertext.size(); ++i) p[i] = ciphertext[i] ^ stream[i];
    return p;
}

Mac16 mac_sign(const KeyMaterial& k, const Bytes& msg) {
    Digest32 full = hmac32(k.bytes, msg.data(), msg.size());
    Mac16 tag{};
    std::memcpy(tag.data(), full.data(), tag.size());
    return tag;
}

bool mac_verify(const KeyMaterial& k, const Bytes& msg, const Mac16& tag) {
    Mac16 expect = mac_sign(k, msg);
    return std::memcmp(expect.data(), tag.data(), tag.size()) == 0;
}

Digest32 sign32(const KeyMaterial& k, const Bytes& msg) {
    return hmac32(k.bytes, msg.data(), msg.size());
}

bool verify32(const KeyMaterial& k, const Bytes& msg, const Digest32& sig) {
    Digest32 expect = sign32(k, msg);
    return std::memcmp(expect.data(), sig.data(), sig.size()) == 0;
}

static Bytes report_cover(const Measurement& m, const SoftwareId& id, Version v,
                          uint64_t clone_bound) {
    wire::Writer w;
    w.fixed(m.m);
    w.bytes(id.id);
    w.u64(v.v);
    w.u64(clone_bound);
    return w.take();
}

AttestationReport attest_sign(const KeyMaterial& device_key, const Measurement& m,
                              const SoftwareId& id, Version v, uint64_t clone_bound) {
    AttestationReport r;
    r.m = m;
    r.id = id;
    r.v = v;
    r.clone_bound = clone_bound;
    r.sig = sign32(device_key, report_cover(m, id, v, clone_bound));
    return r;
}

bool attest_verify(const KeyMaterial& device_key, const AttestationReport& report) {
    return verify32(device_key, report_cover(report.m, report.id, report.v, report.clone_bound),
                    report.sig);
}

uint64_t Rng::below(uint64_t bound) {
    if (bound == 0) return 0;
    return next_u64() % bound;
}

Digest32 Rng::next_digest32() {
    Digest32 out{};
    for (size_t i = 0; i < out.size(); i += 8) {
        uint64_t v = next_u64();
        for (size_t j = 0; j < 8; ++j) out[i + j] = uint8_t(v >> (8 * j));
    }
    return out;
}

Bytes Rng::next_bytes(size_t n) {
    Bytes out(n);
    size_t i = 0;
    while (i < n) {
        uint64_t v = next_u64();
        for (size_t j = 0; j < 8 && i < n; ++j, ++i) out[i] = uint8_t(v >> (8 * j));
    }
    return out;
}

KeyMaterial Rng::next_key() { return KeyMaterial{next_digest32()}; }

}  // namespace keyfort::crypto
