#pragma once

#include <random>

#include "keyfort/bytes.hpp"
#include "keyfort/core.hpp"
#include "keyfort/result.hpp"

namespace keyfort::crypto {

// 32-byte symmetric secret. Never serialized into traces or persisted
// stores in cleartext.
struct KeyMaterial {
    Digest32 bytes{};
    auto operator<=>(const KeyMaterial&) const = default;
};

Digest32 digest(const uint8_t* data, size_t n);
Digest32 digest(const Bytes& b);

// Counter-mode expansion of a 32-byte seed to arbitrary length.
Bytes xof(const Digest32& seed, size_t out_len);

Result<Measurement> measure(const Bytes& binary);

// k = H(s || m_S || m_D). Order-sensitive: swapping the measurements
// changes the key.
Result<KeyMaterial> derive_transport_key(const Digest32& seed, const Measurement& m_s,
                                         const Measurement& m_d);

// Sealing key bound to device and enclave identity.
KeyMaterial derive_seal_key(const KeyMaterial& device_key, const Measurement& m);

// Encrypt-then-MAC. Deterministic for a given (k, plaintext, aad); keys are
// session-fresh by construction so no nonce is carried.
struct AeadResult {
    Bytes ciphertext;
    Mac16 tag;
};
AeadResult aead_seal(const KeyMaterial& k, const Bytes& plaintext, const Bytes& aad);
Result<Bytes> aead_open(const KeyMaterial& k, const Bytes& ciphertext, const Mac16& tag,
                        const Bytes& aad);

Mac16 mac_sign(const KeyMaterial& k, const Bytes& msg);
bool mac_verify(const KeyMaterial& k, const Bytes& msg, const Mac16& tag);

Digest32 sign32(const KeyMaterial& k, const Bytes& msg);
bool verify32(const KeyMaterial& k, const Bytes& msg, const Digest32& sig);

AttestationReport attest_sign(const KeyMaterial& device_key, const Measurement& m,
                              const SoftwareId& id, Version v, uint64_t clone_bound);
bool attest_verify(const KeyMaterial& device_key, const AttestationReport& report);

// Deterministic byte source for the simulation; one seeded instance per
// component keeps runs reproducible.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }
    uint64_t below(uint64_t bound);  // uniform in [0, bound)
    Digest32 next_digest32();
    Bytes next_bytes(size_t n);
    KeyMaterial next_key();

private:
    std::mt19937_64 gen_;
};

}  // namespace keyfort::crypto
