#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>

#include "keyfort/bytes.hpp"
#include "keyfort/result.hpp"
#include "keyfort/wire.hpp"

namespace keyfort {

// Software identifier, common across versions of one enclave application.
// Opaque bytes, at most 32, compared bytewise.
struct SoftwareId {
    Bytes id;

    SoftwareId() = default;
    explicit SoftwareId(Bytes b) : id(std::move(b)) {}
    explicit SoftwareId(std::string_view s) : id(to_bytes(s)) {}

    bool valid() const { return !id.empty() && id.size() <= 32; }
    auto operator<=>(const SoftwareId&) const = default;
};

struct Version {
    uint64_t v = 0;
    auto operator<=>(const Version&) const = default;
};

// Digest of an enclave binary.
struct Measurement {
    Digest32 m{};
    auto operator<=>(const Measurement&) const = default;
};

using EnclaveId = uint64_t;

// Identifier standing in for a party's public key; the paired secret is
// held by the party itself.
struct PublicKeyId {
    Digest32 id{};
    auto operator<=>(const PublicKeyId&) const = default;
};

enum class Phase : uint8_t { Created, Running, Paused, Destroyed };

const char* to_string(Phase p);

struct EnclaveRecord {
    EnclaveId eid = 0;
    SoftwareId id;
    Version v;
    uint64_t clone_bound = 1;  // allowed concurrent instances, >= 1
    Measurement m;
    Ticks t_e = 0;        // accumulated in-enclave runtime
    Ticks t_e_entry = 0;  // timestamp of last entry
    bool resume_ok = true;
    Phase phase = Phase::Created;

    bool live() const { return phase != Phase::Destroyed; }
};

enum class TargetOp : uint8_t { Update, MigrationSource, MigrationDestination };

const char* to_string(TargetOp op);

// One active update or migration per software id per monitor.
struct MigrationRecord {
    SoftwareId id;
    TargetOp target_op = TargetOp::Update;
    EnclaveId eid_s = 0;
    EnclaveId eid_d = 0;
    Measurement m_s;
    Measurement m_d;
    PublicKeyId pk_s;
    PublicKeyId pk_d;
    std::optional<Digest32> seed;  // absent until the first transport-key request
    Ticks deadline = 0;            // migration timeout; repurposed as the ack
                                   // timeout once the source is destroyed

    // Commit bookkeeping. The source keeps its record after destroying the
    // source enclave so a crash cannot lose the in-flight commit; these
    // fields are persisted (the seed never is).
    bool source_destroyed = false;
    uint32_t resends_left = 0;
    PublicKeyId initiator;  // where completion, timeout and alarm notices go

    // Volatile, not persisted: set on the destination once it has asked the
    // source to destroy, so a stray destruction ack cannot commit early.
    bool awaiting_destroy_ack = false;
};

struct MonotonicCounter {
    uint64_t ctr_id = 0;
    uint64_t value = 0;
    SoftwareId owner;
};

struct VersionEntry {
    SoftwareId id;
    Version v_latest;
};

struct AttestationReport {
    Measurement m;
    SoftwareId id;
    Version v;
    uint64_t clone_bound = 1;
    Digest32 sig{};
};

// Encrypted, authenticated enclave state. A counter value is embedded in
// the plaintext before encryption and is only recoverable after a
// successful open.
struct SealedBlob {
    Bytes ciphertext;
    Mac16 tag{};
};

Result<EnclaveRecord> new_enclave_record(const SoftwareId& id, Version v, uint64_t clone_bound,
                                         const Measurement& m, EnclaveId eid, Ticks now);

// Canonical encodings (field order as declared). Persistence masks the
// migration seed: it is key material and never leaves runtime memory.
void encode(wire::Writer& w, const SoftwareId& v);
void encode(wire::Writer& w, const Measurement& v);
void encode(wire::Writer& w, const PublicKeyId& v);
void encode(wire::Writer& w, const EnclaveRecord& v);
void encode(wire::Writer& w, const MigrationRecord& v);
void encode(wire::Writer& w, const MonotonicCounter& v);
void encode(wire::Writer& w, const VersionEntry& v);
void encode(wire::Writer& w, const AttestationReport& v);
void encode(wire::Writer& w, const SealedBlob& v);

bool decode(wire::Reader& r, SoftwareId& v);
bool decode(wire::Reader& r, Measurement& v);
bool decode(wire::Reader& r, PublicKeyId& v);
bool decode(wire::Reader& r, EnclaveRecord& v);
bool decode(wire::Reader& r, MigrationRecord& v);
bool decode(wire::Reader& r, MonotonicCounter& v);
bool decode(wire::Reader& r, VersionEntry& v);
bool decode(wire::Reader& r, AttestationReport& v);
bool decode(wire::Reader& r, SealedBlob& v);

template <typename T>
Bytes canonical(const T& v) {
    wire::Writer w;
    encode(w, v);
    return w.take();
}

}  // namespace keyfort
