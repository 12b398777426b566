#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "keyfort/bytes.hpp"
#include "keyfort/core.hpp"
#include "keyfort/crypto.hpp"
#include "keyfort/result.hpp"

namespace keyfort {

enum class MsgKind : uint8_t {
    ScheduleMigration,
    ScheduleUpdate,
    Init,
    InitOk,
    Ack,
    StateMigration,
    ExportState,
    StateBlob,
    ExecSwitch,
    ImportState,
    Commit,
    CommitForward,
    Ok4o,
    Ok4p,
    Ok4q,
    Ok5,
    TimeoutNotice,
    Alarm,
    Resume,
};

const char* to_string(MsgKind k);
std::optional<MsgKind> msg_kind_from_string(std::string_view s);

// State export/import requests and the state blob itself carry no channel
// MAC; they can only take effect against an active migration, and the blob
// is protected end to end by the transport key.
bool kind_is_authenticated(MsgKind k);

struct Envelope {
    uint64_t seq = 0;
    PublicKeyId src;
    PublicKeyId dst;
    MsgKind kind = MsgKind::Ack;
    Bytes payload;
    Mac16 tag{};
    Ticks deliver_at = 0;

    // kind || src || dst || payload, the MAC coverage
    Bytes auth_bytes() const;
    Bytes serialize() const;
    static std::optional<Envelope> deserialize(const Bytes& b);
};

enum class FaultAction : uint8_t { Drop, Delay, Duplicate, CorruptByte };

const char* to_string(FaultAction a);

struct MessageFault {
    MsgKind kind = MsgKind::Ack;
    int32_t occurrence = 0;  // 0-based send index within this kind; -1 = all
    FaultAction action = FaultAction::Drop;
    Ticks delay = 0;             // Delay only
    uint32_t corrupt_offset = 0; // CorruptByte only, index into serialized envelope
};

enum class CrashWhen : uint8_t { Before, After, MidCommit };

const char* to_string(CrashWhen w);

struct SmCrashPoint {
    int device = 0;
    uint32_t dispatch_index = 0;  // nth envelope dispatched to this monitor
    CrashWhen when = CrashWhen::Before;
};

struct EnclaveCrashPoint {
    int device = 0;
    EnclaveId eid = 0;
    uint32_t dispatch_index = 0;  // nth envelope dispatched to this enclave
};

struct FaultPlan {
    std::vector<MessageFault> messages;
    std::vector<SmCrashPoint> sm_crashes;
    std::vector<EnclaveCrashPoint> enclave_crashes;

    bool empty() const {
        return messages.empty() && sm_crashes.empty() && enclave_crashes.empty();
    }
};

// Discrete-event message fabric. FIFO per send order; reordering only ever
// comes from injected delays. Fault actions apply at enqueue time.
class Fabric {
public:
    explicit Fabric(Ticks hop_latency = 30) : hop_latency_(hop_latency) {}

    void set_fault_plan(const FaultPlan* plan) { plan_ = plan; }

    void register_pair_key(const PublicKeyId& a, const PublicKeyId& b, crypto::KeyMaterial k);
    std::optional<crypto::KeyMaterial> pair_key(const PublicKeyId& a, const PublicKeyId& b) const;

    // Current inter-monitor session seed; re-keyed per operation.
    void set_session_seed(const PublicKeyId& a, const PublicKeyId& b, Digest32 seed);
    std::optional<Digest32> session_seed(const PublicKeyId& a, const PublicKeyId& b) const;

    // MACs (when the kind calls for it), stamps latency, applies faults.
    // Returns the sequence number of the primary copy, or nullopt if dropped.
    std::optional<uint64_t> send(const PublicKeyId& src, const PublicKeyId& dst, MsgKind kind,
                                 Bytes payload, Ticks now);

    bool pending() const { return !queue_.empty(); }
    std::optional<Ticks> next_delivery() const;
    std::optional<Envelope> pop_due();  // minimal (deliver_at, seq)

    uint64_t sends_of(MsgKind k) const;

private:
    void enqueue(Envelope env);

    Ticks hop_latency_;
    const FaultPlan* plan_ = nullptr;
    uint64_t next_seq_ = 1;
    std::map<MsgKind, uint64_t> send_counts_;
    std::vector<Envelope> queue_;  // kept sorted lazily via pop scan
    std::map<std::pair<Digest32, Digest32>, crypto::KeyMaterial> pair_keys_;
    std::map<std::pair<Digest32, Digest32>, Digest32> session_seeds_;
};

// Payload codecs, one per message kind that carries fields.

struct PScheduleMigration { SoftwareId id; };
struct PScheduleUpdate { SoftwareId id; Version v; };
struct PInit { SoftwareId id; Version v; uint64_t clone_bound = 0; bool clone_bound_set = false; Bytes binary; };
struct PInitOk { bool ok = false; uint8_t err = 0; EnclaveId eid = 0; };
struct PAck { uint8_t op = 0; bool ok = false; uint8_t err = 0; };
struct PStateMigration { PublicKeyId pk_s, pk_d; EnclaveId eid_s = 0, eid_d = 0; Measurement m_s, m_d; };
struct PStateBlob { Bytes ciphertext; Mac16 tag{}; };
struct PExecSwitch { EnclaveId eid_s = 0, eid_d = 0; };
struct PCommit { EnclaveId eid = 0; };
struct PCommitForward { SoftwareId id; EnclaveId eid_s = 0, eid_d = 0; };
struct PWithId { SoftwareId id; };  // Ok4o, Ok4q, Ok5, Alarm
struct PTimeoutNotice { SoftwareId id; uint8_t role = 0; };
struct PResume { EnclaveId eid = 0; };

Bytes encode_payload(const PScheduleMigration& p);
Bytes encode_payload(const PScheduleUpdate& p);
Bytes encode_payload(const PInit& p);
Bytes encode_payload(const PInitOk& p);
Bytes encode_payload(const PAck& p);
Bytes encode_payload(const PStateMigration& p);
Bytes encode_payload(const PStateBlob& p);
Bytes encode_payload(const PExecSwitch& p);
Bytes encode_payload(const PCommit& p);
Bytes encode_payload(const PCommitForward& p);
Bytes encode_payload(const PWithId& p);
Bytes encode_payload(const PTimeoutNotice& p);
Bytes encode_payload(const PResume& p);

bool decode_payload(const Bytes& b, PScheduleMigration& p);
bool decode_payload(const Bytes& b, PScheduleUpdate& p);
bool decode_payload(const Bytes& b, PInit& p);
bool decode_payload(const Bytes& b, PInitOk& p);
bool decode_payload(const Bytes& b, PAck& p);
bool decode_payload(const Bytes& b, PStateMigration& p);
bool decode_payload(const Bytes& b, PStateBlob& p);
bool decode_payload(const Bytes& b, PExecSwitch& p);
bool decode_payload(const Bytes& b, PCommit& p);
bool decode_payload(const Bytes& b, PCommitForward& p);
bool decode_payload(const Bytes& b, PWithId& p);
bool decode_payload(const Bytes& b, PTimeoutNotice& p);
bool decode_payload(const Bytes& b, PResume& p);

}  // namespace keyfort
