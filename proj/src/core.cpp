#include "keyfort/core.hpp"

namespace keyfort {

const char* to_string(Phase p) {
    switch (p) {
        case Phase::Created: return "Created";
        case Phase::Running: return "Running";
        case Phase::Paused: return "Paused";
        case Phase::Destroyed: return "Destroyed";
    }
    return "?";
}

const char* to_string(TargetOp op) {
    switch (op) {
        case TargetOp::Update: return "Update";
        case TargetOp::MigrationSource: return "MigrationSource";
        case TargetOp::MigrationDestination: return "MigrationDestination";
    }
    return "?";
}

Result<EnclaveRecord> new_enclave_record(const SoftwareId& id, Version v, uint64_t clone_bound,
                                         const Measurement& m, EnclaveId eid, Ticks now) {
    if (!id.valid()) return Err::MalformedMessage;
    if (clone_bound == 0) return Err::InvalidCloneBound;
    EnclaveRecord r;
    r.eid = eid;
    r.id = id;
    r.v = v;
    r.clone_bound = clone_bound;
    r.m = m;
    r.t_e = 0;
    r.t_e_entry = now;
    r.resume_ok = true;
    r.phase = Phase::Created;
    return r;
}

void encode(wire::Writer& w, const SoftwareId& v) { w.bytes(v.id); }

void encode(wire::Writer& w, const Measurement& v) { w.fixed(v.m); }

void encode(wire::Writer& w, const PublicKeyId& v) { w.fixed(v.id); }

void encode(wire::Writer& w, const EnclaveRecord& v) {
    w.u64(v.eid);
    w.bytes(v.id.id);
    w.u64(v.v.v);
    w.u64(v.clone_bound);
    w.fixed(v.m.m);
    w.u64(v.t_e);
    w.u64(v.t_e_entry);
    w.u8(v.resume_ok ? 1 : 0);
    w.u8(uint8_t(v.phase));
}

// The seed is key material: it is always encoded as absent so persisted
// snapshots never carry it.
void encode(wire::Writer& w, const MigrationRecord& v) {
    w.bytes(v.id.id);
    w.u8(uint8_t(v.target_op));
    w.u64(v.eid_s);
    w.u64(v.eid_d);
    w.fixed(v.m_s.m);
    w.fixed(v.m_d.m);
    w.fixed(v.pk_s.id);
    w.fixed(v.pk_d.id);
    w.u8(0);  // seed omitted
    w.u64(v.deadline);
    w.u8(v.source_destroyed ? 1 : 0);
    w.u32(v.resends_left);
    w.fixed(v.initiator.id);
}

void encode(wire::Writer& w, const MonotonicCounter& v) {
    w.u64(v.ctr_id);
    w.u64(v.value);
    w.bytes(v.owner.id);
}

void encode(wire::Writer& w, const VersionEntry& v) {
    w.bytes(v.id.id);
    w.u64(v.v_latest.v);
}

void encode(wire::Writer& w, const AttestationReport& v) {
    w.fixed(v.m.m);
    w.bytes(v.id.id);
    w.u64(v.v.v);
    w.u64(v.clone_bound);
    w.fixed(v.sig);
}

void encode(wire::Writer& w, const SealedBlob& v) {
    w.bytes(v.ciphertext);
    w.fixed(v.tag);
}

bool decode(wire::Reader& r, SoftwareId& v) {
    v.id = r.bytes();
    return !r.failed();
}

bool decode(wire::Reader& r, Measurement& v) {
    v.m = r.fixed<32>();
    return !r.failed();
}

bool decode(wire::Reader& r, PublicKeyId& v) {
    v.id = r.fixed<32>();
    return !r.failed();
}

bool decode(wire::Reader& r, EnclaveRecord& v) {
    v.eid = r.u64();
    v.id.id = r.bytes();
    v.v.v = r.u64();
    v.clone_bound = r.u64();
    v.m.m = r.fixed<32>();
    v.t_e = r.u64();
    v.t_e_entry = r.u64();
    v.resume_ok = r.u8() != 0;
    uint8_t phase = r.u8();
    if (phase > uint8_t(Phase::Destroyed)) return false;
    v.phase = Phase(phase);
    return !r.failed();
}

bool decode(wire::Reader& r, MigrationRecord& v) {
    v.id.id = r.bytes();
    uint8_t op = r.u8();
    if (op > uint8_t(TargetOp::MigrationDestination)) return false;
    v.target_op = TargetOp(op);
    v.eid_s = r.u64();
    v.eid_d = r.u64();
    v.m_s.m = r.fixed<32>();
    v.m_d.m = r.fixed<32>();
    v.pk_s.id = r.fixed<32>();
    v.pk_d.id = r.fixed<32>();
    uint8_t has_seed = r.u8();
    if (has_seed) {
        v.seed = r.fixed<32>();
    } else {
        v.seed.reset();
    }
    v.deadline = r.u64();
    v.source_destroyed = r.u8() != 0;
    v.resends_left = r.u32();
    v.initiator.id = r.fixed<32>();
    v.awaiting_destroy_ack = false;
    return !r.failed();
}

bool decode(wire::Reader& r, MonotonicCounter& v) {
    v.ctr_id = r.u64();
    v.value = r.u64();
    v.owner.id = r.bytes();
    return !r.failed();
}

bool decode(wire::Reader& r, VersionEntry& v) {
    v.id.id = r.bytes();
    v.v_latest.v = r.u64();
    return !r.failed();
}

bool decode(wire::Reader& r, AttestationReport& v) {
    v.m.m = r.fixed<32>();
    v.id.id = r.bytes();
    v.v.v = r.u64();
    v.clone_bound = r.u64();
    v.sig = r.fixed<32>();
    return !r.failed();
}

bool decode(wire::Reader& r, SealedBlob& v) {
    v.ciphertext = r.bytes();
    v.tag = r.fixed<16>();
    return !r.failed();
}

}  // namespace keyfort
