#include "keyfort/channel.hpp"

#include <algorithm>

#include "keyfort/wire.hpp"

namespace keyfort {

const char* to_string(MsgKind k) {
    switch (k) {
        case MsgKind::ScheduleMigration: return "ScheduleMigration";
        case MsgKind::ScheduleUpdate: return "ScheduleUpdate";
        case MsgKind::Init: return "Init";
        case MsgKind::InitOk: return "InitOk";
        case MsgKind::Ack: return "Ack";
        case MsgKind::StateMigration: return "StateMigration";
        case MsgKind::ExportState: return "ExportState";
        case MsgKind::StateBlob: return "StateBlob";
        case MsgKind::ExecSwitch: return "ExecSwitch";
        case MsgKind::ImportState: return "ImportState";
        case MsgKind::Commit: return "Commit";
        case MsgKind::CommitForward: return "CommitForward";
        case MsgKind::Ok4o: return "Ok4o";
        case MsgKind::Ok4p: return "Ok4p";
        case MsgKind::Ok4q: return "Ok4q";
        case MsgKind::Ok5: return "Ok5";
        case MsgKind::TimeoutNotice: return "TimeoutNotice";
        case MsgKind::Alarm: return "Alarm";
        case MsgKind::Resume: return "Resume";
    }
    return "?";
}

std::optional<MsgKind> msg_kind_from_string(std::string_view s) {
    for (int i = 0; i <= int(MsgKind::Resume); ++i) {
        if (s == to_string(MsgKind(i))) return MsgKind(i);
    }
    return std::nullopt;
}

bool kind_is_authenticated(MsgKind k) {
    switch (k) {
        case MsgKind::ExportState:
        case MsgKind::StateBlob:
        case MsgKind::ImportState:
            return false;
        default:
            return true;
    }
}

const char* to_string(FaultAction a) {
    switch (a) {
        case FaultAction::Drop: return "drop";
        case FaultAction::Delay: return "delay";
        case FaultAction::Duplicate: return "duplicate";
        case FaultAction::CorruptByte: return "corrupt";
    }
    return "?";
}

const char* to_string(CrashWhen w) {
    switch (w) {
        case CrashWhen::Before: return "before";
        case CrashWhen::After: return "after";
        case CrashWhen::MidCommit: return "mid_commit";
    }
    return "?";
}

Bytes Envelope::auth_bytes() const {
    wire::Writer w;
    w.u8(uint8_t(kind));
    w.fixed(src.id);
    w.fixed(dst.id);
    w.bytes(payload);
    return w.take();
}

Bytes Envelope::serialize() const {
    wire::Writer w;
    w.u64(seq);
    w.fixed(src.id);
    w.fixed(dst.id);
    w.u8(uint8_t(kind));
    w.bytes(payload);
    w.fixed(tag);
    w.u64(deliver_at);
    return w.take();
}

std::optional<Envelope> Envelope::deserialize(const Bytes& b) {
    wire::Reader r(b);
    Envelope e;
    e.seq = r.u64();
    e.src.id = r.fixed<32>();
    e.dst.id = r.fixed<32>();
    uint8_t kind = r.u8();
    if (kind > uint8_t(MsgKind::Resume)) return std::nullopt;
    e.kind = MsgKind(kind);
    e.payload = r.bytes();
    e.tag = r.fixed<16>();
    e.deliver_at = r.u64();
    if (r.failed() || !r.done()) return std::nullopt;
    return e;
}

static std::pair<Digest32, Digest32> norm_pair(const PublicKeyId& a, const PublicKeyId& b) {
    if (a.id <= b.id) return {a.id, b.id};
    return {b.id, a.id};
}

void Fabric::register_pair_key(const PublicKeyId& a, const PublicKeyId& b,
                               crypto::KeyMaterial k) {
    pair_keys_[norm_pair(a, b)] = k;
}

std::optional<crypto::KeyMaterial> Fabric::pair_key(const PublicKeyId& a,
                                                    const PublicKeyId& b) const {
    auto it = pair_keys_.find(norm_pair(a, b));
    if (it == pair_keys_.end()) return std::nullopt;
    return it->second;
}

void Fabric::set_session_seed(const PublicKeyId& a, const PublicKeyId& b, Digest32 seed) {
    session_seeds_[norm_pair(a, b)] = seed;
}

std::optional<Digest32> Fabric::session_seed(const PublicKeyId& a,
                                             const PublicKeyId& b) const {
    auto it = session_seeds_.find(norm_pair(a, b));
    if (it == session_seeds_.end()) return std::nullopt;
    return it->second;
}

void Fabric::enqueue(Envelope env) { queue_.push_back(std::move(env)); }

std::optional<uint64_t> Fabric::send(const PublicKeyId& src, const PublicKeyId& dst,
                                     MsgKind kind, Bytes payload, Ticks now) {
    Envelope env;
    env.src = src;
    env.dst = dst;
    env.kind = kind;
    env.payload = std::move(payload);
    env.deliver_at = now + hop_latency_;

    if (kind_is_authenticated(kind)) {
        if (auto k = pair_key(src, dst)) {
            env.tag = crypto::mac_sign(*k, env.auth_bytes());
        }
        // No pair key: the tag stays zeroed and the receiver will reject.
    }

    uint64_t occurrence = send_counts_[kind]++;

    bool drop = false;
    bool duplicate = false;
    for (const auto& f : plan_ ? plan_->messages : std::vector<MessageFault>{}) {
        if (f.kind != kind) continue;
        if (f.occurrence >= 0 && uint64_t(f.occurrence) != occurrence) continue;
        switch (f.action) {
            case FaultAction::Drop:
                drop = true;
                break;
            case FaultAction::Delay:
                env.deliver_at += f.delay;
                break;
            case FaultAction::Duplicate:
                duplicate = true;
                break;
            case FaultAction::CorruptByte: {
                // Flip one byte of the serialized form: payload if it has
                // bytes, otherwise the MAC.
                if (!env.payload.empty()) {
                    env.payload[f.corrupt_offset % env.payload.size()] ^= 0x01;
                } else {
                    env.tag[f.corrupt_offset % env.tag.size()] ^= 0x01;
                }
                break;
            }
        }
    }

    if (drop) return std::nullopt;

    env.seq = next_seq_++;
    uint64_t primary_seq = env.seq;
    enqueue(env);
    if (duplicate) {
        Envelope copy = env;
        copy.seq = next_seq_++;
        enqueue(std::move(copy));
    }
    return primary_seq;
}

std::optional<Ticks> Fabric::next_delivery() const {
    std::optional<Ticks> best;
    for (const auto& e : queue_) {
        if (!best || e.deliver_at < *best) best = e.deliver_at;
    }
    return best;
}

std::optional<Envelope> Fabric::pop_due() {
    if (queue_.empty()) return std::nullopt;
    size_t best = 0;
    for (size_t i = 1; i < queue_.size(); ++i) {
        if (std::tie(queue_[i].deliver_at, queue_[i].seq) <
            std::tie(queue_[best].deliver_at, queue_[best].seq)) {
            best = i;
        }
    }
    Envelope out = std::move(queue_[best]);
    queue_.erase(queue_.begin() + std::ptrdiff_t(best));
    return out;
}

uint64_t Fabric::sends_of(MsgKind k) const {
    auto it = send_counts_.find(k);
    return it == send_counts_.end() ? 0 : it->second;
}

// Payload codecs ------------------------------------------------------------

Bytes encode_payload(const PScheduleMigration& p) {
    wire::Writer w;
    w.bytes(p.id.id);
    return w.take();
}

Bytes encode_payload(const PScheduleUpdate& p) {
    wire::Writer w;
    w.bytes(p.id.id);
    w.u64(p.v.v);
    return w.take();
}

Bytes encode_payload(const PInit& p) {
    wire::Writer w;
    w.bytes(p.id.id);
    w.u64(p.v.v);
    w.u8(p.clone_bound_set ? 1 : 0);
    w.u64(p.clone_bound);
    w.bytes(p.binary);
    return w.take();
}

Bytes encode_payload(const PInitOk& p) {
    wire::Writer w;
    w.u8(p.ok ? 1 : 0);
    w.u8(p.err);
    w.u64(p.eid);
    return w.take();
}

Bytes encode_payload(const PAck& p) {
    wire::Writer w;
    w.u8(p.op);
    w.u8(p.ok ? 1 : 0);
    w.u8(p.err);
    return w.take();
}

Bytes encode_payload(const PStateMigration& p) {
    wire::Writer w;
    w.fixed(p.pk_s.id);
    w.fixed(p.pk_d.id);
    w.u64(p.eid_s);
    w.u64(p.eid_d);
    w.fixed(p.m_s.m);
    w.fixed(p.m_d.m);
    return w.take();
}

Bytes encode_payload(const PStateBlob& p) {
    wire::Writer w;
    w.bytes(p.ciphertext);
    w.fixed(p.tag);
    return w.take();
}

Bytes encode_payload(const PExecSwitch& p) {
    wire::Writer w;
    w.u64(p.eid_s);
    w.u64(p.eid_d);
    return w.take();
}

Bytes encode_payload(const PCommit& p) {
    wire::Writer w;
    w.u64(p.eid);
    return w.take();
}

Bytes encode_payload(const PCommitForward& p) {
    wire::Writer w;
    w.bytes(p.id.id);
    w.u64(p.eid_s);
    w.u64(p.eid_d);
    return w.take();
}

Bytes encode_payload(const PWithId& p) {
    wire::Writer w;
    w.bytes(p.id.id);
    return w.take();
}

Bytes encode_payload(const PTimeoutNotice& p) {
    wire::Writer w;
    w.bytes(p.id.id);
    w.u8(p.role);
    return w.take();
}

Bytes encode_payload(const PResume& p) {
    wire::Writer w;
    w.u64(p.eid);
    return w.take();
}

static bool finish(wire::Reader& r) { return !r.failed() && r.done(); }

bool decode_payload(const Bytes& b, PScheduleMigration& p) {
    wire::Reader r(b);
    p.id.id = r.bytes();
    return finish(r);
}

bool decode_payload(const Bytes& b, PScheduleUpdate& p) {
    wire::Reader r(b);
    p.id.id = r.bytes();
    p.v.v = r.u64();
    return finish(r);
}

bool decode_payload(const Bytes& b, PInit& p) {
    wire::Reader r(b);
    p.id.id = r.bytes();
    p.v.v = r.u64();
    p.clone_bound_set = r.u8() != 0;
    p.clone_bound = r.u64();
    p.binary = r.bytes();
    return finish(r);
}

bool decode_payload(const Bytes& b, PInitOk& p) {
    wire::Reader r(b);
    p.ok = r.u8() != 0;
    p.err = r.u8();
    p.eid = r.u64();
    return finish(r);
}

bool decode_payload(const Bytes& b, PAck& p) {
    wire::Reader r(b);
    p.op = r.u8();
    p.ok = r.u8() != 0;
    p.err = r.u8();
    return finish(r);
}

bool decode_payload(const Bytes& b, PStateMigration& p) {
    wire::Reader r(b);
    p.pk_s.id = r.fixed<32>();
    p.pk_d.id = r.fixed<32>();
    p.eid_s = r.u64();
    p.eid_d = r.u64();
    p.m_s.m = r.fixed<32>();
    p.m_d.m = r.fixed<32>();
    return finish(r);
}

bool decode_payload(const Bytes& b, PStateBlob& p) {
    wire::Reader r(b);
    p.ciphertext = r.bytes();
    p.tag = r.fixed<16>();
    return finish(r);
}

bool decode_payload(const Bytes& b, PExecSwitch& p) {
    wire::Reader r(b);
    p.eid_s = r.u64();
    p.eid_d = r.u64();
    return finish(r);
}

bool decode_payload(const Bytes& b, PCommit& p) {
    wire::Reader r(b);
    p.eid = r.u64();
    return finish(r);
}

bool decode_payload(const Bytes& b, PCommitForward& p) {
    wire::Reader r(b);
    p.id.id = r.bytes();
    p.eid_s = r.u64();
    p.eid_d = r.u64();
    return finish(r);
}

bool decode_payload(const Bytes& b, PWithId& p) {
    wire::Reader r(b);
    p.id.id = r.bytes();
    return finish(r);
}

bool decode_payload(const Bytes& b, PTimeoutNotice& p) {
    wire::Reader r(b);
    p.id.id = r.bytes();
    p.role = r.u8();
    return finish(r);
}

bool decode_payload(const Bytes& b, PResume& p) {
    wire::Reader r(b);
    p.eid = r.u64();
    return finish(r);
}

}  // namespace keyfort
