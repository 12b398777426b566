#include "keyfort/orchestrator.hpp"

#include "keyfort/crypto.hpp"

namespace keyfort {

const char* to_string(OutcomeKind k) {
    switch (k) {
        case OutcomeKind::Committed: return "Committed";
        case OutcomeKind::AbortedSourceActive: return "AbortedSourceActive";
        case OutcomeKind::AlarmNeitherActive: return "AlarmNeitherActive";
        case OutcomeKind::RejectedAtInit: return "RejectedAtInit";
        case OutcomeKind::AmbiguousTerminalState: return "AmbiguousTerminalState";
    }
    return "?";
}

void Party::start(const Plan& plan, Ticks now) {
    plan_ = plan;
    deadline_ = now + plan.timeout;
    deadline_armed_ = true;
    stage_ = Stage::AwaitScheduleAck;
    if (plan_.is_update) {
        send_(plan_.sm_dest, MsgKind::ScheduleUpdate,
              encode_payload(PScheduleUpdate{plan_.id, plan_.version}));
    } else {
        send_(plan_.sm_dest, MsgKind::ScheduleMigration,
              encode_payload(PScheduleMigration{plan_.id}));
    }
}

void Party::finish(std::optional<Err> rejected) {
    stage_ = Stage::Terminal;
    deadline_armed_ = false;
    rejected_ = rejected;
}

void Party::send_state_migration(Ticks now) {
    (void)now;
    PStateMigration p;
    p.pk_s = plan_.sm_source;
    p.pk_d = plan_.sm_dest;
    p.eid_s = plan_.eid_source;
    p.eid_d = eid_dest_;
    p.m_s = plan_.m_source;
    p.m_d = plan_.m_dest;
    stage_ = Stage::AwaitMigrationAcks;
    if (plan_.is_update) {
        acks_needed_ = 1;
        send_(plan_.sm_dest, MsgKind::StateMigration, encode_payload(p));
    } else {
        acks_needed_ = 2;
        send_(plan_.sm_source, MsgKind::StateMigration, encode_payload(p));
        send_(plan_.sm_dest, MsgKind::StateMigration, encode_payload(p));
    }
}

void Party::on_message(const PublicKeyId& src, MsgKind kind, const Bytes& payload, Ticks now) {
    switch (kind) {
        case MsgKind::Ack: {
            PAck p;
            if (!decode_payload(payload, p)) return;
            MsgKind op = MsgKind(p.op);
            if (stage_ == Stage::AwaitScheduleAck &&
                (op == MsgKind::ScheduleMigration || op == MsgKind::ScheduleUpdate)) {
                if (!p.ok) {
                    finish(Err(p.err - 1));
                    return;
                }
                stage_ = Stage::AwaitInitOk;
                PInit init;
                init.id = plan_.id;
                init.v = plan_.version;
                init.binary = plan_.binary;
                send_(plan_.sm_dest, MsgKind::Init, encode_payload(init));
                return;
            }
            if (stage_ == Stage::AwaitMigrationAcks && op == MsgKind::StateMigration) {
                if (!p.ok) {
                    finish(Err(p.err - 1));
                    return;
                }
                if (--acks_needed_ == 0) {
                    stage_ = Stage::AwaitBlob;
                    send_(plan_.enclave_source, MsgKind::ExportState, {});
                }
                return;
            }
            if (stage_ == Stage::AwaitSwitchAck && op == MsgKind::ExecSwitch) {
                if (!p.ok) {
                    finish(Err(p.err - 1));
                    return;
                }
                stage_ = Stage::AwaitCompletion;
                PublicKeyId dest_enclave = resolve_endpoint_(plan_.sm_dest, eid_dest_);
                send_(dest_enclave, MsgKind::ImportState,
                      encode_payload(PStateBlob{blob_c_, blob_m_}));
                return;
            }
            return;  // stale or duplicate ack
        }
        case MsgKind::InitOk: {
            if (stage_ != Stage::AwaitInitOk) return;
            PInitOk p;
            if (!decode_payload(payload, p)) return;
            if (!p.ok) {
                finish(Err(p.err - 1));
                return;
            }
            eid_dest_ = p.eid;
            send_state_migration(now);
            return;
        }
        case MsgKind::StateBlob: {
            if (stage_ != Stage::AwaitBlob) return;
            PStateBlob p;
            if (!decode_payload(payload, p)) return;
            blob_c_ = p.ciphertext;
            blob_m_ = p.tag;
            stage_ = Stage::AwaitSwitchAck;
            send_(plan_.is_update ? plan_.sm_dest : plan_.sm_source, MsgKind::ExecSwitch,
                  encode_payload(PExecSwitch{plan_.eid_source, eid_dest_}));
            return;
        }
        case MsgKind::Ok5: {
            completion_ = true;
            stage_ = Stage::Terminal;
            deadline_armed_ = false;
            return;
        }
        case MsgKind::Alarm: {
            alarm_ = true;
            stage_ = Stage::Terminal;
            deadline_armed_ = false;
            return;
        }
        case MsgKind::TimeoutNotice: {
            ++timeout_notices_;
            // The monitor re-enabled the source; resume it as the host would.
            if (src == plan_.sm_source || plan_.is_update) {
                send_(plan_.sm_source, MsgKind::Resume,
                      encode_payload(PResume{plan_.eid_source}));
            }
            if (stage_ != Stage::Terminal) {
                stage_ = Stage::Terminal;
                deadline_armed_ = false;
            }
            return;
        }
        default:
            return;
    }
}

std::optional<Ticks> Party::next_deadline() const {
    if (!deadline_armed_) return std::nullopt;
    return deadline_;
}

void Party::timeout_tick(Ticks now) {
    if (!deadline_armed_ || now < deadline_) return;
    deadline_armed_ = false;
    timed_out_ = true;
    stage_ = Stage::Terminal;
}

}  // namespace keyfort
