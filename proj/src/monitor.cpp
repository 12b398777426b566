#include "keyfort/monitor.hpp"

#include <algorithm>

#include "keyfort/wire.hpp"

namespace keyfort {

PublicKeyId enclave_endpoint_key(const PublicKeyId& sm_pk, EnclaveId eid) {
    wire::Writer w;
    w.str("enclave-endpoint");
    w.fixed(sm_pk.id);
    w.u64(eid);
    return PublicKeyId{crypto::digest(w.data())};
}

SecurityMonitor::SecurityMonitor(PublicKeyId device_pk, crypto::KeyMaterial device_key,
                                 VirtualClock* clock, MonitorConfig cfg, StoreMode store_mode)
    : device_pk_(device_pk),
      device_key_(device_key),
      clock_(clock),
      cfg_(cfg),
      store_(store_mode),
      rng_(cfg.rng_seed) {}

const EnclaveRecord* SecurityMonitor::find_enclave(EnclaveId eid) const {
    auto it = enclaves_.find(eid);
    return it == enclaves_.end() ? nullptr : &it->second;
}

EnclaveRecord* SecurityMonitor::find_enclave_mut(EnclaveId eid) {
    auto it = enclaves_.find(eid);
    return it == enclaves_.end() ? nullptr : &it->second;
}

std::optional<Version> SecurityMonitor::latest_version(const SoftwareId& id) const {
    for (const auto& e : sw_versions_) {
        if (e.id == id) return e.v_latest;
    }
    return std::nullopt;
}

uint64_t SecurityMonitor::live_clone_count(const Measurement& m) const {
    uint64_t n = 0;
    for (const auto& [eid, rec] : enclaves_) {
        if (rec.live() && rec.m == m) ++n;
    }
    return n;
}

const MigrationRecord* SecurityMonitor::migration_for_enclave(EnclaveId eid) const {
    for (const auto& r : migrations_) {
        if (r.eid_s == eid || r.eid_d == eid) return &r;
    }
    return nullptr;
}

const MigrationRecord* SecurityMonitor::migration_for_id(const SoftwareId& id) const {
    for (const auto& r : migrations_) {
        if (r.id == id) return &r;
    }
    return nullptr;
}

MigrationRecord* SecurityMonitor::record_for_id(const SoftwareId& id) {
    for (auto& r : migrations_) {
        if (r.id == id) return &r;
    }
    return nullptr;
}

Status SecurityMonitor::persist_migrations() {
    auto st = persist_migration_metadata(store_, migrations_);
    if (!st.ok()) return Err::StoreFault;
    return {};
}

Status SecurityMonitor::persist_versions_mirror() {
    auto st = persist_versions(store_, sw_versions_);
    if (!st.ok()) return Err::StoreFault;
    return {};
}

Status SecurityMonitor::persist_counters_mirror() {
    auto st = persist_counters(store_, counters_);
    if (!st.ok()) return Err::StoreFault;
    return {};
}

void SecurityMonitor::clear_record(const SoftwareId& id) {
    migrations_.erase(std::remove_if(migrations_.begin(), migrations_.end(),
                                     [&](const MigrationRecord& r) { return r.id == id; }),
                      migrations_.end());
}

void SecurityMonitor::checkpoint(const char* point) {
    if (crash_checkpoint_) crash_checkpoint_(point);
}

void SecurityMonitor::send(const PublicKeyId& dst, MsgKind kind, Bytes payload) {
    if (send_) send_(dst, kind, std::move(payload));
}

// Lifecycle -------------------------------------------------------------------

Result<EnclaveId> SecurityMonitor::init(const SoftwareId& id, Version v,
                                        std::optional<uint64_t> clone_bound,
                                        const Bytes& binary) {
    if (down_) return Err::IoFault;
    if (!id.valid()) return Err::MalformedMessage;
    if (binary.empty()) return Err::EmptyBinary;
    uint64_t bound = clone_bound.value_or(1);
    if (bound == 0) return Err::InvalidCloneBound;

    auto measured = crypto::measure(binary);
    if (!measured.ok()) return measured.error();
    Measurement m = measured.value();

    bool bypass = std::find(scheduled_.begin(), scheduled_.end(), id) != scheduled_.end();

    bool versions_changed = false;
    std::vector<VersionEntry> next_versions = sw_versions_;
    if (!bypass) {
        auto it = std::find_if(next_versions.begin(), next_versions.end(),
                               [&](const VersionEntry& e) { return e.id == id; });
        if (it != next_versions.end()) {
            if (it->v_latest != v) return Err::VersionMismatch;
        } else {
            next_versions.push_back(VersionEntry{id, v});
            versions_changed = true;
        }
    }

    if (live_clone_count(m) >= bound) return Err::CloneLimitExceeded;

    if (versions_changed) {
        if (!persist_versions(store_, next_versions).ok()) return Err::StoreFault;
        sw_versions_ = std::move(next_versions);
    }

    auto rec = new_enclave_record(id, v, bound, m, next_eid_, clock_->rdtime());
    if (!rec.ok()) return rec.error();
    if (bypass) {
        rec.value().resume_ok = false;
        scheduled_.erase(std::remove(scheduled_.begin(), scheduled_.end(), id),
                         scheduled_.end());
    }
    EnclaveId eid = next_eid_++;
    enclaves_[eid] = rec.value();
    return eid;
}

Status SecurityMonitor::run(EnclaveId eid) {
    if (down_) return Err::IoFault;
    EnclaveRecord* rec = find_enclave_mut(eid);
    if (!rec || !rec->live()) return Err::UnknownEnclave;
    if (!rec->resume_ok) return Err::ResumeDenied;
    rec->phase = Phase::Running;
    return {};
}

Status SecurityMonitor::destroy(EnclaveId eid) {
    if (down_) return Err::IoFault;
    EnclaveRecord* rec = find_enclave_mut(eid);
    if (!rec || !rec->live()) return Err::UnknownEnclave;
    rec->phase = Phase::Destroyed;
    rec->resume_ok = false;
    if (hooks_) hooks_->enclave_destroyed(eid);
    return {};
}

Result<AttestationReport> SecurityMonitor::attest(EnclaveId eid) const {
    if (down_) return Err::IoFault;
    const EnclaveRecord* rec = find_enclave(eid);
    if (!rec || !rec->live()) return Err::UnknownEnclave;
    return crypto::attest_sign(device_key_, rec->m, rec->id, rec->v, rec->clone_bound);
}

// Update & migration -----------------------------------------------------------

Status SecurityMonitor::schedule_migration(const PublicKeyId& caller, const SoftwareId& id) {
    if (down_) return Err::IoFault;
    if (!authorized_parties_.count(caller)) return Err::Unauthorized;
    if (!id.valid()) return Err::MalformedMessage;
    if (std::find(scheduled_.begin(), scheduled_.end(), id) != scheduled_.end()) {
        return Err::AlreadyScheduled;
    }
    for (const auto& [eid, rec] : enclaves_) {
        if (rec.live() && rec.id == id) return Err::EnclaveExists;
    }
    scheduled_.push_back(id);
    return {};
}

Status SecurityMonitor::schedule_update(const PublicKeyId& caller, const SoftwareId& id,
                                        Version v) {
    if (down_) return Err::IoFault;
    if (!authorized_parties_.count(caller)) return Err::Unauthorized;
    if (!id.valid()) return Err::MalformedMessage;
    if (std::find(scheduled_.begin(), scheduled_.end(), id) != scheduled_.end()) {
        return Err::AlreadyScheduled;
    }
    uint64_t live = 0;
    const EnclaveRecord* candidate = nullptr;
    for (const auto& [eid, rec] : enclaves_) {
        if (rec.live() && rec.id == id) {
            ++live;
            candidate = &rec;
        }
    }
    if (live == 0) return Err::NoEligibleEnclave;
    if (live > 1) return Err::TooManyInstances;
    if (!(candidate->v < v)) return Err::NoEligibleEnclave;
    scheduled_.push_back(id);
    return {};
}

Status SecurityMonitor::state_migration(const PublicKeyId& caller, const PublicKeyId& pk_s,
                                        const PublicKeyId& pk_d, EnclaveId eid_s,
                                        EnclaveId eid_d, const Measurement& m_s,
                                        const Measurement& m_d) {
    if (down_) return Err::IoFault;
    if (!authorized_parties_.count(caller)) return Err::Unauthorized;

    bool is_source = pk_s == device_pk_;
    bool is_dest = pk_d == device_pk_;
    if (!is_source && !is_dest) return Err::NotMyKey;

    MigrationRecord rec;
    rec.pk_s = pk_s;
    rec.pk_d = pk_d;
    rec.eid_s = eid_s;
    rec.eid_d = eid_d;
    rec.m_s = m_s;
    rec.m_d = m_d;
    rec.initiator = caller;
    rec.deadline = clock_->rdtime() + cfg_.timeout_migration;

    if (is_source && is_dest) {
        const EnclaveRecord* src = find_enclave(eid_s);
        const EnclaveRecord* dst = find_enclave(eid_d);
        if (!src || !src->live() || !dst || !dst->live()) return Err::UnknownEnclave;
        if (src->m != m_s || dst->m != m_d) return Err::MeasurementMismatch;
        if (src->id != dst->id) return Err::MeasurementMismatch;
        if (!(src->v < dst->v)) return Err::VersionOrderViolation;
        if (migration_for_enclave(eid_s) || migration_for_enclave(eid_d) ||
            migration_for_id(src->id)) {
            return Err::AlreadyMigrating;
        }
        rec.target_op = TargetOp::Update;
        rec.id = src->id;
    } else {
        if (m_s != m_d) return Err::MeasurementMismatch;
        EnclaveId local_eid = is_source ? eid_s : eid_d;
        const Measurement& local_m = is_source ? m_s : m_d;
        const EnclaveRecord* local = find_enclave(local_eid);
        if (!local || !local->live()) return Err::UnknownEnclave;
        if (local->m != local_m) return Err::MeasurementMismatch;
        if (migration_for_enclave(local_eid) || migration_for_id(local->id)) {
            return Err::AlreadyMigrating;
        }
        rec.target_op = is_source ? TargetOp::MigrationSource : TargetOp::MigrationDestination;
        rec.id = local->id;
    }

    migrations_.push_back(rec);
    if (!persist_migrations().ok()) {
        migrations_.pop_back();
        return Err::StoreFault;
    }
    return {};
}

Result<crypto::KeyMaterial> SecurityMonitor::get_transport_key(EnclaveId caller_eid) {
    if (down_) return Err::IoFault;
    MigrationRecord* rec = nullptr;
    for (auto& r : migrations_) {
        bool match = false;
        switch (r.target_op) {
            case TargetOp::Update: match = r.eid_s == caller_eid || r.eid_d == caller_eid; break;
            case TargetOp::MigrationSource: match = r.eid_s == caller_eid; break;
            case TargetOp::MigrationDestination: match = r.eid_d == caller_eid; break;
        }
        if (match) {
            rec = &r;
            break;
        }
    }
    if (!rec) return Err::NoActiveMigration;

    if (!rec->seed.has_value()) {
        if (rec->target_op == TargetOp::Update) {
            rec->seed = rng_.next_digest32();
        } else {
            const PublicKeyId& peer =
                rec->target_op == TargetOp::MigrationSource ? rec->pk_d : rec->pk_s;
            auto session = session_seed_ ? session_seed_(peer) : std::nullopt;
            if (!session) return Err::NoActiveMigration;
            rec->seed = *session;
        }
    }
    return crypto::derive_transport_key(*rec->seed, rec->m_s, rec->m_d);
}

Status SecurityMonitor::execution_switch(SwitchOrigin origin, const PublicKeyId& caller,
                                         EnclaveId eid_s, EnclaveId eid_d) {
    if (down_) return Err::IoFault;
    if (origin == SwitchOrigin::Party && !authorized_parties_.count(caller)) {
        return Err::Unauthorized;
    }
    MigrationRecord* rec = nullptr;
    for (auto& r : migrations_) {
        if (r.eid_s == eid_s && r.eid_d == eid_d) {
            rec = &r;
            break;
        }
    }
    if (!rec) return Err::NoActiveMigration;
    if (origin == SwitchOrigin::RemoteSM && caller != rec->pk_s) return Err::Unauthorized;

    switch (rec->target_op) {
        case TargetOp::Update: {
            EnclaveRecord* src = find_enclave_mut(eid_s);
            EnclaveRecord* dst = find_enclave_mut(eid_d);
            if (!src || !dst) return Err::UnknownEnclave;
            src->resume_ok = false;
            if (src->phase == Phase::Running) src->phase = Phase::Paused;
            dst->resume_ok = true;
            break;
        }
        case TargetOp::MigrationSource: {
            EnclaveRecord* src = find_enclave_mut(eid_s);
            if (!src) return Err::UnknownEnclave;
            src->resume_ok = false;
            if (src->phase == Phase::Running) src->phase = Phase::Paused;
            send(rec->pk_d, MsgKind::ExecSwitch, encode_payload(PExecSwitch{eid_s, eid_d}));
            break;
        }
        case TargetOp::MigrationDestination: {
            if (origin == SwitchOrigin::Party) return Err::Unauthorized;
            EnclaveRecord* dst = find_enclave_mut(eid_d);
            if (!dst) return Err::UnknownEnclave;
            dst->resume_ok = true;
            break;
        }
    }
    return {};
}

Status SecurityMonitor::migration_commit_from_enclave(EnclaveId caller_eid) {
    if (down_) return Err::IoFault;
    MigrationRecord* rec = nullptr;
    for (auto& r : migrations_) {
        if (r.eid_d == caller_eid &&
            (r.target_op == TargetOp::Update || r.target_op == TargetOp::MigrationDestination)) {
            rec = &r;
            break;
        }
        if (r.eid_s == caller_eid) return Err::NotDestination;
    }
    if (!rec) return Err::NoActiveMigration;

    if (rec->target_op == TargetOp::MigrationDestination) {
        rec->awaiting_destroy_ack = true;
        send(rec->pk_s, MsgKind::CommitForward,
             encode_payload(PCommitForward{rec->id, rec->eid_s, rec->eid_d}));
        return {};
    }

    // Update: the whole commit happens locally. Version first, so a crash
    // after this point can only complete the commit, never re-admit the old
    // version.
    const EnclaveRecord* dst = find_enclave(rec->eid_d);
    if (!dst) return Err::UnknownEnclave;
    Version v_new = dst->v;

    std::vector<VersionEntry> next_versions = sw_versions_;
    bool found = false;
    for (auto& e : next_versions) {
        if (e.id == rec->id) {
            e.v_latest = std::max(e.v_latest, v_new);
            found = true;
        }
    }
    if (!found) next_versions.push_back(VersionEntry{rec->id, v_new});
    if (!persist_versions(store_, next_versions).ok()) return Err::StoreFault;
    sw_versions_ = std::move(next_versions);

    EnclaveId eid_s = rec->eid_s;
    EnclaveId eid_d = rec->eid_d;
    SoftwareId id = rec->id;
    PublicKeyId initiator = rec->initiator;

    EnclaveRecord* src = find_enclave_mut(eid_s);
    if (src && src->live()) {
        src->phase = Phase::Destroyed;
        src->resume_ok = false;
        if (hooks_) hooks_->enclave_destroyed(eid_s);
    }

    checkpoint("mid_commit");

    clear_record(id);
    if (!persist_migrations().ok()) return Err::StoreFault;

    send(enclave_endpoint_key(device_pk_, eid_d), MsgKind::Ok4p, {});
    send(initiator, MsgKind::Ok5, encode_payload(PWithId{id}));
    return {};
}

Status SecurityMonitor::commit_forward_from_remote(const PublicKeyId& remote,
                                                   const SoftwareId& id) {
    if (down_) return Err::IoFault;
    MigrationRecord* rec = record_for_id(id);
    if (!rec || rec->target_op != TargetOp::MigrationSource) return Err::NoActiveMigration;
    if (remote != rec->pk_d) return Err::Unauthorized;

    if (!rec->source_destroyed) {
        rec->source_destroyed = true;
        rec->resends_left = cfg_.resend_limit;
        rec->deadline = clock_->rdtime() + cfg_.timeout_ack;
        if (!persist_migrations().ok()) {
            rec->source_destroyed = false;
            return Err::StoreFault;
        }

        checkpoint("mid_commit");

        EnclaveRecord* src = find_enclave_mut(rec->eid_s);
        if (src && src->live()) {
            src->phase = Phase::Destroyed;
            src->resume_ok = false;
            if (hooks_) hooks_->enclave_destroyed(rec->eid_s);
        }
    } else {
        // Duplicate destroy request: just re-acknowledge.
        rec->deadline = clock_->rdtime() + cfg_.timeout_ack;
    }
    send(rec->pk_d, MsgKind::Ok4o, encode_payload(PWithId{id}));
    return {};
}

Status SecurityMonitor::destroy_ack_from_remote(const PublicKeyId& remote,
                                                const SoftwareId& id) {
    if (down_) return Err::IoFault;
    MigrationRecord* rec = record_for_id(id);
    if (!rec || rec->target_op != TargetOp::MigrationDestination) return Err::NoActiveMigration;
    if (remote != rec->pk_s) return Err::Unauthorized;
    if (!rec->awaiting_destroy_ack) return Err::NoActiveMigration;

    // Source destruction is confirmed; record the installed version, then
    // clear the metadata and signal completion.
    const EnclaveRecord* dst = find_enclave(rec->eid_d);
    Version v_new = dst ? dst->v : Version{0};
    std::vector<VersionEntry> next_versions = sw_versions_;
    bool found = false;
    for (auto& e : next_versions) {
        if (e.id == rec->id) {
            e.v_latest = std::max(e.v_latest, v_new);
            found = true;
        }
    }
    if (!found) next_versions.push_back(VersionEntry{rec->id, v_new});
    if (!persist_versions(store_, next_versions).ok()) return Err::StoreFault;
    sw_versions_ = std::move(next_versions);

    EnclaveId eid_d = rec->eid_d;
    PublicKeyId source_pk = rec->pk_s;

    clear_record(id);
    if (!persist_migrations().ok()) return Err::StoreFault;

    send(enclave_endpoint_key(device_pk_, eid_d), MsgKind::Ok4p, {});
    send(source_pk, MsgKind::Ok4q, encode_payload(PWithId{id}));
    return {};
}

Status SecurityMonitor::success_ack_from_remote(const PublicKeyId& remote,
                                                const SoftwareId& id) {
    if (down_) return Err::IoFault;
    MigrationRecord* rec = record_for_id(id);
    if (!rec || rec->target_op != TargetOp::MigrationSource) return Err::NoActiveMigration;
    if (remote != rec->pk_d) return Err::Unauthorized;
    if (!rec->source_destroyed) return Err::NoActiveMigration;

    PublicKeyId initiator = rec->initiator;
    clear_record(id);
    if (!persist_migrations().ok()) return Err::StoreFault;
    send(initiator, MsgKind::Ok5, encode_payload(PWithId{id}));
    return {};
}

void SecurityMonitor::fail_migration_locally(MigrationRecord& rec, bool notify_remote,
                                             bool notify_party) {
    SoftwareId id = rec.id;
    PublicKeyId initiator = rec.initiator;
    PublicKeyId peer = rec.target_op == TargetOp::MigrationSource ? rec.pk_d : rec.pk_s;
    uint8_t role = uint8_t(rec.target_op);

    switch (rec.target_op) {
        case TargetOp::Update: {
            EnclaveRecord* src = find_enclave_mut(rec.eid_s);
            if (src && src->live()) {
                src->resume_ok = true;
                if (hooks_) hooks_->migration_failed_resume(rec.eid_s);
            }
            EnclaveRecord* dst = find_enclave_mut(rec.eid_d);
            if (dst && dst->live()) {
                dst->phase = Phase::Destroyed;
                dst->resume_ok = false;
                if (hooks_) hooks_->enclave_destroyed(rec.eid_d);
            }
            break;
        }
        case TargetOp::MigrationSource: {
            EnclaveRecord* src = find_enclave_mut(rec.eid_s);
            if (src && src->live()) {
                src->resume_ok = true;
                if (hooks_) hooks_->migration_failed_resume(rec.eid_s);
            }
            break;
        }
        case TargetOp::MigrationDestination: {
            EnclaveRecord* dst = find_enclave_mut(rec.eid_d);
            if (dst && dst->live()) {
                dst->phase = Phase::Destroyed;
                dst->resume_ok = false;
                if (hooks_) hooks_->enclave_destroyed(rec.eid_d);
            }
            break;
        }
    }

    clear_record(id);
    persist_migrations();  // best effort; a fault here re-runs recovery later

    if (notify_party) {
        send(initiator, MsgKind::TimeoutNotice, encode_payload(PTimeoutNotice{id, role}));
    }
    if (notify_remote && rec.target_op != TargetOp::Update) {
        send(peer, MsgKind::TimeoutNotice, encode_payload(PTimeoutNotice{id, role}));
    }
}

Status SecurityMonitor::timeout_notice_from_remote(const PublicKeyId& remote,
                                                   const SoftwareId& id) {
    if (down_) return Err::IoFault;
    MigrationRecord* rec = record_for_id(id);
    if (!rec) return {};  // stale notice
    if (remote != rec->pk_s && remote != rec->pk_d) return Err::Unauthorized;

    if (rec->source_destroyed) {
        // The source enclave is gone and the destination reports failure:
        // nothing left to roll back to. Hand the case to the operator.
        PublicKeyId initiator = rec->initiator;
        SoftwareId rid = rec->id;
        clear_record(rid);
        persist_migrations();
        if (alarm_sink_) alarm_sink_(rid);
        send(initiator, MsgKind::Alarm, encode_payload(PWithId{rid}));
        return {};
    }
    MigrationRecord copy = *rec;
    fail_migration_locally(copy, false, true);
    return {};
}

// Monotonic counters ------------------------------------------------------------

Result<uint64_t> SecurityMonitor::allocate_counter(EnclaveId caller_eid) {
    if (down_) return Err::IoFault;
    const EnclaveRecord* rec = find_enclave(caller_eid);
    if (!rec || !rec->live()) return Err::UnknownEnclave;
    MonotonicCounter c;
    c.ctr_id = next_ctr_id_;
    c.value = 0;
    c.owner = rec->id;
    counters_.push_back(c);
    if (!persist_counters_mirror().ok()) {
        counters_.pop_back();
        return Err::StoreFault;
    }
    return next_ctr_id_++;
}

Result<uint64_t> SecurityMonitor::counter_value(EnclaveId caller_eid, uint64_t ctr_id) const {
    if (down_) return Err::IoFault;
    const EnclaveRecord* rec = find_enclave(caller_eid);
    if (!rec || !rec->live()) return Err::UnknownEnclave;
    for (const auto& c : counters_) {
        if (c.ctr_id == ctr_id) {
            if (c.owner != rec->id) return Err::OwnerMismatch;
            return c.value;
        }
    }
    return Err::UnknownCounter;
}

Result<uint64_t> SecurityMonitor::increment_counter(EnclaveId caller_eid, uint64_t ctr_id) {
    if (down_) return Err::IoFault;
    const EnclaveRecord* rec = find_enclave(caller_eid);
    if (!rec || !rec->live()) return Err::UnknownEnclave;
    for (auto& c : counters_) {
        if (c.ctr_id == ctr_id) {
            if (c.owner != rec->id) return Err::OwnerMismatch;
            ++c.value;
            if (!persist_counters_mirror().ok()) {
                --c.value;
                return Err::StoreFault;
            }
            return c.value;
        }
    }
    return Err::UnknownCounter;
}

Status SecurityMonitor::free_counter(EnclaveId caller_eid, uint64_t ctr_id) {
    if (down_) return Err::IoFault;
    const EnclaveRecord* rec = find_enclave(caller_eid);
    if (!rec || !rec->live()) return Err::UnknownEnclave;
    for (size_t i = 0; i < counters_.size(); ++i) {
        if (counters_[i].ctr_id == ctr_id) {
            if (counters_[i].owner != rec->id) return Err::OwnerMismatch;
            MonotonicCounter saved = counters_[i];
            counters_.erase(counters_.begin() + std::ptrdiff_t(i));
            if (!persist_counters_mirror().ok()) {
                counters_.insert(counters_.begin() + std::ptrdiff_t(i), saved);
                return Err::StoreFault;
            }
            return {};
        }
    }
    return Err::UnknownCounter;
}

Result<crypto::KeyMaterial> SecurityMonitor::sealing_key(EnclaveId eid) const {
    const EnclaveRecord* rec = find_enclave(eid);
    if (!rec || !rec->live()) return Err::UnknownEnclave;
    return crypto::derive_seal_key(device_key_, rec->m);
}

// Timeouts, crash, recovery ------------------------------------------------------

void SecurityMonitor::timeout_tick(Ticks now) {
    if (down_) return;
    // Records may be cleared while handling; collect ids first.
    std::vector<SoftwareId> due;
    for (const auto& r : migrations_) {
        if (r.deadline <= now) due.push_back(r.id);
    }
    for (const auto& id : due) {
        MigrationRecord* rec = record_for_id(id);
        if (!rec) continue;
        if (rec->source_destroyed) {
            if (rec->resends_left > 0) {
                --rec->resends_left;
                rec->deadline = now + cfg_.timeout_ack;
                persist_migrations();
                send(rec->pk_d, MsgKind::Ok4o, encode_payload(PWithId{rec->id}));
            } else {
                PublicKeyId initiator = rec->initiator;
                clear_record(id);
                persist_migrations();
                if (alarm_sink_) alarm_sink_(id);
                send(initiator, MsgKind::Alarm, encode_payload(PWithId{id}));
            }
        } else {
            MigrationRecord copy = *rec;
            fail_migration_locally(copy, true, true);
        }
    }
}

std::optional<Ticks> SecurityMonitor::next_deadline() const {
    if (down_) return std::nullopt;
    std::optional<Ticks> best;
    for (const auto& r : migrations_) {
        if (!best || r.deadline < *best) best = r.deadline;
    }
    return best;
}

void SecurityMonitor::crash() {
    down_ = true;
    migrations_.clear();
    scheduled_.clear();
    sw_versions_.clear();
    counters_.clear();
}

Status SecurityMonitor::recover(Ticks now) {
    down_ = false;

    auto versions = load_versions(store_);
    if (!versions.ok()) {
        down_ = true;
        return versions.error();
    }
    auto counters = load_counters(store_);
    if (!counters.ok()) {
        down_ = true;
        return counters.error();
    }
    auto records = load_migration_metadata(store_);
    if (!records.ok()) {
        down_ = true;
        return records.error();
    }

    sw_versions_ = versions.value();
    counters_ = counters.value();
    migrations_ = records.value();
    scheduled_.clear();
    for (const auto& c : counters_) next_ctr_id_ = std::max(next_ctr_id_, c.ctr_id + 1);

    // Every restored record is resolved now: in-flight operations are rolled
    // back to the source, except a source-side commit that already destroyed
    // its enclave, which is pushed forward instead.
    std::vector<SoftwareId> ids;
    for (const auto& r : migrations_) ids.push_back(r.id);
    for (const auto& id : ids) {
        MigrationRecord* rec = record_for_id(id);
        if (!rec) continue;
        switch (rec->target_op) {
            case TargetOp::Update: {
                const EnclaveRecord* dst = find_enclave(rec->eid_d);
                Version v_d = dst ? dst->v : Version{0};
                auto latest = latest_version(rec->id);
                if (dst && latest && *latest == v_d) {
                    // Version already bumped: the commit had passed the point
                    // of no return. Finish it.
                    EnclaveRecord* src = find_enclave_mut(rec->eid_s);
                    if (src && src->live()) {
                        src->phase = Phase::Destroyed;
                        src->resume_ok = false;
                        if (hooks_) hooks_->enclave_destroyed(rec->eid_s);
                    }
                    EnclaveId eid_d = rec->eid_d;
                    PublicKeyId initiator = rec->initiator;
                    clear_record(id);
                    persist_migrations();
                    send(enclave_endpoint_key(device_pk_, eid_d), MsgKind::Ok4p, {});
                    send(initiator, MsgKind::Ok5, encode_payload(PWithId{id}));
                } else {
                    MigrationRecord copy = *rec;
                    fail_migration_locally(copy, false, true);
                }
                break;
            }
            case TargetOp::MigrationSource: {
                if (rec->source_destroyed) {
                    complete_source_commit(*rec, now);
                } else {
                    MigrationRecord copy = *rec;
                    fail_migration_locally(copy, true, true);
                }
                break;
            }
            case TargetOp::MigrationDestination: {
                MigrationRecord copy = *rec;
                fail_migration_locally(copy, true, true);
                break;
            }
        }
    }
    return {};
}

void SecurityMonitor::complete_source_commit(MigrationRecord& rec, Ticks now) {
    EnclaveRecord* src = find_enclave_mut(rec.eid_s);
    if (src && src->live()) {
        src->phase = Phase::Destroyed;
        src->resume_ok = false;
        if (hooks_) hooks_->enclave_destroyed(rec.eid_s);
    }
    rec.deadline = now + cfg_.timeout_ack;
    persist_migrations();
    send(rec.pk_d, MsgKind::Ok4o, encode_payload(PWithId{rec.id}));
}

// Authenticated message interface --------------------------------------------------

Status SecurityMonitor::handle_message(const PublicKeyId& src, MsgKind kind,
                                       const Bytes& payload) {
    if (down_) return Err::IoFault;
    auto err_code = [](const Status& st) -> uint8_t {
        return st.ok() ? 0 : uint8_t(uint8_t(st.error()) + 1);
    };

    switch (kind) {
        case MsgKind::ScheduleMigration: {
            PScheduleMigration p;
            if (!decode_payload(payload, p)) return Err::MalformedMessage;
            Status st = schedule_migration(src, p.id);
            send(src, MsgKind::Ack, encode_payload(PAck{uint8_t(kind), st.ok(), err_code(st)}));
            return st;
        }
        case MsgKind::ScheduleUpdate: {
            PScheduleUpdate p;
            if (!decode_payload(payload, p)) return Err::MalformedMessage;
            Status st = schedule_update(src, p.id, p.v);
            send(src, MsgKind::Ack, encode_payload(PAck{uint8_t(kind), st.ok(), err_code(st)}));
            return st;
        }
        case MsgKind::Init: {
            PInit p;
            if (!decode_payload(payload, p)) return Err::MalformedMessage;
            std::optional<uint64_t> bound;
            if (p.clone_bound_set) bound = p.clone_bound;
            auto got = init(p.id, p.v, bound, p.binary);
            PInitOk reply;
            reply.ok = got.ok();
            reply.err = got.ok() ? 0 : uint8_t(uint8_t(got.error()) + 1);
            reply.eid = got.ok() ? got.value() : 0;
            send(src, MsgKind::InitOk, encode_payload(reply));
            return got.ok() ? Status{} : Status{got.error()};
        }
        case MsgKind::StateMigration: {
            PStateMigration p;
            if (!decode_payload(payload, p)) return Err::MalformedMessage;
            Status st = state_migration(src, p.pk_s, p.pk_d, p.eid_s, p.eid_d, p.m_s, p.m_d);
            send(src, MsgKind::Ack, encode_payload(PAck{uint8_t(kind), st.ok(), err_code(st)}));
            return st;
        }
        case MsgKind::ExecSwitch: {
            PExecSwitch p;
            if (!decode_payload(payload, p)) return Err::MalformedMessage;
            SwitchOrigin origin = authorized_parties_.count(src) ? SwitchOrigin::Party
                                                                 : SwitchOrigin::RemoteSM;
            Status st = execution_switch(origin, src, p.eid_s, p.eid_d);
            if (origin == SwitchOrigin::Party) {
                send(src, MsgKind::Ack,
                     encode_payload(PAck{uint8_t(kind), st.ok(), err_code(st)}));
            }
            return st;
        }
        case MsgKind::Commit: {
            PCommit p;
            if (!decode_payload(payload, p)) return Err::MalformedMessage;
            if (src != enclave_endpoint_key(device_pk_, p.eid)) return Err::Unauthorized;
            return migration_commit_from_enclave(p.eid);
        }
        case MsgKind::CommitForward: {
            PCommitForward p;
            if (!decode_payload(payload, p)) return Err::MalformedMessage;
            return commit_forward_from_remote(src, p.id);
        }
        case MsgKind::Ok4o: {
            PWithId p;
            if (!decode_payload(payload, p)) return Err::MalformedMessage;
            return destroy_ack_from_remote(src, p.id);
        }
        case MsgKind::Ok4q: {
            PWithId p;
            if (!decode_payload(payload, p)) return Err::MalformedMessage;
            return success_ack_from_remote(src, p.id);
        }
        case MsgKind::TimeoutNotice: {
            PTimeoutNotice p;
            if (!decode_payload(payload, p)) return Err::MalformedMessage;
            return timeout_notice_from_remote(src, p.id);
        }
        case MsgKind::Resume: {
            // Lifecycle call from the (untrusted) host side; run() enforces
            // the resume flag.
            PResume p;
            if (!decode_payload(payload, p)) return Err::MalformedMessage;
            return run(p.eid);
        }
        default:
            return Err::MalformedMessage;
    }
}

// Introspection ---------------------------------------------------------------------

Digest32 SecurityMonitor::state_digest() const {
    wire::Writer w;
    w.u32(uint32_t(enclaves_.size()));
    for (const auto& [eid, rec] : enclaves_) encode(w, rec);
    w.u32(uint32_t(sw_versions_.size()));
    for (const auto& e : sw_versions_) encode(w, e);
    w.u32(uint32_t(counters_.size()));
    for (const auto& c : counters_) encode(w, c);
    w.u32(uint32_t(scheduled_.size()));
    for (const auto& id : scheduled_) w.bytes(id.id);
    w.u32(uint32_t(migrations_.size()));
    for (const auto& m : migrations_) encode(w, m);  // seeds masked by encode
    return crypto::digest(w.data());
}

bool SecurityMonitor::is_local_role(const MigrationRecord& rec, EnclaveId eid) const {
    switch (rec.target_op) {
        case TargetOp::Update: return rec.eid_s == eid || rec.eid_d == eid;
        case TargetOp::MigrationSource: return rec.eid_s == eid;
        case TargetOp::MigrationDestination: return rec.eid_d == eid;
    }
    return false;
}

}  // namespace keyfort
