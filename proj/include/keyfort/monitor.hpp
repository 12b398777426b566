#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "keyfort/bytes.hpp"
#include "keyfort/channel.hpp"
#include "keyfort/core.hpp"
#include "keyfort/crypto.hpp"
#include "keyfort/result.hpp"
#include "keyfort/store.hpp"
#include "keyfort/vclock.hpp"

namespace keyfort {

struct MonitorConfig {
    Ticks timeout_migration = 10000;  // armed when a migration record is created
    Ticks timeout_ack = 2000;         // armed after acknowledging source destruction
    uint32_t resend_limit = 3;
    uint64_t rng_seed = 1;
};

// Device-side services the monitor needs but does not own: destroying the
// simulated enclave behind a record, and telling a halted source enclave
// that its migration failed so it may process inputs again.
class DeviceHooks {
public:
    virtual ~DeviceHooks() = default;
    virtual void enclave_destroyed(EnclaveId eid) = 0;
    virtual void migration_failed_resume(EnclaveId eid) = 0;
};

// Thrown by the crash checkpoint when a mid-operation crash is armed; the
// scheduler catches it and applies crash semantics.
struct CrashSignal {
    std::string point;
};

enum class SwitchOrigin : uint8_t { Party, RemoteSM };

// Deterministic channel address of an enclave behind a monitor; both the
// monitor and the transport derive it the same way.
PublicKeyId enclave_endpoint_key(const PublicKeyId& sm_pk, EnclaveId eid);

class SecurityMonitor {
public:
    using SendFn = std::function<void(const PublicKeyId& dst, MsgKind kind, Bytes payload)>;
    using SessionSeedFn = std::function<std::optional<Digest32>(const PublicKeyId& peer)>;
    using AlarmSink = std::function<void(const SoftwareId& id)>;
    using CrashCheckpointFn = std::function<void(const char* point)>;

    SecurityMonitor(PublicKeyId device_pk, crypto::KeyMaterial device_key, VirtualClock* clock,
                    MonitorConfig cfg = {}, StoreMode store_mode = StoreMode::RollbackResistant);

    void set_send_fn(SendFn fn) { send_ = std::move(fn); }
    void set_session_seed_fn(SessionSeedFn fn) { session_seed_ = std::move(fn); }
    void set_device_hooks(DeviceHooks* hooks) { hooks_ = hooks; }
    void set_alarm_sink(AlarmSink fn) { alarm_sink_ = std::move(fn); }
    void set_crash_checkpoint(CrashCheckpointFn fn) { crash_checkpoint_ = std::move(fn); }
    void authorize_party(const PublicKeyId& pk) { authorized_parties_.insert(pk); }

    const PublicKeyId& device_pk() const { return device_pk_; }
    const crypto::KeyMaterial& device_key() const { return device_key_; }
    VirtualClock& clock() { return *clock_; }
    SecureStore& store() { return store_; }
    bool is_down() const { return down_; }

    // Lifecycle ------------------------------------------------------------

    // Checks version currency (unless the id is scheduled for update or
    // migration, which consumes the schedule entry and leaves the enclave
    // blocked) and the clone bound, then creates the record.
    Result<EnclaveId> init(const SoftwareId& id, Version v, std::optional<uint64_t> clone_bound,
                           const Bytes& binary);
    Status run(EnclaveId eid);  // also resume
    Status destroy(EnclaveId eid);
    Result<AttestationReport> attest(EnclaveId eid) const;

    // Update & migration ---------------------------------------------------

    Status schedule_migration(const PublicKeyId& caller, const SoftwareId& id);
    Status schedule_update(const PublicKeyId& caller, const SoftwareId& id, Version v);
    Status state_migration(const PublicKeyId& caller, const PublicKeyId& pk_s,
                           const PublicKeyId& pk_d, EnclaveId eid_s, EnclaveId eid_d,
                           const Measurement& m_s, const Measurement& m_d);
    Result<crypto::KeyMaterial> get_transport_key(EnclaveId caller_eid);
    Status execution_switch(SwitchOrigin origin, const PublicKeyId& caller, EnclaveId eid_s,
                            EnclaveId eid_d);
    Status migration_commit_from_enclave(EnclaveId caller_eid);

    // Remote halves of the commit handshake.
    Status commit_forward_from_remote(const PublicKeyId& remote, const SoftwareId& id);  // destroy request
    Status destroy_ack_from_remote(const PublicKeyId& remote, const SoftwareId& id);
    Status success_ack_from_remote(const PublicKeyId& remote, const SoftwareId& id);
    Status timeout_notice_from_remote(const PublicKeyId& remote, const SoftwareId& id);

    // Monotonic counters ---------------------------------------------------

    Result<uint64_t> allocate_counter(EnclaveId caller_eid);
    Result<uint64_t> counter_value(EnclaveId caller_eid, uint64_t ctr_id) const;
    Result<uint64_t> increment_counter(EnclaveId caller_eid, uint64_t ctr_id);
    Status free_counter(EnclaveId caller_eid, uint64_t ctr_id);

    // Sealing key for an enclave, bound to device and measurement.
    Result<crypto::KeyMaterial> sealing_key(EnclaveId eid) const;

    // Timeouts, crash, recovery ---------------------------------------------

    void timeout_tick(Ticks now);
    std::optional<Ticks> next_deadline() const;

    // Drops everything recover() cannot rebuild: migration metadata mirror,
    // schedule list, version and counter mirrors. Enclave records stay; the
    // device itself keeps running while the monitor restarts.
    void crash();
    Status recover(Ticks now);

    // Authenticated message interface ---------------------------------------

    // Channel MAC is verified by the transport before this is called.
    // Replies and protocol continuations leave through the send hook.
    Status handle_message(const PublicKeyId& src, MsgKind kind, const Bytes& payload);

    // Introspection ----------------------------------------------------------

    const EnclaveRecord* find_enclave(EnclaveId eid) const;
    EnclaveRecord* find_enclave_mut(EnclaveId eid);
    const std::map<EnclaveId, EnclaveRecord>& enclaves() const { return enclaves_; }
    const std::vector<VersionEntry>& sw_versions() const { return sw_versions_; }
    const std::vector<MonotonicCounter>& counters() const { return counters_; }
    const std::vector<SoftwareId>& scheduled_migrations() const { return scheduled_; }
    const std::vector<MigrationRecord>& migrations() const { return migrations_; }
    std::optional<Version> latest_version(const SoftwareId& id) const;

    const MigrationRecord* migration_for_enclave(EnclaveId eid) const;
    const MigrationRecord* migration_for_id(const SoftwareId& id) const;

    // Live enclaves sharing a measurement.
    uint64_t live_clone_count(const Measurement& m) const;

    // Digest over the structural state (records, versions, counters,
    // schedules, migrations with seeds masked). Key material is excluded.
    Digest32 state_digest() const;

private:
    MigrationRecord* record_for_id(const SoftwareId& id);
    Status persist_migrations();
    Status persist_versions_mirror();
    Status persist_counters_mirror();
    void clear_record(const SoftwareId& id);
    void fail_migration_locally(MigrationRecord& rec, bool notify_remote, bool notify_party);
    void complete_source_commit(MigrationRecord& rec, Ticks now);
    void checkpoint(const char* point);
    void send(const PublicKeyId& dst, MsgKind kind, Bytes payload);
    bool is_local_role(const MigrationRecord& rec, EnclaveId eid) const;

    PublicKeyId device_pk_;
    crypto::KeyMaterial device_key_;
    VirtualClock* clock_;
    MonitorConfig cfg_;
    SecureStore store_;
    crypto::Rng rng_;

    std::map<EnclaveId, EnclaveRecord> enclaves_;
    std::vector<VersionEntry> sw_versions_;
    std::vector<MonotonicCounter> counters_;
    std::vector<SoftwareId> scheduled_;
    std::vector<MigrationRecord> migrations_;
    std::set<PublicKeyId> authorized_parties_;

    EnclaveId next_eid_ = 1;
    uint64_t next_ctr_id_ = 1;
    bool down_ = false;

    SendFn send_;
    SessionSeedFn session_seed_;
    DeviceHooks* hooks_ = nullptr;
    AlarmSink alarm_sink_;
    CrashCheckpointFn crash_checkpoint_;
};

}  // namespace keyfort
