#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>

#include "keyfort/bytes.hpp"
#include "keyfort/channel.hpp"
#include "keyfort/core.hpp"
#include "keyfort/crypto.hpp"
#include "keyfort/result.hpp"

namespace keyfort {

enum class OutcomeKind : uint8_t {
    Committed,
    AbortedSourceActive,
    AlarmNeitherActive,
    RejectedAtInit,
    AmbiguousTerminalState,
};

const char* to_string(OutcomeKind k);

struct OperationOutcome {
    OutcomeKind kind = OutcomeKind::AmbiguousTerminalState;
    std::map<std::string, uint64_t> final_versions;  // software id (printable) -> v_latest
    std::optional<Err> rejected_error;
    bool alarm_raised = false;
};

// The operating party: drives the update and migration message sequences,
// keeps its own timeout, and records what it saw. It never touches
// monitors directly; everything goes over the fabric.
class Party {
public:
    using SendFn = std::function<void(const PublicKeyId& dst, MsgKind kind, Bytes payload)>;

    enum class Stage : uint8_t {
        Idle,
        AwaitScheduleAck,
        AwaitInitOk,
        AwaitMigrationAcks,
        AwaitBlob,
        AwaitSwitchAck,
        AwaitCompletion,
        Terminal,
    };

    struct Plan {
        bool is_update = false;
        PublicKeyId sm_source;
        PublicKeyId sm_dest;
        PublicKeyId enclave_source;  // endpoint of the source enclave
        SoftwareId id;
        Version version;       // destination version
        Bytes binary;          // destination binary
        EnclaveId eid_source = 0;
        Measurement m_source;
        Measurement m_dest;
        Ticks timeout = 20000;
    };

    Party(PublicKeyId pk, SendFn send) : pk_(pk), send_(std::move(send)) {}

    const PublicKeyId& pk() const { return pk_; }
    Stage stage() const { return stage_; }
    bool terminal() const { return stage_ == Stage::Terminal; }

    void start(const Plan& plan, Ticks now);

    // Destination enclave endpoint is known only after InitOk; the world
    // resolves eids to endpoints.
    using EndpointResolver = std::function<PublicKeyId(const PublicKeyId& sm, EnclaveId eid)>;
    void set_endpoint_resolver(EndpointResolver r) { resolve_endpoint_ = std::move(r); }

    void on_message(const PublicKeyId& src, MsgKind kind, const Bytes& payload, Ticks now);

    std::optional<Ticks> next_deadline() const;
    void timeout_tick(Ticks now);

    // Observations for classification.
    std::optional<Err> rejected_error() const { return rejected_; }
    bool saw_completion() const { return completion_; }
    bool saw_alarm() const { return alarm_; }
    bool timed_out() const { return timed_out_; }
    int timeout_notices() const { return timeout_notices_; }
    EnclaveId destination_eid() const { return eid_dest_; }

private:
    void finish(std::optional<Err> rejected);
    void send_state_migration(Ticks now);

    PublicKeyId pk_;
    SendFn send_;
    EndpointResolver resolve_endpoint_;
    Plan plan_;
    Stage stage_ = Stage::Idle;
    Ticks deadline_ = 0;
    bool deadline_armed_ = false;

    int acks_needed_ = 0;
    EnclaveId eid_dest_ = 0;
    Bytes blob_c_;
    Mac16 blob_m_{};
    std::optional<Err> rejected_;
    bool completion_ = false;
    bool alarm_ = false;
    bool timed_out_ = false;
    int timeout_notices_ = 0;
};

}  // namespace keyfort
