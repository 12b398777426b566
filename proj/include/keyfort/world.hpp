#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "keyfort/channel.hpp"
#include "keyfort/core.hpp"
#include "keyfort/enclave.hpp"
#include "keyfort/monitor.hpp"
#include "keyfort/orchestrator.hpp"
#include "keyfort/scenario.hpp"
#include "keyfort/trace.hpp"
#include "keyfort/vclock.hpp"

namespace keyfort {

// Everything one simulation run owns: the clock, the fabric, the devices
// with their monitors and enclaves, the party, and the trace. Fully
// deterministic given the scenario (seed and fault plan included).
class World {
public:
    struct Device {
        std::string name;
        std::unique_ptr<SecurityMonitor> sm;
        std::unique_ptr<DeviceHooks> hooks;
        std::map<EnclaveId, std::unique_ptr<SimEnclave>> enclaves;
    };

    struct IssuedInput {
        uint64_t input_id = 0;
        int device = 0;
        EnclaveId eid = 0;
        Bytes data;
        bool accepted = false;
    };

    explicit World(const Scenario& scenario);

    World(const World&) = delete;
    World& operator=(const World&) = delete;

    const Scenario& scenario() const { return scenario_; }
    VirtualClock& clock() { return clock_; }
    Fabric& fabric() { return fabric_; }
    const Fabric& fabric() const { return fabric_; }
    Trace& trace() { return trace_; }
    const Trace& trace() const { return trace_; }
    Party& party() { return *party_; }
    const Party& party() const { return *party_; }
    std::vector<Device>& devices() { return devices_; }
    const std::vector<Device>& devices() const { return devices_; }
    const std::vector<IssuedInput>& issued_inputs() const { return issued_inputs_; }

    SecurityMonitor& sm(int device) { return *devices_[size_t(device)].sm; }
    const SecurityMonitor& sm(int device) const { return *devices_[size_t(device)].sm; }
    SimEnclave* enclave(int device, EnclaveId eid);
    const SimEnclave* enclave(int device, EnclaveId eid) const;

    PublicKeyId enclave_endpoint(int device, EnclaveId eid) const;
    std::string component_name(const PublicKeyId& pk) const;
    int device_index(const PublicKeyId& sm_pk) const;  // -1 if not a monitor

    // Initial installs, pre-operation inputs, operation kickoff.
    Status setup();

    Status run_until_quiescent(uint64_t step_budget = 100000);

    // setup + run + post-operation script + classification.
    Result<OperationOutcome> run_operation(uint64_t step_budget = 100000);

    OperationOutcome classify() const;

    // Scripting --------------------------------------------------------------

    void script_input(Ticks at, int device, EnclaveId eid, Bytes data);
    void script_crash(Ticks at, int device);
    void script_action(Ticks at, std::string label, std::function<void(Ticks)> fn);

    // Device callbacks --------------------------------------------------------

    void on_enclave_destroyed(int device, EnclaveId eid);
    void on_migration_failed_resume(int device, EnclaveId eid);
    void on_alarm(int device, const SoftwareId& id);
    void on_mid_commit_checkpoint(int device, const char* point);

    // Introspection ------------------------------------------------------------

    PhaseSnapshot snapshot_phases() const;
    void append_internal_event(const std::string& kind, const std::string& src,
                               const std::string& dst, const std::string& verdict,
                               const std::string& note = "");

    int op_source_device() const { return op_source_device_; }
    int op_dest_device() const { return op_dest_device_; }
    EnclaveId op_source_eid() const { return op_source_eid_; }
    const Bytes& op_source_state_at_export() const { return source_state_at_export_; }
    const Bytes& op_dest_state_at_import() const { return dest_state_at_import_; }
    bool export_seen() const { return export_seen_; }
    bool import_seen() const { return import_seen_; }
    size_t source_log_size_at_export() const { return source_log_size_at_export_; }
    const Bytes& initial_state(int device, EnclaveId eid) const;
    int alarms_raised() const { return alarms_raised_; }
    bool scripted_expectation_held() const { return scripted_expectation_held_; }
    const std::string& scripted_failure() const { return scripted_failure_; }

    // Successful inits observed, with the highest v_latest in force for that
    // software at any earlier point of the run. Rollback protection says
    // v >= prior_max must hold for every row.
    struct InitObservation {
        int device = 0;
        std::string id;
        uint64_t v = 0;
        uint64_t prior_max = 0;
        bool ok = false;
    };
    const std::vector<InitObservation>& init_observations() const { return init_observations_; }

    // Clone-bound observations: live clones sharing a measurement vs bound,
    // sampled after every init.
    struct CloneObservation {
        int device = 0;
        uint64_t live = 0;
        uint64_t bound = 0;
    };
    const std::vector<CloneObservation>& clone_observations() const { return clone_observations_; }

    // Counter reads/increments per (device, ctr_id), in order.
    struct CounterObservation {
        int device = 0;
        uint64_t ctr_id = 0;
        uint64_t value = 0;
    };
    const std::vector<CounterObservation>& counter_observations() const {
        return counter_observations_;
    }
    void observe_counter(int device, uint64_t ctr_id, uint64_t value);

    // Direct-call helpers that keep observations and the trace in sync.
    Result<EnclaveId> host_init(int device, const SoftwareId& id, Version v,
                                std::optional<uint64_t> clone_bound, const Bytes& binary,
                                Bytes initial_state = {});
    void host_input(int device, EnclaveId eid, const Bytes& data);
    void crash_device(int device, const std::string& why);

private:
    struct ScriptEvent {
        Ticks at = 0;
        uint64_t order = 0;
        std::string label;
        std::function<void(Ticks)> fn;
    };

    void build_devices();
    Status setup_operation();
    void run_post_scripts();
    void dispatch(Envelope env);
    void deliver_to_sm(int device, const Envelope& env);
    void deliver_to_enclave(int device, EnclaveId eid, const Envelope& env);
    void deliver_to_party(const Envelope& env);
    bool crash_armed(int device, uint64_t index, CrashWhen when) const;
    SimEnclave* register_enclave(int device, EnclaveId eid, const SoftwareId& id,
                                 const Measurement& m, Bytes initial_state, bool is_destination);
    std::optional<Ticks> next_timer() const;
    std::string enclave_name(int device, EnclaveId eid) const;
    void record_new_pairs();
    void append_envelope_event(const Envelope& env, int acting_device,
                               const std::string& verdict, const std::string& note = "");

    Scenario scenario_;
    VirtualClock clock_;
    Fabric fabric_;
    crypto::Rng rng_;
    Trace trace_;

    std::vector<Device> devices_;
    std::unique_ptr<Party> party_;
    PublicKeyId party_pk_;

    std::map<Digest32, std::pair<int, EnclaveId>> enclave_endpoints_;
    std::map<Digest32, std::string> names_;
    std::map<Digest32, int> sm_index_;

    std::vector<ScriptEvent> scripts_;
    uint64_t script_order_ = 0;

    std::map<int, uint64_t> sm_dispatch_counts_;
    std::map<std::pair<int, EnclaveId>, uint64_t> enclave_dispatch_counts_;
    int mid_commit_armed_device_ = -1;

    std::vector<IssuedInput> issued_inputs_;
    uint64_t next_input_id_ = 1;
    std::vector<InitObservation> init_observations_;
    std::vector<CloneObservation> clone_observations_;
    std::vector<CounterObservation> counter_observations_;
    std::map<std::string, uint64_t> max_latest_seen_;  // id -> max v_latest so far
    std::map<std::pair<int, EnclaveId>, Bytes> initial_states_;

    int op_source_device_ = 0;
    int op_dest_device_ = 0;
    EnclaveId op_source_eid_ = 0;
    Bytes op_source_binary_;
    Bytes setup_store_snapshot_;  // source store right after installs
    Bytes source_state_at_export_;
    Bytes dest_state_at_import_;
    size_t source_log_size_at_export_ = 0;
    bool export_seen_ = false;
    bool import_seen_ = false;
    int alarms_raised_ = 0;
    bool setup_done_ = false;
    bool scripted_expectation_held_ = true;
    std::string scripted_failure_;
    Bytes empty_;
};

}  // namespace keyfort
