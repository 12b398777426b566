#pragma once

#include <functional>
#include <vector>

#include "keyfort/bytes.hpp"
#include "keyfort/channel.hpp"
#include "keyfort/core.hpp"
#include "keyfort/crypto.hpp"
#include "keyfort/monitor.hpp"
#include "keyfort/result.hpp"

namespace keyfort {

enum class EnclaveMode : uint8_t { Normal, ExportedHalted, ImportedWaiting };

const char* to_string(EnclaveMode m);

// Minimal enclave application: a byte-string state evolved by a keyed
// chain over the inputs, plus the enclave halves of state export/import
// and sealed storage.
class SimEnclave {
public:
    using SendFn = std::function<void(const PublicKeyId& dst, MsgKind kind, Bytes payload)>;

    // A destination enclave is born waiting for imported state: it refuses
    // inputs until the commit signal and accepts exactly one import.
    SimEnclave(EnclaveId eid, SoftwareId id, Measurement m, SecurityMonitor* sm,
               Bytes initial_state, bool is_destination = false);

    EnclaveId eid() const { return eid_; }
    const SoftwareId& software_id() const { return id_; }
    const Measurement& measurement() const { return m_; }
    const Bytes& state() const { return state_; }
    const std::vector<Bytes>& input_log() const { return input_log_; }
    EnclaveMode mode() const { return mode_; }
    bool destroyed() const { return destroyed_; }

    void set_send_fn(SendFn fn) { send_ = std::move(fn); }
    void set_endpoint(PublicKeyId self, PublicKeyId sm_pk) {
        endpoint_ = self;
        sm_endpoint_ = sm_pk;
    }

    // Size-preserving keyed evolution of the state; equal input histories
    // from equal initial states give equal final states.
    Result<Digest32> process_input(const Bytes& input);

    // Requests the transport key, encrypts the current state, halts input
    // processing until the monitor confirms failure or destroys us.
    Result<crypto::AeadResult> export_state();

    // Verifies and decrypts; on success adopts the state, blocks input
    // processing until the success signal, and sends the commit upstream.
    Status import_state(const Bytes& ciphertext, const Mac16& tag);

    void on_success_signal();    // commit completed; start processing inputs
    void on_migration_failed();  // export abandoned; resume processing
    void mark_destroyed() { destroyed_ = true; }

    // Sealed storage with an embedded freshness counter. seal increments
    // the counter; unseal rejects any blob whose embedded value is not the
    // counter's current value.
    Result<SealedBlob> seal_state(uint64_t ctr_id);
    Result<Bytes> unseal_state(uint64_t ctr_id, const SealedBlob& blob);

    // Replay helper for continuity checks: evolve `initial` by `inputs`.
    static Bytes replay(Bytes initial, const std::vector<Bytes>& inputs);

private:
    Bytes export_aad() const;

    EnclaveId eid_;
    SoftwareId id_;
    Measurement m_;
    SecurityMonitor* sm_;
    Bytes state_;
    std::vector<Bytes> input_log_;
    EnclaveMode mode_ = EnclaveMode::Normal;
    bool is_destination_ = false;
    bool imported_ = false;
    bool destroyed_ = false;
    PublicKeyId endpoint_;
    PublicKeyId sm_endpoint_;
    SendFn send_;
};

}  // namespace keyfort
