#pragma once

#include <optional>
#include <string>
#include <vector>

#include "keyfort/bytes.hpp"
#include "keyfort/channel.hpp"
#include "keyfort/core.hpp"
#include "keyfort/result.hpp"
#include "keyfort/store.hpp"

namespace keyfort {

enum class OpKind : uint8_t {
    Update,
    Migration,
    CloneAttack,
    RollbackAttack,
    StateReplayAttack,
    TimeAccounting,
};

const char* to_string(OpKind k);

struct DeviceSpec {
    std::string name;
    StoreMode store_mode = StoreMode::RollbackResistant;
    Ticks timeout_migration = 10000;
    Ticks timeout_ack = 2000;
    uint32_t resend_limit = 3;
};

struct EnclaveSpec {
    int device = 0;
    std::string id;          // software id
    uint64_t version = 1;
    std::optional<uint64_t> clone_bound;
    uint32_t binary_size = 64;
    uint64_t binary_seed = 1;     // binary bytes drawn from this seed
    uint32_t state_size = 32;     // initial state bytes
    uint32_t inputs_before = 0;   // inputs processed before the operation
    uint32_t input_size = 16;
};

struct OperationSpec {
    OpKind kind = OpKind::Update;
    int source_device = 0;
    int dest_device = 0;       // == source_device for updates
    std::string id;
    uint64_t new_version = 2;  // update: destination version
    uint32_t new_binary_size = 0;  // 0 = same size as source binary
    uint64_t new_binary_seed = 2;  // update: destination binary seed
    uint32_t inputs_during = 1;    // attempted while the source is halted
    uint32_t inputs_after = 2;     // applied to the surviving enclave
    // clone attack
    uint64_t clone_attempts = 0;   // 0 = clone_bound + 1
    // time accounting
    uint32_t switch_intervals = 8;
};

struct Scenario {
    uint64_t seed = 1;
    Ticks hop_latency = 30;
    Ticks party_timeout = 20000;
    Ticks recovery_delay = 50;
    std::vector<DeviceSpec> devices;
    std::vector<EnclaveSpec> enclaves;
    OperationSpec operation;
    FaultPlan faults;
    bool expect_violations = false;  // negative-mode scenarios

    static Result<Scenario> from_json_text(const std::string& text);
    static Result<Scenario> from_file(const std::string& path);
    std::string to_json_text() const;
};

}  // namespace keyfort
