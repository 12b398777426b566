#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "keyfort/bytes.hpp"
#include "keyfort/core.hpp"
#include "keyfort/crypto.hpp"
#include "keyfort/result.hpp"

namespace keyfort {

enum class StoreMode : uint8_t { RollbackResistant, RollbackVulnerable };

// Simulated replay-protected non-volatile memory. Writes are two-slot
// shadow commits: the new snapshot lands in the inactive slot, then the
// active pointer flips together with the write counter. A crash anywhere
// in between leaves either the old or the new snapshot, never a mixture.
//
// In RollbackResistant mode the replay counter lives outside the snapshot
// (the hardware counter of an RPMB); presenting a stale snapshot is
// detected. RollbackVulnerable mode drops that check and exists only to
// reproduce the attacks it invites.
class SecureStore {
public:
    explicit SecureStore(StoreMode mode = StoreMode::RollbackResistant) : mode_(mode) {}

    StoreMode mode() const { return mode_; }

    Status put(const std::string& key, Bytes value);
    Result<std::optional<Bytes>> get(const std::string& key) const;

    uint64_t write_counter() const { return slots_[active_].write_counter; }

    // Fault hooks for tests and sweeps -------------------------------------

    // Fail the nth subsequent put (0 = next) with IoFault before any change.
    void arm_io_fault(uint32_t nth) { io_fault_in_ = int64_t(nth); }

    // Crash in the middle of the nth subsequent put. step 0: after the
    // shadow slot is written, before the pointer flip (old snapshot
    // survives). step 1: after the flip (new snapshot survives). The put
    // reports IoFault; the snapshot outcome follows the step.
    void arm_crash_during_put(uint32_t nth, int step) {
        crash_put_in_ = int64_t(nth);
        crash_put_step_ = step;
    }

    // Full snapshot including the snapshot-internal counter, as an
    // adversary with physical access would capture it.
    Bytes capture_snapshot() const;
    // Re-present a captured snapshot. Detected on the next get in
    // RollbackResistant mode; silently accepted in RollbackVulnerable mode.
    void present_snapshot(const Bytes& snapshot);

    // File-backed form: one file per key, each MAC'd and prefixed with the
    // write counter.
    Status save_to_dir(const std::string& dir, const crypto::KeyMaterial& storage_key) const;
    Status load_from_dir(const std::string& dir, const crypto::KeyMaterial& storage_key);

private:
    struct Snapshot {
        std::map<std::string, Bytes> entries;
        uint64_t write_counter = 0;
    };

    static Bytes encode_snapshot(const Snapshot& s);
    static bool decode_snapshot(const Bytes& b, Snapshot& out);

    StoreMode mode_;
    Snapshot slots_[2];
    int active_ = 0;
    uint64_t hw_counter_ = 0;  // survives everything except RollbackVulnerable mode
    int64_t io_fault_in_ = -1;
    int64_t crash_put_in_ = -1;
    int crash_put_step_ = 0;
};

// Typed snapshot helpers used by the monitor.
Status persist_versions(SecureStore& s, const std::vector<VersionEntry>& v);
Result<std::vector<VersionEntry>> load_versions(const SecureStore& s);

Status persist_counters(SecureStore& s, const std::vector<MonotonicCounter>& v);
Result<std::vector<MonotonicCounter>> load_counters(const SecureStore& s);

Status persist_migration_metadata(SecureStore& s, const std::vector<MigrationRecord>& v);
Result<std::vector<MigrationRecord>> load_migration_metadata(const SecureStore& s);

}  // namespace keyfort
