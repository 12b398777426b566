#pragma once

#include "keyfort/bytes.hpp"
#include "keyfort/core.hpp"
#include "keyfort/result.hpp"

namespace keyfort {

class SecurityMonitor;

// Machine-mode timer. Ticks only move forward and only through advance(),
// which the simulation scheduler owns.
struct VirtualClock {
    Ticks ticks = 0;
    uint64_t tick_period_ns = 100;  // 10 MHz default

    Ticks rdtime() const { return ticks; }

    Ticks advance(Ticks delta) {
        ticks += delta;
        return ticks;
    }
};

enum class SwitchDirection : uint8_t { HostToEnclave, EnclaveToHost };

// Timestamp bookkeeping at context-switch boundaries. Entry stamps
// t_e_entry; exit accumulates the elapsed interval into t_e. Entry is
// denied while resume_ok is false.
Status on_context_switch(SecurityMonitor& sm, SwitchDirection dir, EnclaveId eid, Ticks now);

// Ticks spent in the calling enclave's execution context, including the
// currently open interval. Pure: does not fold the open interval into t_e.
Result<Ticks> enclave_local_time(const SecurityMonitor& sm, EnclaveId eid, Ticks now);

}  // namespace keyfort
