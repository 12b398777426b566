#include "keyfort/vclock.hpp"

#include "keyfort/monitor.hpp"

namespace keyfort {

Status on_context_switch(SecurityMonitor& sm, SwitchDirection dir, EnclaveId eid, Ticks now) {
    EnclaveRecord* rec = sm.find_enclave_mut(eid);
    if (!rec || !rec->live()) return Err::UnknownEnclave;
    if (dir == SwitchDirection::HostToEnclave) {
        if (!rec->resume_ok) return Err::ResumeDenied;
        rec->t_e_entry = now;
    } else {
        rec->t_e += now - rec->t_e_entry;
        rec->t_e_entry = now;
    }
    return {};
}

Result<Ticks> enclave_local_time(const SecurityMonitor& sm, EnclaveId eid, Ticks now) {
    const EnclaveRecord* rec = sm.find_enclave(eid);
    if (!rec || !rec->live()) return Err::UnknownEnclave;
    return rec->t_e + (now - rec->t_e_entry);
}

}  // namespace keyfort
