#include "keyfort/predicates.hpp"

#include <map>
#include <sstream>

#include "keyfort/world.hpp"

namespace keyfort {

namespace {

bool phase_of(const PhaseSnapshot& snap, int device, EnclaveId eid, Phase& out) {
    auto it = snap.find(device);
    if (it == snap.end()) return false;
    for (const auto& [e, p] : it->second) {
        if (e == eid) {
            out = p;
            return true;
        }
    }
    return false;
}

bool is_rejected_verdict(const std::string& v) {
    return v.rfind("rejected_", 0) == 0 || v == "rejected_auth";
}

// Exclusivity of every recorded source/destination pair at every instant.
void check_pair_exclusivity(const Trace& trace, std::vector<Violation>& out) {
    for (size_t i = 0; i < trace.events.size(); ++i) {
        const TraceEvent& e = trace.events[i];
        if (e.phases.empty()) continue;
        for (const auto& pair : trace.pairs) {
            Phase ps, pd;
            if (!phase_of(e.phases, pair.src_dev, pair.eid_s, ps)) continue;
            if (!phase_of(e.phases, pair.dst_dev, pair.eid_d, pd)) continue;
            if (ps == Phase::Running && pd == Phase::Running) {
                out.push_back(Violation{
                    "S5", i,
                    "source and destination both Running (eid_s=" +
                        std::to_string(pair.eid_s) + ", eid_d=" + std::to_string(pair.eid_d) +
                        ")"});
            }
        }
    }
}

// A rejected request must leave the acting monitor's state untouched.
void check_rejection_stability(const Trace& trace, std::vector<Violation>& out) {
    std::map<std::string, std::string> last_digest;
    for (size_t i = 0; i < trace.events.size(); ++i) {
        const TraceEvent& e = trace.events[i];
        if (e.sm_state_digest.empty()) continue;
        const std::string& who = e.dst.empty() ? e.src : e.dst;
        auto it = last_digest.find(who);
        if (it != last_digest.end() && is_rejected_verdict(e.verdict) &&
            e.sm_state_digest != it->second) {
            out.push_back(Violation{"S1", i, "state changed on rejected request (" +
                                                 e.kind + " -> " + e.verdict + ")"});
        }
        last_digest[who] = e.sm_state_digest;
    }
}

void check_time_monotone(const Trace& trace, std::vector<Violation>& out) {
    Ticks last = 0;
    for (size_t i = 0; i < trace.events.size(); ++i) {
        if (trace.events[i].t < last) {
            out.push_back(Violation{"time", i, "virtual time decreased"});
            return;
        }
        last = trace.events[i].t;
    }
}

size_t count_events(const Trace& trace, const std::string& kind, bool only_ok) {
    size_t n = 0;
    for (const auto& e : trace.events) {
        if (e.kind == kind && (!only_ok || e.verdict == "ok")) ++n;
    }
    return n;
}

}  // namespace

std::vector<Violation> check_trace_predicates(const Trace& trace) {
    std::vector<Violation> out;
    check_pair_exclusivity(trace, out);
    check_rejection_stability(trace, out);
    check_time_monotone(trace, out);
    return out;
}

std::vector<Violation> check_predicates(const Trace& trace, const World& world) {
    std::vector<Violation> out = check_trace_predicates(trace);
    size_t tail = trace.events.empty() ? 0 : trace.events.size() - 1;

    OperationOutcome outcome = world.classify();
    OpKind op = world.scenario().operation.kind;
    bool protocol_op = op == OpKind::Update || op == OpKind::Migration ||
                       op == OpKind::RollbackAttack;

    // Terminal-state legality (S5).
    if (protocol_op) {
        if (outcome.kind == OutcomeKind::AmbiguousTerminalState) {
            out.push_back(Violation{"S5", tail, "terminal state is none of the legal kinds"});
        }
        if (outcome.kind == OutcomeKind::AlarmNeitherActive) {
            // Allowed only when the commit handshake (destroy ack or success
            // ack) failed to land.
            uint64_t sent_4o = world.fabric().sends_of(MsgKind::Ok4o);
            uint64_t sent_4q = world.fabric().sends_of(MsgKind::Ok4q);
            size_t ok_4o = count_events(trace, "Ok4o", true);
            size_t ok_4q = count_events(trace, "Ok4q", true);
            bool handshake_loss = sent_4o > ok_4o || sent_4q > ok_4q;
            if (!handshake_loss) {
                out.push_back(Violation{
                    "S5", tail, "alarm with neither active but no 4o/4q delivery failure"});
            }
        }
    }

    // Software rollback (S4): no successful init below the high-water mark.
    for (const auto& obs : world.init_observations()) {
        if (obs.ok && obs.v < obs.prior_max) {
            out.push_back(Violation{
                "S4", tail,
                "init accepted v" + std::to_string(obs.v) + " of '" + obs.id +
                    "' below recorded v" + std::to_string(obs.prior_max)});
        }
    }

    // Transferred state integrity (S2/S3).
    if (world.export_seen() && world.import_seen()) {
        if (world.op_dest_state_at_import() != world.op_source_state_at_export()) {
            out.push_back(Violation{"S3", tail, "imported state differs from exported state"});
        }
    }

    // Clone bound.
    for (const auto& obs : world.clone_observations()) {
        if (obs.live > obs.bound) {
            out.push_back(Violation{"clone_bound", tail,
                                    "live clones " + std::to_string(obs.live) + " exceed bound " +
                                        std::to_string(obs.bound)});
        }
    }

    // Counter monotonicity.
    std::map<std::pair<int, uint64_t>, uint64_t> high;
    for (const auto& obs : world.counter_observations()) {
        auto key = std::make_pair(obs.device, obs.ctr_id);
        auto it = high.find(key);
        if (it != high.end() && obs.value < it->second) {
            out.push_back(Violation{"counter_monotonic", tail,
                                    "counter " + std::to_string(obs.ctr_id) + " decreased"});
        }
        high[key] = std::max(high[key], obs.value);
    }

    // State continuity (S6): the surviving enclave's state must equal the
    // replay of everything that was accepted, and a never-released
    // destination must have accepted nothing.
    if (protocol_op) {
        int src_dev = world.op_source_device();
        EnclaveId eid_s = world.op_source_eid();
        const SimEnclave* src = world.enclave(src_dev, eid_s);
        EnclaveId eid_d = world.party().destination_eid();
        const SimEnclave* dst =
            eid_d ? world.enclave(world.op_dest_device(), eid_d) : nullptr;

        if (outcome.kind == OutcomeKind::Committed && src && dst) {
            std::vector<Bytes> all_inputs = src->input_log();
            all_inputs.insert(all_inputs.end(), dst->input_log().begin(),
                              dst->input_log().end());
            Bytes replayed = SimEnclave::replay(world.initial_state(src_dev, eid_s), all_inputs);
            if (replayed != dst->state()) {
                out.push_back(Violation{"S6", tail, "replayed input history does not "
                                                    "reproduce the destination state"});
            }
            if (world.export_seen() &&
                src->input_log().size() != world.source_log_size_at_export()) {
                out.push_back(Violation{"S6", tail,
                                        "source accepted inputs after exporting its state"});
            }
        } else if (src && (outcome.kind == OutcomeKind::AbortedSourceActive ||
                           outcome.kind == OutcomeKind::RejectedAtInit)) {
            Bytes replayed =
                SimEnclave::replay(world.initial_state(src_dev, eid_s), src->input_log());
            if (replayed != src->state()) {
                out.push_back(Violation{"S6", tail, "replayed input history does not "
                                                    "reproduce the source state"});
            }
            if (dst && !dst->input_log().empty()) {
                out.push_back(Violation{"S6", tail,
                                        "aborted destination processed inputs"});
            }
        } else if (outcome.kind == OutcomeKind::AlarmNeitherActive && dst &&
                   !dst->input_log().empty() && dst->mode() != EnclaveMode::Normal) {
            out.push_back(Violation{"S6", tail, "unreleased destination processed inputs"});
        }
    }

    return out;
}

std::string format_violations(const std::vector<Violation>& v) {
    std::ostringstream out;
    for (const auto& item : v) {
        out << item.property << " @" << item.trace_index << ": " << item.detail << "\n";
    }
    return out.str();
}

}  // namespace keyfort
