#pragma once

#include <map>
#include <string>
#include <vector>

#include "keyfort/bytes.hpp"
#include "keyfort/core.hpp"

namespace keyfort {

// Phase snapshot of every enclave on every device at one instant.
// device index -> list of (eid, phase).
using PhaseSnapshot = std::map<int, std::vector<std::pair<EnclaveId, Phase>>>;

struct TraceEvent {
    Ticks t = 0;
    uint64_t seq = 0;
    std::string kind;     // message kind or internal event name
    std::string src;
    std::string dst;
    std::string verdict;  // ok | rejected_<err> | dropped_down | crashed_* | ...
    std::string sm_state_digest;  // acting monitor, hex; empty for party rows
    PhaseSnapshot phases;
    std::string note;
};

struct Trace {
    std::vector<TraceEvent> events;

    // Source/destination pairs of observed update/migration operations,
    // recorded once per migration metadata entry: (src_dev, eid_s, dst_dev,
    // eid_d). For updates both device indices coincide.
    struct OpPair {
        int src_dev = 0;
        EnclaveId eid_s = 0;
        int dst_dev = 0;
        EnclaveId eid_d = 0;
        std::string id_hex;
        bool operator<(const OpPair& o) const {
            return std::tie(src_dev, eid_s, dst_dev, eid_d, id_hex) <
                   std::tie(o.src_dev, o.eid_s, o.dst_dev, o.eid_d, o.id_hex);
        }
    };
    std::vector<OpPair> pairs;

    std::string to_jsonl() const;
    static bool from_jsonl(const std::string& text, Trace& out);

    Digest32 digest() const;
};

}  // namespace keyfort
