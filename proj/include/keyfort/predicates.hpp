#pragma once

#include <string>
#include <vector>

#include "keyfort/trace.hpp"

namespace keyfort {

class World;

struct Violation {
    std::string property;   // S1..S6, clone_bound, counter_monotonic, ...
    size_t trace_index = 0; // first offending event
    std::string detail;
};

// Full property evaluation over a finished run. Needs the world for the
// checks that depend on enclave state and input logs.
std::vector<Violation> check_predicates(const Trace& trace, const World& world);

// The subset computable from a serialized trace alone: per-instant
// exclusivity of each recorded pair, alarm legality, no state mutation on
// rejected messages, monotone time.
std::vector<Violation> check_trace_predicates(const Trace& trace);

std::string format_violations(const std::vector<Violation>& v);

}  // namespace keyfort
