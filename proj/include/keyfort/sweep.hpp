#pragma once

#include <optional>
#include <string>
#include <vector>

#include "keyfort/orchestrator.hpp"
#include "keyfort/predicates.hpp"
#include "keyfort/scenario.hpp"

namespace keyfort {

enum class SweepSpec : uint8_t { SingleFaults, Crashes, Both };

std::optional<SweepSpec> sweep_spec_from_string(std::string_view s);

struct SweepCase {
    size_t index = 0;
    std::string description;
    FaultPlan plan;
};

struct SweepCaseResult {
    size_t index = 0;
    std::string description;
    OutcomeKind outcome = OutcomeKind::AmbiguousTerminalState;
    bool alarm = false;
    std::vector<Violation> violations;
    bool budget_exceeded = false;
};

struct SweepReport {
    size_t total_cases = 0;
    size_t fault_cases = 0;       // message instances x 4 actions
    size_t drop_all_cases = 0;    // one per message kind
    size_t crash_cases = 0;       // monitor and enclave crash points
    size_t message_instances = 0;
    size_t message_kinds = 0;
    std::map<std::string, size_t> outcome_counts;
    std::vector<SweepCaseResult> cases;
    double wall_seconds = 0.0;

    bool violation_free() const;
    size_t violation_count() const;
    std::string to_json() const;
    std::string arithmetic() const;  // how total_cases decomposes
};

// Enumerates the fault space from a fault-free base run of the scenario.
Result<std::vector<SweepCase>> enumerate_sweep_cases(const Scenario& scenario, SweepSpec spec);

Result<SweepReport> run_sweep(const Scenario& scenario, SweepSpec spec, unsigned jobs = 1);

}  // namespace keyfort
