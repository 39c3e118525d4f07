#pragma once

#include <optional>
#include <string>
#include <vector>

namespace able {

/// The four reasoning strategies the generator can be steered with.
enum class StrategyId { V0, V1, V2, V3 };

inline const char* to_string(StrategyId id) {
    switch (id) {
    case StrategyId::V0: return "V0";
    case StrategyId::V1: return "V1";
    case StrategyId::V2: return "V2";
    case StrategyId::V3: return "V3";
    }
    return "?";
}

inline std::optional<StrategyId> parse_strategy_id(const std::string& s) {
    if (s == "V0" || s == "v0") return StrategyId::V0;
    if (s == "V1" || s == "v1") return StrategyId::V1;
    if (s == "V2" || s == "v2") return StrategyId::V2;
    if (s == "V3" || s == "v3") return StrategyId::V3;
    return std::nullopt;
}

struct ReasoningStrategy {
    StrategyId id;
    std::string name;
    std::string body; // fixed prompt text, inserted verbatim
};

/// V0 baseline; V1 chain-of-thought; V2 hypothesis/causal phases; V3
/// adversarial dual perspective. The bodies are data, not code - they are
/// the exact texts sent to the models.
inline const ReasoningStrategy& strategy(StrategyId id) {
    static const ReasoningStrategy v0{
        StrategyId::V0, "V0",
        "Analyze the trace and generate a YARA bypass rule with exactly 3 different patterns "
        "targeting suspicious evasion points."};
    static const ReasoningStrategy v1{
        StrategyId::V1, "V1",
        "Think step-by-step: (1) The trace ends at an exit point---why did execution stop "
        "here? (2) What instruction or check CAUSED the program to decide to exit? (3) Where "
        "in the trace is that decision made? (4) What byte pattern can we match to skip that "
        "decision? Look for: function calls performing environment checks, conditional jumps "
        "leading to exit, comparisons determining program behavior."};
    static const ReasoningStrategy v2{
        StrategyId::V2, "V2",
        "Phase 1 -- Hypothesis Generation: For each suspicious instruction, ask: What is it "
        "checking? What happens if we skip it? Is this the root cause or a indicator? "
        "Phase 2 -- Causal Analysis: Trace backwards from ExitProcess, identify decision "
        "points where execution branches, find the critical check. "
        "Phase 3 -- Counterfactual Scenarios: For each candidate: (A) Skip instruction -> "
        "state change? (B) Skip block -> risks? (C) Modify return -> confidence? "
        "Phase 4 -- Evidence Scoring: Rate 0-100 based on: matches known evasion (+30), "
        "early in trace (+20), leads to exit (+30), clean transition (+20)."};
    static const ReasoningStrategy v3{
        StrategyId::V3, "V3",
        "Attacker's Perspective: What is the malware trying to hide from (sandbox, VM, "
        "debugger)? What checks would an attacker implement? Where in the execution flow? "
        "Defender's Perspective: How can we detect these checks? What patterns reveal "
        "evasion attempts? Where is the minimum intervention point? "
        "Decision Matrix: For each candidate, score on: Necessity (is bypass required?), "
        "Sufficiency (is it enough?), Safety (side effects?), Robustness (works for "
        "variants?). Select highest-scoring candidate."};
    switch (id) {
    case StrategyId::V0: return v0;
    case StrategyId::V1: return v1;
    case StrategyId::V2: return v2;
    case StrategyId::V3: return v3;
    }
    return v0;
}

inline const std::vector<StrategyId>& all_strategies() {
    static const std::vector<StrategyId> ids = {StrategyId::V0, StrategyId::V1, StrategyId::V2,
                                                StrategyId::V3};
    return ids;
}

} // namespace able
