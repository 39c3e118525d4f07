#pragma once

#include <algorithm>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "able/sandbox.hpp"

namespace able {

/// Half-open byte range [begin, end).
struct ByteRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    bool contains(std::size_t offset) const { return offset >= begin && offset < end; }
    bool operator==(const ByteRange&) const = default;
};

/// The evasion decision point in a scenario binary: the offset whose
/// instruction decides between early exit and real behavior, the verb that
/// neutralizes it, and the exit call it otherwise reaches.
struct Checkpoint {
    std::size_t decision_offset = 0;
    DebuggerAction safe_action = DebuggerAction::Skip;
    std::size_t exit_offset = 0;

    bool operator==(const Checkpoint&) const = default;
};

/// A deterministic stand-in for one sandboxed sample: a binary image, the
/// evasion checkpoint, what baseline runs report, what a successful bypass
/// additionally reveals, and which offsets crash when touched.
struct Scenario {
    std::string sample_id;
    std::vector<std::uint8_t> binary;
    Checkpoint checkpoint;
    std::set<std::string> baseline_signatures;
    std::set<std::string> hidden_signatures;
    std::vector<ByteRange> crash_zones;
    std::string crash_indicator = "debugger_guard_page";
    // Optional per-run baseline variation (consumed by baseline runs only);
    // lets the deterministic simulator model run-to-run signature variance.
    std::vector<std::set<std::string>> baseline_run_signatures;

    bool in_crash_zone(std::size_t offset) const {
        return std::any_of(crash_zones.begin(), crash_zones.end(),
                           [&](const ByteRange& z) { return z.contains(offset); });
    }

    /// Structural invariants: offsets inside the buffer, crash zones
    /// excluding the decision offset.
    void validate() const {
        if (binary.empty()) throw Error("scenario '" + sample_id + "': empty binary");
        if (checkpoint.decision_offset >= binary.size())
            throw Error("scenario '" + sample_id + "': decision_offset outside binary");
        if (checkpoint.exit_offset >= binary.size())
            throw Error("scenario '" + sample_id + "': exit_offset outside binary");
        for (const auto& z : crash_zones) {
            if (z.begin >= z.end || z.end > binary.size())
                throw Error("scenario '" + sample_id + "': bad crash zone");
            if (z.contains(checkpoint.decision_offset))
                throw Error("scenario '" + sample_id +
                            "': crash zone overlaps the decision offset");
        }
    }
};

namespace detail {

inline std::string hex_byte(std::uint8_t b) {
    static const char* digits = "0123456789ABCDEF";
    return {digits[b >> 4], digits[b & 0xF]};
}

/// Hex dump of the bytes around a fault: 8 bytes either side, the faulting
/// byte bracketed.
inline std::string fault_dump(const std::vector<std::uint8_t>& binary, std::size_t offset) {
    const std::size_t begin = offset >= 8 ? offset - 8 : 0;
    const std::size_t end = std::min(binary.size(), offset + 9);
    std::string out;
    for (std::size_t i = begin; i < end; ++i) {
        if (!out.empty()) out += ' ';
        if (i == offset) out += "[" + hex_byte(binary[i]) + "]";
        else out += hex_byte(binary[i]);
    }
    return out;
}

inline std::string format_offset(std::size_t offset) {
    static const char* digits = "0123456789ABCDEF";
    std::string hex;
    do {
        hex.insert(hex.begin(), digits[offset & 0xF]);
        offset >>= 4;
    } while (offset);
    while (hex.size() < 4) hex.insert(hex.begin(), '0');
    return "0x" + hex;
}

} // namespace detail

/// Executes a rule against a scenario, deterministically. Breakpoint
/// triggers fire at (match offset + bp offset), capped per breakpoint by the
/// rule's count, and are processed in ascending offset order:
///   - a trigger in a crash zone stops execution with a crash dump;
///   - a trigger at the decision offset whose verb equals the scenario's
///     safe action reveals the hidden signatures (baseline ∪ hidden);
///   - any other trigger changes nothing.
/// rule_hits records every (pattern, match offset) regardless of triggers.
inline ExecutionResult simulate_execution(const Scenario& scenario, const BypassRule& rule) {
    scenario.validate();
    ExecutionResult res;
    res.signatures = scenario.baseline_signatures;

    std::map<std::string, std::vector<std::size_t>> matches;
    for (const auto& p : rule.patterns) {
        auto offsets = match_pattern(scenario.binary, p);
        for (auto off : offsets) res.rule_hits.insert({p.name, off});
        matches[p.name] = std::move(offsets);
    }

    struct Trigger {
        std::size_t offset;
        DebuggerAction action;
        bool has_action;
    };
    std::vector<Trigger> triggers;
    if (rule.action) {
        for (const auto& bp : rule.action->breakpoints) {
            auto it = matches.find(bp.pattern_name);
            if (it == matches.end()) continue;
            const auto verb = rule.action->action_for(bp.index);
            std::size_t fired = 0;
            for (auto m : it->second) {
                if (rule.action->count && fired >= *rule.action->count) break;
                triggers.push_back({m + bp.offset, verb.value_or(DebuggerAction::Skip),
                                    verb.has_value()});
                ++fired;
            }
        }
    }
    std::stable_sort(triggers.begin(), triggers.end(),
                     [](const Trigger& a, const Trigger& b) { return a.offset < b.offset; });

    bool bypassed = false;
    for (const auto& t : triggers) {
        if (scenario.in_crash_zone(t.offset)) {
            res.crash_signatures.insert(scenario.crash_indicator);
            res.debugger_log = "debugger fault at offset " + detail::format_offset(t.offset) +
                               " (action '" + std::string(to_string(t.action)) + "')\ncontext: " +
                               detail::fault_dump(scenario.binary, t.offset) + "\n";
            break; // execution stops at the fault
        }
        if (t.has_action && t.offset == scenario.checkpoint.decision_offset &&
            t.action == scenario.checkpoint.safe_action)
            bypassed = true;
    }
    if (bypassed)
        res.signatures.insert(scenario.hidden_signatures.begin(),
                              scenario.hidden_signatures.end());
    res.score = static_cast<double>(res.signatures.size());
    return res;
}

/// Scenario JSON: sample_id, binary_hex (whitespace-tolerant), checkpoint
/// {decision_offset, safe_action, exit_offset}, signature lists, crash_zones
/// as [begin, end) pairs, optional crash_indicator and per-run baselines.
inline Scenario scenario_from_json(const nlohmann::json& j) {
    try {
        Scenario s;
        s.sample_id = j.at("sample_id").get<std::string>();
        const std::string hex = j.at("binary_hex").get<std::string>();
        std::string digits;
        for (char c : hex) {
            if (std::isspace(static_cast<unsigned char>(c))) continue;
            if (!detail::is_hex_digit(c))
                throw Error("scenario '" + s.sample_id + "': binary_hex has non-hex characters");
            digits += c;
        }
        if (digits.size() % 2 != 0)
            throw Error("scenario '" + s.sample_id + "': binary_hex has an odd digit count");
        for (std::size_t i = 0; i < digits.size(); i += 2)
            s.binary.push_back(static_cast<std::uint8_t>(detail::hex_value(digits[i]) * 16 +
                                                         detail::hex_value(digits[i + 1])));
        const auto& cp = j.at("checkpoint");
        s.checkpoint.decision_offset = cp.at("decision_offset").get<std::size_t>();
        s.checkpoint.exit_offset = cp.at("exit_offset").get<std::size_t>();
        const auto verb = parse_debugger_action(cp.at("safe_action").get<std::string>());
        if (!verb)
            throw Error("scenario '" + s.sample_id + "': unknown safe_action");
        s.checkpoint.safe_action = *verb;
        for (const auto& sig : j.at("baseline_signatures"))
            s.baseline_signatures.insert(sig.get<std::string>());
        for (const auto& sig : j.at("hidden_signatures"))
            s.hidden_signatures.insert(sig.get<std::string>());
        if (j.contains("crash_zones"))
            for (const auto& z : j["crash_zones"])
                s.crash_zones.push_back({z.at(0).get<std::size_t>(), z.at(1).get<std::size_t>()});
        if (j.contains("crash_indicator"))
            s.crash_indicator = j["crash_indicator"].get<std::string>();
        if (j.contains("baseline_run_signatures"))
            for (const auto& run : j["baseline_run_signatures"]) {
                std::set<std::string> sigs;
                for (const auto& sig : run) sigs.insert(sig.get<std::string>());
                s.baseline_run_signatures.push_back(std::move(sigs));
            }
        s.validate();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("bad scenario document: ") + e.what());
    }
}

/// Sandbox over a set of scenarios, keyed by sample_id. Rule runs delegate
/// to simulate_execution (pure, deterministic); baseline runs consume the
/// optional per-run signature script.
class SimulatorSandbox : public Sandbox {
public:
    SimulatorSandbox() = default;
    explicit SimulatorSandbox(std::vector<Scenario> scenarios) {
        for (auto& s : scenarios) add_scenario(std::move(s));
    }

    void add_scenario(Scenario scenario) {
        scenario.validate();
        std::lock_guard<std::mutex> lock(mutex_);
        scenarios_[scenario.sample_id] = std::move(scenario);
    }

    const Scenario& scenario(const std::string& sample_id) const {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = scenarios_.find(sample_id);
        if (it == scenarios_.end())
            throw Error("no scenario loaded for sample '" + sample_id + "'");
        return it->second;
    }

    ExecutionResult run(const std::string& sample, const BypassRule* rule) override {
        std::unique_lock<std::mutex> lock(mutex_);
        auto it = scenarios_.find(sample);
        if (it == scenarios_.end())
            throw Error("no scenario loaded for sample '" + sample + "'");
        const Scenario& s = it->second;
        if (rule == nullptr) {
            ExecutionResult res;
            if (!s.baseline_run_signatures.empty()) {
                const std::size_t run_index =
                    std::min(baseline_runs_[sample]++, s.baseline_run_signatures.size() - 1);
                res.signatures = s.baseline_run_signatures[run_index];
            } else {
                res.signatures = s.baseline_signatures;
            }
            res.score = static_cast<double>(res.signatures.size());
            return res;
        }
        const BypassRule rule_copy = *rule;
        const Scenario scenario_copy = s;
        lock.unlock();
        return simulate_execution(scenario_copy, rule_copy);
    }

private:
    mutable std::mutex mutex_;
    std::map<std::string, Scenario> scenarios_;
    std::map<std::string, std::size_t> baseline_runs_;
};

} // namespace able
