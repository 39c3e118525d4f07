#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "able/errors.hpp"
#include "able/rule.hpp"

namespace able {

/// Everything one monitored execution yields.
struct ExecutionResult {
    std::set<std::string> signatures;
    std::set<std::pair<std::string, std::size_t>> rule_hits; // (pattern, offset)
    std::set<std::string> crash_signatures;
    std::string debugger_log;
    double score = 0.0;

    bool operator==(const ExecutionResult&) const = default;
};

/// The reference behavior a bypass must improve upon.
struct Baseline {
    std::set<std::string> signatures;
    std::string api_log_digest;
    double score = 0.0;
    std::size_t runs_observed = 0;

    bool operator==(const Baseline&) const = default;
};

enum class OutcomeStatus { Success, Partial, Crashed, Failed };

inline const char* to_string(OutcomeStatus s) {
    switch (s) {
    case OutcomeStatus::Success: return "Success";
    case OutcomeStatus::Partial: return "Partial";
    case OutcomeStatus::Crashed: return "Crashed";
    case OutcomeStatus::Failed: return "Failed";
    }
    return "?";
}

inline std::optional<OutcomeStatus> parse_outcome_status(const std::string& s) {
    if (s == "Success") return OutcomeStatus::Success;
    if (s == "Partial") return OutcomeStatus::Partial;
    if (s == "Crashed") return OutcomeStatus::Crashed;
    if (s == "Failed") return OutcomeStatus::Failed;
    return std::nullopt;
}

/// Classified execution outcome.
struct Outcome {
    OutcomeStatus status = OutcomeStatus::Failed;
    std::set<std::string> new_signatures;
    std::optional<std::string> debugger_log;
    std::string message;
};

/// Classifies a rule-instrumented run against the baseline. Crash evidence
/// dominates; a rule hit plus at least `theta` signatures beyond baseline is
/// Success; a hit without new behavior is Partial; no hit is Failed.
/// Crashed outcomes keep the signature diff so reporting can tally crashes
/// that still surfaced new behavior.
inline Outcome classify_outcome(const ExecutionResult& result, const Baseline& baseline,
                                std::size_t theta = 1) {
    if (theta == 0) theta = 1;
    std::set<std::string> fresh;
    for (const auto& s : result.signatures)
        if (!baseline.signatures.count(s)) fresh.insert(s);

    Outcome out;
    if (!result.crash_signatures.empty()) {
        out.status = OutcomeStatus::Crashed;
        out.new_signatures = std::move(fresh);
        if (!result.debugger_log.empty()) out.debugger_log = result.debugger_log;
        out.message = "Crash detected during execution";
        return out;
    }
    if (!result.rule_hits.empty() && fresh.size() >= theta) {
        out.status = OutcomeStatus::Success;
        out.new_signatures = std::move(fresh);
        out.message = "Rule matched and execution revealed " +
                      std::to_string(out.new_signatures.size()) + " new signature(s)";
        return out;
    }
    if (!result.rule_hits.empty()) {
        out.status = OutcomeStatus::Partial;
        out.new_signatures = std::move(fresh);
        out.message = "No new behaviors";
        return out;
    }
    out.status = OutcomeStatus::Failed;
    out.message = "Pattern not matched";
    return out;
}

/// All offsets where the pattern matches, ascending. A wildcard matches any
/// byte; a jump matches its fixed span of arbitrary bytes. An empty pattern
/// matches nowhere.
inline std::vector<std::size_t> match_pattern(std::span<const std::uint8_t> buffer,
                                              const HexPattern& pattern) {
    std::vector<std::size_t> out;
    if (pattern.tokens.empty()) return out;
    const std::size_t span = pattern.byte_length();
    if (span > buffer.size()) return out;

    // Expand tokens to a per-byte mask of required values.
    std::vector<std::optional<std::uint8_t>> mask;
    mask.reserve(span);
    for (const auto& t : pattern.tokens) {
        switch (t.kind) {
        case HexToken::Kind::Byte: mask.push_back(t.value); break;
        case HexToken::Kind::Wildcard: mask.push_back(std::nullopt); break;
        case HexToken::Kind::Jump:
            for (std::size_t k = 0; k < t.length; ++k) mask.push_back(std::nullopt);
            break;
        }
    }
    for (std::size_t off = 0; off + span <= buffer.size(); ++off) {
        bool ok = true;
        for (std::size_t k = 0; k < span; ++k) {
            if (mask[k] && buffer[off + k] != *mask[k]) {
                ok = false;
                break;
            }
        }
        if (ok) out.push_back(off);
    }
    return out;
}

/// A sandbox capable of executing a referenced sample, optionally with a
/// bypass rule deployed. Implementations: the deterministic simulator and
/// the remote controller client.
class Sandbox {
public:
    virtual ~Sandbox() = default;

    /// Runs `sample`; a null rule means an uninstrumented baseline run.
    virtual ExecutionResult run(const std::string& sample, const BypassRule* rule) = 0;

    /// Restores the sandbox to its clean snapshot between runs.
    virtual void recover() {}
};

namespace detail {

inline std::string fnv1a_digest(const std::string& data) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[h & 0xF];
        h >>= 4;
    }
    return out;
}

} // namespace detail

/// Runs the sample `runs` times (recovering between runs) and keeps the run
/// with the most signatures - first run wins ties. Sandboxed executions vary
/// run to run; the richest run is the fairest reference.
inline Baseline establish_baseline(Sandbox& sandbox, const std::string& sample,
                                   std::size_t runs = 4) {
    if (runs == 0) runs = 1;
    std::optional<ExecutionResult> best;
    for (std::size_t i = 0; i < runs; ++i) {
        ExecutionResult r = sandbox.run(sample, nullptr);
        if (!best || r.signatures.size() > best->signatures.size()) best = std::move(r);
        if (i + 1 < runs) sandbox.recover();
    }
    Baseline out;
    out.signatures = best->signatures;
    std::string digest_src = best->debugger_log;
    for (const auto& s : out.signatures) digest_src += "|" + s;
    out.api_log_digest = detail::fnv1a_digest(digest_src);
    out.score = best->score;
    out.runs_observed = runs;
    return out;
}

} // namespace able
