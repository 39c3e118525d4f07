#pragma once

#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "able/sandbox.hpp"
#include "able/strategies.hpp"
#include "able/trace.hpp"
#include "able/validator.hpp"

namespace able {

enum class FeedbackCategory { Crashed, Partial, Failed };

inline const char* to_string(FeedbackCategory c) {
    switch (c) {
    case FeedbackCategory::Crashed: return "Crashed";
    case FeedbackCategory::Partial: return "Partial";
    case FeedbackCategory::Failed: return "Failed";
    }
    return "?";
}

/// Failure guidance fed back into the next revision prompt.
struct FeedbackText {
    FeedbackCategory category = FeedbackCategory::Failed;
    std::string body;
    std::optional<std::string> debugger_log_excerpt; // Crashed only, when available
};

/// Knobs for prompt construction.
struct PromptOptions {
    std::size_t n_patterns = 3;      // patterns requested from the model
    std::size_t trace_line_cap = 400; // serialized trace budget, tail-biased
    std::size_t history_window = 3;  // most recent attempts shown in revisions
};

/// The directive phrase used for each failure class. Exposed so the
/// orchestrator's feedback bodies and tests share one source of truth.
inline const char* feedback_directive(FeedbackCategory c) {
    switch (c) {
    case FeedbackCategory::Crashed:
        return "select a safer nearby instruction as the bypass target";
    case FeedbackCategory::Partial:
        return "target instructions closer to the evasion checkpoint";
    case FeedbackCategory::Failed:
        return "extending the pattern with additional context bytes";
    }
    return "";
}

namespace detail {

inline std::string task_block(std::size_t n_patterns) {
    std::ostringstream out;
    out << "## Task\n"
        << "You are analyzing an execution trace from a malware sample that terminated early "
           "inside an analysis sandbox. The trace ends at a process-exit call reached through "
           "an evasion check. Identify the decision point and produce one YARA rule with "
           "exactly "
        << n_patterns
        << " distinct bypass patterns targeting suspicious evasion points.\n"
        << "Common evasion idioms to look for: TEST+JE and CMP+JZ check-and-branch sequences, "
           "API result checks, timing checks, and comparisons that gate a jump to the exit "
           "path.\n";
    return out.str();
}

inline std::string trace_block(const TraceDocument& trace, std::size_t cap) {
    std::ostringstream out;
    out << "## Binary Trace\n";
    if (!trace.sample_id.empty()) out << "sample: " << trace.sample_id << "\n";
    out << serialize_trace(trace, cap);
    return out.str();
}

inline std::string output_block(std::size_t n_patterns) {
    std::ostringstream out;
    out << "## Output Format\n"
        << "Pattern requirements:\n"
        << "- Each pattern must contain 6-20 bytes.\n"
        << "- Use ?? wildcards only for addresses, offsets, and other variable bytes; keep "
           "opcode bytes concrete.\n"
        << "- Every pattern must come from the trace above, and all " << n_patterns
        << " patterns must be distinct.\n"
        << "- Write hex bytes as two uppercase digits separated by spaces, inside { }.\n"
        << "Respond with exactly one YARA rule in this format:\n\n"
        << "rule Bypass_Sample {\n"
        << "  meta:\n"
        << "    cape_options = \"bp0=$pattern0+0,action0=skip\"\n"
        << "  strings:\n"
        << "    $pattern0 = { E8 ?? ?? ?? ?? 85 C0 74 ?? }\n"
        << "    $pattern1 = { FF 15 ?? ?? ?? ?? 85 C0 }\n"
        << "    $pattern2 = { 83 F8 01 0F 84 ?? ?? ?? ?? }\n"
        << "  condition: any of them\n"
        << "}\n";
    return out.str();
}

} // namespace detail

/// First-iteration prompt: task, trace, reasoning strategy, output contract,
/// in that fixed order. Deterministic for identical inputs. Throws
/// EmptyTraceError for a trace with no lines.
inline std::string build_initial_prompt(const TraceDocument& trace,
                                        const ReasoningStrategy& strat,
                                        const PromptOptions& options = {}) {
    if (trace.lines.empty())
        throw EmptyTraceError("cannot build a prompt from an empty trace");
    std::ostringstream out;
    out << detail::task_block(options.n_patterns) << "\n"
        << detail::trace_block(trace, options.trace_line_cap) << "\n"
        << "## Reasoning Strategy\n"
        << strat.body << "\n\n"
        << detail::output_block(options.n_patterns);
    return out.str();
}

/// One worked before/after repair example per error category, embedded in
/// correction prompts so the model sees a concrete fix, not just a message.
inline const std::string& fix_example_for(ErrorCategory category) {
    static const std::string structure =
        "before: $p0 = \"E8 ?? 83 F8 01 74\"\n"
        "after:  $p0 = { E8 ?? 83 F8 01 74 }\n"
        "(hex patterns are brace-delimited; keep the rule shape "
        "'rule Name { meta: ... strings: ... condition: ... }')";
    static const std::string assembly =
        "before: $p0 = { PUSH EAX CALL EDX }\n"
        "after:  $p0 = { 50 FF D2 }\n"
        "(write the encoded opcode bytes, not assembly mnemonics)";
    static const std::string length =
        "before: $p0 = { E8 ?? ?? }\n"
        "after:  $p0 = { E8 ?? ?? ?? ?? 85 C0 74 ?? }\n"
        "(extend short patterns with the neighbouring instruction bytes)";
    static const std::string specificity =
        "before: $p0 = { ?? ?? ?? ?? ?? ?? ?? ?? ?? E8 }\n"
        "after:  $p0 = { 8B F0 74 03 75 01 ?? ?? ?? E8 }\n"
        "(keep at least 20% of the bytes concrete)";
    static const std::string context =
        "before: $p0 = { FF 15 ?? ?? ?? ?? }\n"
        "after:  $p0 = { FF 15 ?? ?? ?? ?? 8B F0 74 03 }\n"
        "(anchor bare call opcodes with surrounding context bytes)";
    static const std::string duplicate =
        "before: $p0 = { E8 ?? ?? ?? ?? 85 C0 }  $p1 = { E8 ?? ?? ?? ?? 85 C0 }\n"
        "after:  $p0 = { E8 ?? ?? ?? ?? 85 C0 }  $p1 = { FF 15 ?? ?? ?? ?? 8B F0 }\n"
        "(each pattern must target a distinct instruction sequence)";
    switch (category) {
    case ErrorCategory::Structure: return structure;
    case ErrorCategory::AssemblyConfusion: return assembly;
    case ErrorCategory::Length: return length;
    case ErrorCategory::Specificity: return specificity;
    case ErrorCategory::Context: return context;
    case ErrorCategory::Duplicate: return duplicate;
    }
    return structure;
}

/// Correction prompt after a failed validation: every error message, the
/// failed rule verbatim, one fix example per distinct category, then the
/// trace and output contract again. `errors` must be non-empty.
inline std::string build_retry_prompt(const std::vector<ValidationError>& errors,
                                      const std::string& failed_rule,
                                      const TraceDocument& trace,
                                      const PromptOptions& options = {}) {
    if (errors.empty())
        throw std::invalid_argument("build_retry_prompt requires at least one validation error");
    std::ostringstream out;
    out << "## Validation Errors\n"
        << "Your previous rule failed validation. Fix every error below and respond with a "
           "corrected rule.\n";
    std::size_t i = 1;
    for (const auto& e : errors) {
        out << i++ << ". [" << to_string(e.category) << "]";
        if (e.pattern_name) out << " " << *e.pattern_name << ":";
        out << " " << e.message << "\n";
    }
    out << "\n## Failed Rule\n" << failed_rule;
    if (failed_rule.empty() || failed_rule.back() != '\n') out << "\n";
    out << "\n## Fix Examples\n";
    std::vector<ErrorCategory> seen;
    for (const auto& e : errors) {
        bool dup = false;
        for (auto c : seen) dup = dup || c == e.category;
        if (dup) continue;
        seen.push_back(e.category);
        out << "[" << to_string(e.category) << "]\n" << fix_example_for(e.category) << "\n\n";
    }
    out << detail::trace_block(trace, options.trace_line_cap) << "\n"
        << detail::output_block(options.n_patterns);
    return out.str();
}

/// Revision prompt for iterations after an executed attempt: trace, the most
/// recent attempts with outcome labels, the current best rule when one
/// exists, and the failure feedback (with the debugger log for crashes).
/// `history` must be non-empty.
inline std::string build_revision_prompt(
    const TraceDocument& trace,
    const std::vector<std::pair<std::string, Outcome>>& history,
    const std::optional<std::string>& best_rule, const FeedbackText& feedback,
    const PromptOptions& options = {}) {
    if (history.empty())
        throw std::invalid_argument("build_revision_prompt requires a non-empty history");
    if (trace.lines.empty())
        throw EmptyTraceError("cannot build a prompt from an empty trace");
    std::ostringstream out;
    out << "## Task\n"
        << "Your earlier bypass rules for this sample did not succeed. Revise the approach "
           "using the execution feedback below and respond with one improved YARA rule.\n\n"
        << detail::trace_block(trace, options.trace_line_cap) << "\n"
        << "## Previous Attempts\n";
    const std::size_t window = options.history_window ? options.history_window : history.size();
    const std::size_t start = history.size() > window ? history.size() - window : 0;
    if (start > 0)
        out << "(" << start << " earlier attempt(s) omitted)\n";
    for (std::size_t i = start; i < history.size(); ++i) {
        const auto& [rule_text, outcome] = history[i];
        out << "Attempt " << (i + 1) << " [" << to_string(outcome.status) << "]: "
            << outcome.message << "\n"
            << rule_text;
        if (rule_text.empty() || rule_text.back() != '\n') out << "\n";
        out << "\n";
    }
    if (best_rule) {
        out << "## Current Best Rule\n" << *best_rule;
        if (best_rule->empty() || best_rule->back() != '\n') out << "\n";
        out << "\n";
    }
    out << "## Feedback\n" << feedback.body << "\n";
    if (feedback.debugger_log_excerpt)
        out << "Debugger log:\n" << *feedback.debugger_log_excerpt << "\n";
    out << "\n" << detail::output_block(options.n_patterns);
    return out.str();
}

} // namespace able
