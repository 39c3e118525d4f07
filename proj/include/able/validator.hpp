#pragma once

#include <array>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "able/sanitizer.hpp"

namespace able {

enum class ErrorCategory {
    Structure,
    AssemblyConfusion,
    Length,
    Specificity,
    Context,
    Duplicate,
};

inline const char* to_string(ErrorCategory c) {
    switch (c) {
    case ErrorCategory::Structure: return "StructureError";
    case ErrorCategory::AssemblyConfusion: return "AssemblyConfusion";
    case ErrorCategory::Length: return "LengthError";
    case ErrorCategory::Specificity: return "SpecificityError";
    case ErrorCategory::Context: return "ContextError";
    case ErrorCategory::Duplicate: return "DuplicateError";
    }
    return "?";
}

/// One validation finding. The message always carries a concrete fix hint.
struct ValidationError {
    ErrorCategory category;
    std::optional<std::string> pattern_name;
    std::string message;

    bool operator==(const ValidationError&) const = default;
};

/// Result of validate(): the sanitized text, the parsed rule when structure
/// allowed it, every accumulated error, and the sanitizer's fix records.
struct ValidationReport {
    bool valid = false;
    std::string sanitized_text;
    std::optional<BypassRule> rule;
    std::vector<ValidationError> errors;
    std::vector<FixRecord> fixes;

    bool has(ErrorCategory c) const {
        for (const auto& e : errors)
            if (e.category == c) return true;
        return false;
    }
};

/// Thresholds for per-pattern checks. Defaults follow the generation
/// contract given to the models: 6-20 byte elements, at most 80% wildcards.
struct ValidatorLimits {
    std::size_t min_pattern_bytes = 6;
    std::size_t max_pattern_bytes = 20;
    double max_wildcard_ratio = 0.8;
};

/// x86 mnemonics and register names that betray assembly-as-text patterns.
/// Matched case-insensitively on whitespace tokens; tokens that are valid
/// hex byte pairs are never flagged.
inline const std::vector<std::string>& assembly_word_list() {
    static const std::vector<std::string> words = {
        "PUSH", "POP", "CALL", "RET", "MOV", "JMP", "JE",  "JNE", "JZ",  "JNZ",
        "JC",   "JNC", "JA",   "JB",  "JBE", "JNBE", "CMP", "TEST", "XOR", "AND",
        "OR",   "SUB", "ADD",  "LEA", "NOP", "INT",  "EAX", "EBX", "ECX", "EDX",
        "ESI",  "EDI", "EBP",  "ESP", "AX",  "BX",   "CX",  "DX",  "AL",  "BL",
        "CL",   "DL",
    };
    return words;
}

/// True when the pattern source (content between braces) contains assembly
/// mnemonics or register names instead of hex bytes.
inline bool contains_assembly(const std::string& pattern_source) {
    std::stringstream ss(pattern_source);
    std::string token;
    while (ss >> token) {
        while (!token.empty() && (token.front() == '{')) token.erase(token.begin());
        while (!token.empty() && (token.back() == '}')) token.pop_back();
        if (token.empty()) continue;
        if (token.size() == 2 && detail::is_hex_digit(token[0]) && detail::is_hex_digit(token[1]))
            continue; // CA, FE, ... are bytes, never mnemonics
        std::string upper = token;
        std::transform(upper.begin(), upper.end(), upper.begin(),
                       [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
        for (const auto& w : assembly_word_list())
            if (upper == w) return true;
    }
    return false;
}

/// wildcard_bytes / byte_length. Throws EmptyPatternError when byte_length
/// is zero.
inline double wildcard_ratio(const HexPattern& p) {
    const std::size_t total = p.byte_length();
    if (total == 0)
        throw EmptyPatternError("wildcard ratio of an empty pattern is undefined");
    return static_cast<double>(p.wildcard_bytes()) / static_cast<double>(total);
}

/// A pattern "lacks context" when its concrete bytes are exactly an indirect
/// call stub [FF 15] or a bare near call [E8] - nothing anchors it.
inline bool lacks_context(const HexPattern& p) {
    const auto bytes = p.concrete_bytes();
    if (bytes.size() == 1 && bytes[0] == 0xE8) return true;
    if (bytes.size() == 2 && bytes[0] == 0xFF && bytes[1] == 0x15) return true;
    return false;
}

namespace detail {

inline std::string percent_string(double ratio) {
    const long long scaled = static_cast<long long>(ratio * 1000.0 + 0.5);
    std::string s = std::to_string(scaled / 10);
    if (scaled % 10) s += "." + std::to_string(scaled % 10);
    return s + "%";
}

} // namespace detail

/// Full validation pipeline over raw rule text: sanitize, parse, inject
/// default metadata, run per-pattern checks, and detect duplicate patterns.
/// All findings are accumulated in the report; nothing is thrown. The
/// context check (standalone-call patterns) applies only at iteration 0.
inline ValidationReport validate(const std::string& raw_text, std::size_t iteration = 0,
                                 const ValidatorLimits& limits = {}) {
    ValidationReport report;
    auto sanitized = sanitize(raw_text);
    report.sanitized_text = sanitized.text;
    report.fixes = std::move(sanitized.fixes);

    RuleSource src;
    try {
        src = parse_rule_structure(report.sanitized_text);
    } catch (const Error& e) {
        report.errors.push_back(
            {ErrorCategory::Structure, std::nullopt,
             std::string(e.what()) +
                 "; expected 'rule <name> { meta: ... strings: ... condition: ... }'"});
        return report;
    }

    BypassRule rule;
    rule.name = src.name;
    rule.meta = src.meta;
    rule.condition = src.condition;

    for (const auto& [pname, raw] : src.patterns) {
        const std::string inner = raw.substr(1, raw.size() >= 2 ? raw.size() - 2 : 0);
        if (contains_assembly(inner)) {
            report.errors.push_back(
                {ErrorCategory::AssemblyConfusion, pname,
                 "pattern " + pname +
                     " contains assembly mnemonics or register names; convert the assembly to "
                     "hex opcodes (e.g. PUSH EAX -> 50, CALL EDX -> FF D2) so the pattern holds "
                     "only hex bytes, ?? wildcards, and [n] jumps"});
            continue;
        }
        HexPattern pattern;
        pattern.name = pname;
        try {
            pattern.tokens = parse_hex_pattern(raw);
        } catch (const PatternSyntaxError& e) {
            report.errors.push_back(
                {ErrorCategory::Structure, pname,
                 "pattern " + pname + ": " + e.what() +
                     "; write bytes as two uppercase hex digits separated by spaces"});
            continue;
        }
        rule.patterns.push_back(pattern);

        const std::size_t written = pattern.token_bytes();
        if (written < limits.min_pattern_bytes || written > limits.max_pattern_bytes) {
            report.errors.push_back(
                {ErrorCategory::Length, pname,
                 "pattern " + pname + " has " + std::to_string(written) + " byte elements; it "
                     "must have " + std::to_string(limits.min_pattern_bytes) + "-" +
                     std::to_string(limits.max_pattern_bytes) +
                     (written < limits.min_pattern_bytes
                          ? "; extend it with neighbouring instruction bytes from the trace"
                          : "; trim it to the instructions around the decision point")});
        }
        if (pattern.byte_length() > 0) {
            const double ratio = wildcard_ratio(pattern);
            if (ratio > limits.max_wildcard_ratio) {
                report.errors.push_back(
                    {ErrorCategory::Specificity, pname,
                     "pattern " + pname + " is " + detail::percent_string(ratio) +
                         " wildcard bytes (limit " +
                         detail::percent_string(limits.max_wildcard_ratio) +
                         "); replace some ?? with the concrete opcode bytes from the trace"});
            }
        }
        if (iteration == 0 && lacks_context(pattern)) {
            report.errors.push_back(
                {ErrorCategory::Context, pname,
                 "pattern " + pname + " is a standalone call (only FF 15 or E8 plus "
                     "wildcards) and would match everywhere; add surrounding context bytes "
                     "before or after the call"});
        }
    }

    // Duplicate detection on canonical token sequences, independent of case
    // and spacing in the source.
    std::map<std::string, std::vector<std::string>> by_canonical;
    for (const auto& p : rule.patterns)
        by_canonical[render_hex_tokens(p.tokens)].push_back(p.name);
    for (const auto& [canonical, names] : by_canonical) {
        if (names.size() < 2) continue;
        std::string joined;
        for (const auto& n : names) {
            if (!joined.empty()) joined += ", ";
            joined += n;
        }
        report.errors.push_back(
            {ErrorCategory::Duplicate, names.front(),
             "patterns " + joined + " have identical byte sequences ({ " + canonical +
                 " }); point each pattern at a distinct instruction sequence"});
    }

    // cape_options: parse when present, inject the default when absent.
    if (auto options = rule.meta_value("cape_options")) {
        try {
            rule.action = parse_cape_options(*options);
            for (const auto& bp : rule.action->breakpoints) {
                bool known = false;
                for (const auto& [pname, raw] : src.patterns)
                    if (pname == bp.pattern_name) known = true;
                if (!known)
                    report.errors.push_back(
                        {ErrorCategory::Structure, bp.pattern_name,
                         "cape_options references unknown pattern " + bp.pattern_name +
                             "; breakpoints must name a pattern declared under strings:"});
            }
        } catch (const ActionSyntaxError& e) {
            report.errors.push_back(
                {ErrorCategory::Structure, std::nullopt,
                 std::string("cape_options: ") + e.what() +
                     "; use bpN=$pattern+offset,actionN=skip|wret|setcf|jmp[,count=K]"});
        }
    } else if (src.patterns.empty()) {
        report.errors.push_back({ErrorCategory::Structure, std::nullopt,
                                 "rule declares no patterns; add at least one hex pattern "
                                 "under strings:"});
    } else if (!rule.patterns.empty()) {
        try {
            if (inject_metadata(rule))
                report.fixes.push_back({FixCategory::MetadataInjected, "",
                                        "cape_options = \"" + *rule.meta_value("cape_options") +
                                            "\"",
                                        0});
        } catch (const NoPatternsError&) {
            // unreachable: guarded above
        }
    }

    report.rule = std::move(rule);
    report.valid = report.errors.empty();
    return report;
}

} // namespace able
