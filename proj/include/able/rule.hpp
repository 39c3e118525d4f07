#pragma once

#include <algorithm>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "able/errors.hpp"
#include "able/hex_pattern.hpp"

namespace able {

/// Debugger verbs a breakpoint action may request.
enum class DebuggerAction { Skip, Wret, Setcf, Jmp };

inline const char* to_string(DebuggerAction a) {
    switch (a) {
    case DebuggerAction::Skip: return "skip";
    case DebuggerAction::Wret: return "wret";
    case DebuggerAction::Setcf: return "setcf";
    case DebuggerAction::Jmp: return "jmp";
    }
    return "skip";
}

inline std::optional<DebuggerAction> parse_debugger_action(std::string verb) {
    std::transform(verb.begin(), verb.end(), verb.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (verb == "skip") return DebuggerAction::Skip;
    if (verb == "wret") return DebuggerAction::Wret;
    if (verb == "setcf") return DebuggerAction::Setcf;
    if (verb == "jmp") return DebuggerAction::Jmp;
    return std::nullopt;
}

/// bpN=$name+offset
struct Breakpoint {
    std::size_t index = 0;
    std::string pattern_name; // includes '$'
    std::size_t offset = 0;

    bool operator==(const Breakpoint&) const = default;
};

/// actionN=verb
struct BoundAction {
    std::size_t index = 0;
    DebuggerAction action = DebuggerAction::Skip;

    bool operator==(const BoundAction&) const = default;
};

/// Parsed cape_options meta value.
struct ActionSpec {
    std::vector<Breakpoint> breakpoints;
    std::vector<BoundAction> actions;
    std::optional<std::size_t> count; // max triggers per breakpoint

    std::optional<DebuggerAction> action_for(std::size_t index) const {
        for (const auto& a : actions)
            if (a.index == index) return a.action;
        return std::nullopt;
    }

    bool operator==(const ActionSpec&) const = default;
};

struct MetaEntry {
    std::string key;
    std::string value;  // without quotes when quoted
    bool quoted = true; // rendered with quotes when true

    bool operator==(const MetaEntry&) const = default;
};

/// A debugger-action YARA rule: name, meta, hex patterns, condition, and the
/// ActionSpec decoded from the cape_options meta entry (when present).
struct BypassRule {
    std::string name;
    std::vector<MetaEntry> meta;
    std::vector<HexPattern> patterns;
    std::string condition;
    std::optional<ActionSpec> action;

    std::optional<std::string> meta_value(const std::string& key) const {
        for (const auto& m : meta)
            if (m.key == key) return m.value;
        return std::nullopt;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline bool is_ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

inline std::size_t parse_number(const std::string& text, const std::string& what) {
    if (text.empty())
        throw ActionSyntaxError("missing number in " + what);
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
        v = std::stoul(text, &pos, 10);
    } catch (const std::exception&) {
        throw ActionSyntaxError("bad number '" + text + "' in " + what);
    }
    if (pos != text.size())
        throw ActionSyntaxError("bad number '" + text + "' in " + what);
    return v;
}

} // namespace detail

/// Parses a cape_options string, e.g. "bp0=$anti+17,action0=skip,count=1".
/// Grammar: keys bpN / actionN / count; bp values $name[+offset]; action
/// values skip|wret|setcf|jmp; count a positive integer. Every actionN must
/// have a matching bpN. Anything else raises ActionSyntaxError.
inline ActionSpec parse_cape_options(const std::string& text) {
    ActionSpec spec;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = detail::trim(part);
        if (part.empty()) continue;
        const auto eq = part.find('=');
        if (eq == std::string::npos)
            throw ActionSyntaxError("expected key=value in cape_options, got '" + part + "'");
        const std::string key = detail::trim(part.substr(0, eq));
        const std::string value = detail::trim(part.substr(eq + 1));
        if (key.rfind("bp", 0) == 0 && key.size() > 2) {
            Breakpoint bp;
            bp.index = detail::parse_number(key.substr(2), "breakpoint key '" + key + "'");
            if (value.empty() || value[0] != '$')
                throw ActionSyntaxError("breakpoint value must be $pattern[+offset], got '" + value + "'");
            const auto plus = value.find('+');
            bp.pattern_name = detail::trim(value.substr(0, plus));
            if (bp.pattern_name.size() < 2)
                throw ActionSyntaxError("breakpoint pattern name missing in '" + value + "'");
            for (std::size_t i = 1; i < bp.pattern_name.size(); ++i)
                if (!detail::is_ident_char(bp.pattern_name[i]))
                    throw ActionSyntaxError("bad pattern name '" + bp.pattern_name + "' in cape_options");
            bp.offset = (plus == std::string::npos)
                            ? 0
                            : detail::parse_number(detail::trim(value.substr(plus + 1)),
                                                   "breakpoint offset '" + value + "'");
            spec.breakpoints.push_back(bp);
        } else if (key.rfind("action", 0) == 0 && key.size() > 6) {
            BoundAction act;
            act.index = detail::parse_number(key.substr(6), "action key '" + key + "'");
            const auto verb = parse_debugger_action(value);
            if (!verb)
                throw ActionSyntaxError("unknown debugger action '" + value +
                                        "' (expected skip, wret, setcf, or jmp)");
            act.action = *verb;
            spec.actions.push_back(act);
        } else if (key == "count") {
            const std::size_t v = detail::parse_number(value, "count");
            if (v == 0)
                throw ActionSyntaxError("count must be >= 1");
            spec.count = v;
        } else {
            throw ActionSyntaxError("unsupported cape_options key '" + key + "'");
        }
    }
    for (const auto& a : spec.actions) {
        const bool matched = std::any_of(spec.breakpoints.begin(), spec.breakpoints.end(),
                                         [&](const Breakpoint& b) { return b.index == a.index; });
        if (!matched)
            throw ActionSyntaxError("action" + std::to_string(a.index) +
                                    " has no matching bp" + std::to_string(a.index));
    }
    return spec;
}

inline std::string render_cape_options(const ActionSpec& spec) {
    std::string out;
    auto append = [&](const std::string& s) {
        if (!out.empty()) out += ',';
        out += s;
    };
    for (const auto& bp : spec.breakpoints)
        append("bp" + std::to_string(bp.index) + "=" + bp.pattern_name + "+" +
               std::to_string(bp.offset));
    for (const auto& a : spec.actions)
        append("action" + std::to_string(a.index) + "=" + to_string(a.action));
    if (spec.count)
        append("count=" + std::to_string(*spec.count));
    return out;
}

/// Structural parse result: pattern bodies kept as raw source so callers can
/// inspect content (e.g. assembly mnemonics) that will not token-parse.
struct RuleSource {
    std::string name;
    std::vector<MetaEntry> meta;
    std::vector<std::pair<std::string, std::string>> patterns; // name -> "{...}"
    std::string condition;
};

namespace detail {

/// Blanks // and /* */ comments (outside double quotes) so structural
/// scanning does not trip on brace or keyword look-alikes inside them.
inline std::string blank_comments(const std::string& text) {
    std::string out = text;
    bool in_quote = false, in_line = false, in_block = false;
    for (std::size_t i = 0; i < out.size(); ++i) {
        char& c = out[i];
        if (in_line) {
            if (c == '\n') in_line = false;
            else c = ' ';
            continue;
        }
        if (in_block) {
            if (c == '*' && i + 1 < out.size() && out[i + 1] == '/') {
                out[i] = ' ';
                out[i + 1] = ' ';
                ++i;
                in_block = false;
            } else if (c != '\n') {
                c = ' ';
            }
            continue;
        }
        if (in_quote) {
            if (c == '\\' && i + 1 < out.size()) ++i;
            else if (c == '"') in_quote = false;
            continue;
        }
        if (c == '"') {
            in_quote = true;
        } else if (c == '/' && i + 1 < out.size() && out[i + 1] == '/') {
            out[i] = ' ';
            out[i + 1] = ' ';
            ++i;
            in_line = true;
        } else if (c == '/' && i + 1 < out.size() && out[i + 1] == '*') {
            out[i] = ' ';
            out[i + 1] = ' ';
            ++i;
            in_block = true;
        }
    }
    return out;
}

inline std::vector<MetaEntry> parse_meta_section(const std::string& body) {
    std::vector<MetaEntry> out;
    std::stringstream ss(body);
    std::string line;
    while (std::getline(ss, line)) {
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw StructureError("meta entry without '=': '" + line + "'");
        MetaEntry entry;
        entry.key = trim(line.substr(0, eq));
        if (entry.key.empty() || !std::all_of(entry.key.begin(), entry.key.end(), is_ident_char))
            throw StructureError("bad meta key '" + entry.key + "'");
        std::string value = trim(line.substr(eq + 1));
        if (!value.empty() && value.front() == '"') {
            if (value.size() < 2 || value.back() != '"')
                throw StructureError("unterminated meta string for key '" + entry.key + "'");
            entry.value = value.substr(1, value.size() - 2);
            entry.quoted = true;
        } else {
            if (value.empty())
                throw StructureError("empty meta value for key '" + entry.key + "'");
            entry.value = value;
            entry.quoted = false;
        }
        out.push_back(std::move(entry));
    }
    return out;
}

inline std::vector<std::pair<std::string, std::string>>
parse_strings_section(const std::string& body) {
    std::vector<std::pair<std::string, std::string>> out;
    std::size_t i = 0;
    const std::size_t n = body.size();
    while (i < n) {
        while (i < n && std::isspace(static_cast<unsigned char>(body[i]))) ++i;
        if (i >= n) break;
        if (body[i] != '$')
            throw StructureError("strings entries must start with '$', got '" +
                                 trim(body.substr(i, 24)) + "'");
        std::string name = "$";
        ++i;
        while (i < n && is_ident_char(body[i])) name += body[i++];
        if (name.size() < 2)
            throw StructureError("pattern name missing after '$'");
        while (i < n && std::isspace(static_cast<unsigned char>(body[i]))) ++i;
        if (i >= n || body[i] != '=')
            throw StructureError("expected '=' after pattern name " + name);
        ++i;
        while (i < n && std::isspace(static_cast<unsigned char>(body[i]))) ++i;
        if (i >= n)
            throw StructureError("missing pattern body for " + name);
        if (body[i] != '{')
            throw StructureError("pattern " + name +
                                 " must be a brace-delimited hex string (text and regex "
                                 "strings are not supported)");
        const auto close = body.find('}', i);
        if (close == std::string::npos)
            throw StructureError("unterminated hex pattern for " + name);
        std::string raw = body.substr(i, close - i + 1);
        for (const auto& existing : out)
            if (existing.first == name)
                throw StructureError("duplicate pattern name " + name);
        out.emplace_back(name, std::move(raw));
        i = close + 1;
    }
    return out;
}

} // namespace detail

/// Structural parse of a rule: locates the header, matches the body braces,
/// and splits meta / strings / condition. Pattern bodies stay raw.
inline RuleSource parse_rule_structure(const std::string& text) {
    const std::string clean = detail::blank_comments(text);

    // rule header: `rule <identifier> {`
    std::size_t pos = 0;
    std::size_t header = std::string::npos;
    while ((pos = clean.find("rule", pos)) != std::string::npos) {
        const bool start_ok = pos == 0 || !detail::is_ident_char(clean[pos - 1]);
        const bool end_ok = pos + 4 < clean.size() &&
                            std::isspace(static_cast<unsigned char>(clean[pos + 4]));
        if (start_ok && end_ok) {
            header = pos;
            break;
        }
        pos += 4;
    }
    if (header == std::string::npos)
        throw StructureError("missing rule header ('rule <name> { ... }')");

    std::size_t i = header + 4;
    while (i < clean.size() && std::isspace(static_cast<unsigned char>(clean[i]))) ++i;
    std::string name;
    while (i < clean.size() && detail::is_ident_char(clean[i])) name += clean[i++];
    if (name.empty() || std::isdigit(static_cast<unsigned char>(name[0])))
        throw StructureError("missing or invalid rule name");
    while (i < clean.size() && std::isspace(static_cast<unsigned char>(clean[i]))) ++i;
    if (i >= clean.size() || clean[i] != '{')
        throw StructureError("missing '{' after rule name");

    // Match the body braces; hex strings open nested braces.
    const std::size_t body_open = i;
    int depth = 0;
    bool in_quote = false;
    std::size_t body_close = std::string::npos;
    for (std::size_t j = body_open; j < clean.size(); ++j) {
        const char c = clean[j];
        if (in_quote) {
            if (c == '\\' && j + 1 < clean.size()) ++j;
            else if (c == '"') in_quote = false;
            continue;
        }
        if (c == '"') in_quote = true;
        else if (c == '{') ++depth;
        else if (c == '}') {
            --depth;
            if (depth == 0) {
                body_close = j;
                break;
            }
        }
    }
    if (body_close == std::string::npos)
        throw StructureError("unbalanced braces in rule body");

    const std::string body = clean.substr(body_open + 1, body_close - body_open - 1);

    // Section markers at body top level (outside hex braces and quotes).
    auto find_marker = [&](const std::string& marker) -> std::size_t {
        int d = 0;
        bool q = false;
        for (std::size_t j = 0; j + marker.size() <= body.size(); ++j) {
            const char c = body[j];
            if (q) {
                if (c == '\\') ++j;
                else if (c == '"') q = false;
                continue;
            }
            if (c == '"') { q = true; continue; }
            if (c == '{') { ++d; continue; }
            if (c == '}') { --d; continue; }
            if (d == 0 && body.compare(j, marker.size(), marker) == 0) {
                const bool start_ok = j == 0 || !detail::is_ident_char(body[j - 1]);
                if (start_ok) return j;
            }
        }
        return std::string::npos;
    };

    const std::size_t meta_pos = find_marker("meta:");
    const std::size_t strings_pos = find_marker("strings:");
    const std::size_t condition_pos = find_marker("condition:");
    if (strings_pos == std::string::npos)
        throw StructureError("missing strings section");
    if (condition_pos == std::string::npos)
        throw StructureError("missing condition section");
    if (condition_pos < strings_pos)
        throw StructureError("condition section must follow strings section");

    RuleSource src;
    src.name = name;
    if (meta_pos != std::string::npos) {
        if (meta_pos > strings_pos)
            throw StructureError("meta section must precede strings section");
        src.meta = detail::parse_meta_section(
            body.substr(meta_pos + 5, strings_pos - meta_pos - 5));
    }
    src.patterns = detail::parse_strings_section(
        body.substr(strings_pos + 8, condition_pos - strings_pos - 8));
    src.condition = detail::trim(body.substr(condition_pos + 10));
    if (src.condition.empty())
        throw StructureError("empty condition");
    return src;
}

/// Full parse: structure + hex tokens + cape_options. Throws StructureError,
/// PatternSyntaxError, or ActionSyntaxError.
inline BypassRule parse_rule(const std::string& text) {
    const RuleSource src = parse_rule_structure(text);
    BypassRule rule;
    rule.name = src.name;
    rule.meta = src.meta;
    rule.condition = src.condition;
    for (const auto& [pname, raw] : src.patterns) {
        HexPattern p;
        p.name = pname;
        p.tokens = parse_hex_pattern(raw);
        rule.patterns.push_back(std::move(p));
    }
    if (auto options = rule.meta_value("cape_options")) {
        rule.action = parse_cape_options(*options);
        for (const auto& bp : rule.action->breakpoints) {
            const bool known = std::any_of(rule.patterns.begin(), rule.patterns.end(),
                                           [&](const HexPattern& p) { return p.name == bp.pattern_name; });
            if (!known)
                throw StructureError("cape_options references unknown pattern " + bp.pattern_name);
        }
    }
    return rule;
}

/// Canonical rendering: four-space indents, uppercase single-spaced hex.
/// parse_rule(render_rule(r)) is structurally equal to r.
inline std::string render_rule(const BypassRule& rule) {
    std::ostringstream out;
    out << "rule " << rule.name << "\n{\n";
    if (!rule.meta.empty()) {
        out << "    meta:\n";
        for (const auto& m : rule.meta) {
            out << "        " << m.key << " = ";
            if (m.quoted) out << '"' << m.value << '"';
            else out << m.value;
            out << "\n";
        }
    }
    out << "    strings:\n";
    for (const auto& p : rule.patterns)
        out << "        " << p.name << " = { " << render_hex_tokens(p.tokens) << " }\n";
    out << "    condition:\n";
    out << "        " << rule.condition << "\n";
    out << "}\n";
    return out.str();
}

namespace detail {

inline std::string collapse_ws(const std::string& s) {
    std::string out;
    bool pending = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending = !out.empty();
        } else {
            if (pending) out += ' ';
            pending = false;
            out += c;
        }
    }
    return out;
}

} // namespace detail

/// Equality up to formatting: same name, meta entries, token sequences, and
/// condition modulo whitespace.
inline bool structurally_equal(const BypassRule& a, const BypassRule& b) {
    return a.name == b.name && a.meta == b.meta && a.patterns == b.patterns &&
           detail::collapse_ws(a.condition) == detail::collapse_ws(b.condition) &&
           a.action == b.action;
}

} // namespace able
