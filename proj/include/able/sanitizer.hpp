#pragma once

#include <cctype>
#include <string>
#include <vector>

#include "able/rule.hpp"

namespace able {

/// Categories of automatic repair applied to raw model output.
enum class FixCategory {
    SqlLuaComment,     // "--comment"  -> "//comment"
    PythonComment,     // "#comment"   -> "//comment"
    MalformedWildcard, // "???"        -> "??" (greedy pairing, odd '?' dropped)
    HexPrefix,         // "0xFF 0x15"  -> "FF 15"
    QuotedPattern,     // "E8 ??"      -> {E8 ??}
    MissingSpaces,     // E8??83F8     -> E8 ?? 83 F8
    InlineAnnotation,  // {74 (je)}    -> {74}
    MetadataInjected,  // default cape_options added
};

inline const char* to_string(FixCategory c) {
    switch (c) {
    case FixCategory::SqlLuaComment: return "sql_lua_comment";
    case FixCategory::PythonComment: return "python_comment";
    case FixCategory::MalformedWildcard: return "malformed_wildcard";
    case FixCategory::HexPrefix: return "hex_prefix";
    case FixCategory::QuotedPattern: return "quoted_pattern";
    case FixCategory::MissingSpaces: return "missing_spaces";
    case FixCategory::InlineAnnotation: return "inline_annotation";
    case FixCategory::MetadataInjected: return "metadata_injected";
    }
    return "?";
}

/// One applied repair, in application order. `line` is 1-based.
struct FixRecord {
    FixCategory category;
    std::string before;
    std::string after;
    std::size_t line = 0;

    bool operator==(const FixRecord&) const = default;
};

struct SanitizeResult {
    std::string text;
    std::vector<FixRecord> fixes;
};

namespace detail {

enum class Region : char { Code, Quote, Hex, Comment };

/// Tags every character as plain code, quoted-string content, hex-pattern
/// content (inside braces, braces themselves excluded), or comment content.
/// The rule body's own brace is recognized by looking back for the
/// `rule <name>` header; every other brace opens a hex region.
inline std::vector<Region> classify_regions(const std::string& text) {
    std::vector<Region> out(text.size(), Region::Code);
    bool in_hex = false, in_quote = false, in_comment = false;
    std::string tail; // recent code characters, for header lookback

    auto tail_is_rule_header = [&]() {
        std::size_t e = tail.size();
        while (e > 0 && std::isspace(static_cast<unsigned char>(tail[e - 1]))) --e;
        std::size_t b = e;
        while (b > 0 && is_ident_char(tail[b - 1])) --b;
        if (b == e) return false; // no identifier before '{'
        std::size_t we = b;
        while (we > 0 && std::isspace(static_cast<unsigned char>(tail[we - 1]))) --we;
        if (we < 4) return false;
        if (tail.compare(we - 4, 4, "rule") != 0) return false;
        return we == 4 || !is_ident_char(tail[we - 5]);
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '\n') {
            in_quote = false;
            in_comment = false;
            tail += ' ';
            continue;
        }
        if (in_comment) {
            out[i] = Region::Comment;
            continue;
        }
        if (in_hex) {
            if (c == '}') in_hex = false; // brace itself stays Code
            else out[i] = Region::Hex;
            continue;
        }
        if (in_quote) {
            out[i] = Region::Quote;
            if (c == '"') in_quote = false;
            continue;
        }
        if (c == '"') {
            out[i] = Region::Quote;
            in_quote = true;
            continue;
        }
        if (c == '/' && i + 1 < text.size() && text[i + 1] == '/') {
            out[i] = Region::Comment;
            in_comment = true;
            continue;
        }
        if (c == '{') {
            if (!tail_is_rule_header()) in_hex = true;
            tail += c;
            continue;
        }
        tail += c;
        if (tail.size() > 256) tail.erase(0, 128);
    }
    return out;
}

struct LineSpan {
    std::size_t start = 0; // global offset of first char
    std::string content;   // without trailing newline
};

inline std::vector<LineSpan> split_lines(const std::string& text) {
    std::vector<LineSpan> out;
    std::size_t i = 0;
    while (true) {
        const std::size_t nl = text.find('\n', i);
        if (nl == std::string::npos) {
            out.push_back({i, text.substr(i)});
            break;
        }
        out.push_back({i, text.substr(i, nl - i)});
        i = nl + 1;
    }
    return out;
}

inline std::string join_lines(const std::vector<std::string>& lines) {
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i) out += '\n';
        out += lines[i];
    }
    return out;
}

/// Applies `segment_fn` to each maximal run of Hex-tagged characters in a
/// line and splices the results back.
template <typename Fn>
inline std::string map_hex_segments(const std::string& line, const std::vector<Region>& regions,
                                    std::size_t line_start, Fn&& segment_fn) {
    std::string out;
    std::size_t i = 0;
    while (i < line.size()) {
        if (regions[line_start + i] != Region::Hex) {
            out += line[i++];
            continue;
        }
        std::size_t j = i;
        while (j < line.size() && regions[line_start + j] == Region::Hex) ++j;
        out += segment_fn(line.substr(i, j - i));
        i = j;
    }
    return out;
}

inline bool is_hexish_content(const std::string& s) {
    bool has_payload = false;
    for (char c : s) {
        if (is_hex_digit(c) || c == '?') has_payload = true;
        else if (!(std::isspace(static_cast<unsigned char>(c)) || c == 'x' || c == 'X' ||
                   c == '[' || c == ']' || c == '(' || c == ')'))
            return false;
    }
    return has_payload;
}

} // namespace detail

namespace sanitizer_passes {

// Pass: "--comment" -> "//comment" (line start or after whitespace, code region).
inline std::string comments_sql_lua(const std::string& line, const std::vector<detail::Region>& reg,
                                    std::size_t start, bool& changed) {
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
        if (reg[start + i] != detail::Region::Code) continue;
        if (line[i] != '-' || line[i + 1] != '-') continue;
        if (i != 0 && !std::isspace(static_cast<unsigned char>(line[i - 1]))) continue;
        changed = true;
        return line.substr(0, i) + "//" + line.substr(i + 2);
    }
    return line;
}

// Pass: "#comment" -> "//comment" (first non-space char only, so YARA count
// expressions like "#a > 2" deeper in a line are untouched).
inline std::string comments_python(const std::string& line, const std::vector<detail::Region>& reg,
                                   std::size_t start, bool& changed) {
    std::size_t i = 0;
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i < line.size() && line[i] == '#' && reg[start + i] == detail::Region::Code) {
        changed = true;
        return line.substr(0, i) + "//" + line.substr(i + 1);
    }
    return line;
}

// Pass: $p = "E8 ??" -> $p = {E8 ??} when the quoted content is hex-like.
inline std::string quoted_patterns(const std::string& line, const std::vector<detail::Region>& reg,
                                   std::size_t start, bool& changed) {
    std::string out = line;
    std::size_t i = 0;
    while (i < out.size()) {
        if (out[i] != '$' || (start + i < reg.size() && reg[start + i] != detail::Region::Code)) {
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        while (j < out.size() && detail::is_ident_char(out[j])) ++j;
        if (j == i + 1) { ++i; continue; }
        std::size_t k = j;
        while (k < out.size() && std::isspace(static_cast<unsigned char>(out[k]))) ++k;
        if (k >= out.size() || out[k] != '=') { ++i; continue; }
        ++k;
        while (k < out.size() && std::isspace(static_cast<unsigned char>(out[k]))) ++k;
        if (k >= out.size() || out[k] != '"') { ++i; continue; }
        const std::size_t close = out.find('"', k + 1);
        if (close == std::string::npos) { ++i; continue; }
        const std::string content = out.substr(k + 1, close - k - 1);
        if (!detail::is_hexish_content(content)) { i = close + 1; continue; }
        out = out.substr(0, k) + "{" + content + "}" + out.substr(close + 1);
        changed = true;
        i = k + content.size() + 2;
    }
    return out;
}

// Hex-segment pass: strip 0x prefixes ("0xFF" -> "FF", "0xF" -> "0F").
inline std::string hex_prefixes(const std::string& seg, bool& changed) {
    std::string out;
    std::size_t i = 0;
    while (i < seg.size()) {
        if (seg[i] == '0' && i + 2 < seg.size() && (seg[i + 1] == 'x' || seg[i + 1] == 'X') &&
            detail::is_hex_digit(seg[i + 2])) {
            std::size_t j = i + 2;
            std::string digits;
            while (j < seg.size() && detail::is_hex_digit(seg[j])) digits += seg[j++];
            if (digits.size() % 2 == 1) digits.insert(digits.begin(), '0');
            out += digits;
            i = j;
            changed = true;
            continue;
        }
        out += seg[i++];
    }
    return out;
}

// Hex-segment pass: drop parenthesized annotations, e.g. "74 (je)" -> "74".
inline std::string inline_annotations(const std::string& seg, bool& changed) {
    std::string out;
    std::size_t i = 0;
    while (i < seg.size()) {
        if (seg[i] == '(') {
            const std::size_t close = seg.find(')', i + 1);
            if (close != std::string::npos) {
                while (!out.empty() && out.back() == ' ') out.pop_back();
                i = close + 1;
                changed = true;
                continue;
            }
        }
        out += seg[i++];
    }
    return out;
}

// Hex-segment pass: normalize '?' runs of length >= 3 by greedy pairing;
// an odd leftover '?' is dropped. "???" -> "??", "????" -> "?? ??".
inline std::string wildcard_runs(const std::string& seg, bool& changed) {
    std::string out;
    std::size_t i = 0;
    while (i < seg.size()) {
        if (seg[i] != '?') {
            out += seg[i++];
            continue;
        }
        std::size_t j = i;
        while (j < seg.size() && seg[j] == '?') ++j;
        const std::size_t run = j - i;
        if (run >= 3) {
            for (std::size_t p = 0; p < run / 2; ++p) {
                if (p) out += ' ';
                out += "??";
            }
            changed = true;
        } else {
            out.append(run, '?');
        }
        i = j;
    }
    return out;
}

// Hex-segment pass: insert missing separators between byte elements, e.g.
// "E8??83F8" -> "E8 ?? 83 F8". Existing whitespace is never touched.
inline std::string missing_spaces(const std::string& seg, bool& changed) {
    auto starts_element = [](char c) { return detail::is_hex_digit(c) || c == '?' || c == '['; };
    std::string out;
    std::size_t i = 0;
    auto maybe_space = [&](std::size_t next) {
        if (next < seg.size() && starts_element(seg[next])) {
            out += ' ';
            changed = true;
        }
    };
    while (i < seg.size()) {
        const char c = seg[i];
        if (detail::is_hex_digit(c) && i + 1 < seg.size() && detail::is_hex_digit(seg[i + 1])) {
            out += c;
            out += seg[i + 1];
            i += 2;
            maybe_space(i);
            continue;
        }
        if (c == '?' && i + 1 < seg.size() && seg[i + 1] == '?') {
            out += "??";
            i += 2;
            maybe_space(i);
            continue;
        }
        if (c == '[') {
            const std::size_t close = seg.find(']', i + 1);
            if (close != std::string::npos) {
                out += seg.substr(i, close - i + 1);
                i = close + 1;
                maybe_space(i);
                continue;
            }
        }
        out += c;
        ++i;
    }
    return out;
}

} // namespace sanitizer_passes

/// Repairs the recurring malformations in raw LLM rule text and reports every
/// transformation applied, in order. Idempotent: a second application yields
/// the same text and zero fixes. Valid rules pass through byte-identical.
inline SanitizeResult sanitize(const std::string& input) {
    using detail::Region;
    SanitizeResult result;
    result.text = input;

    // Line-oriented passes over code regions.
    using LinePass = std::string (*)(const std::string&, const std::vector<Region>&, std::size_t,
                                     bool&);
    const std::pair<FixCategory, LinePass> line_passes[] = {
        {FixCategory::SqlLuaComment, sanitizer_passes::comments_sql_lua},
        {FixCategory::PythonComment, sanitizer_passes::comments_python},
        {FixCategory::QuotedPattern, sanitizer_passes::quoted_patterns},
    };
    for (const auto& [category, pass] : line_passes) {
        const auto regions = detail::classify_regions(result.text);
        const auto lines = detail::split_lines(result.text);
        std::vector<std::string> out;
        out.reserve(lines.size());
        for (std::size_t li = 0; li < lines.size(); ++li) {
            bool changed = false;
            std::string next = pass(lines[li].content, regions, lines[li].start, changed);
            if (changed)
                result.fixes.push_back({category, detail::trim(lines[li].content),
                                        detail::trim(next), li + 1});
            out.push_back(std::move(next));
        }
        result.text = detail::join_lines(out);
    }

    // Hex-segment passes inside pattern braces.
    using SegmentPass = std::string (*)(const std::string&, bool&);
    const std::pair<FixCategory, SegmentPass> segment_passes[] = {
        {FixCategory::HexPrefix, sanitizer_passes::hex_prefixes},
        {FixCategory::InlineAnnotation, sanitizer_passes::inline_annotations},
        {FixCategory::MalformedWildcard, sanitizer_passes::wildcard_runs},
        {FixCategory::MissingSpaces, sanitizer_passes::missing_spaces},
    };
    for (const auto& [category, pass] : segment_passes) {
        const auto regions = detail::classify_regions(result.text);
        const auto lines = detail::split_lines(result.text);
        std::vector<std::string> out;
        out.reserve(lines.size());
        for (std::size_t li = 0; li < lines.size(); ++li) {
            bool changed = false;
            std::string next = detail::map_hex_segments(
                lines[li].content, regions, lines[li].start,
                [&](const std::string& seg) { return pass(seg, changed); });
            if (changed)
                result.fixes.push_back({category, detail::trim(lines[li].content),
                                        detail::trim(next), li + 1});
            out.push_back(std::move(next));
        }
        result.text = detail::join_lines(out);
    }
    return result;
}

/// Adds the default breakpoint metadata when cape_options is absent:
/// bp0=<first pattern>+0,action0=skip. Returns true when injection happened.
/// Throws NoPatternsError for a rule with zero patterns.
inline bool inject_metadata(BypassRule& rule) {
    if (rule.meta_value("cape_options")) return false;
    if (rule.patterns.empty())
        throw NoPatternsError("cannot inject cape_options: rule has no patterns");
    ActionSpec spec;
    spec.breakpoints.push_back({0, rule.patterns.front().name, 0});
    spec.actions.push_back({0, DebuggerAction::Skip});
    rule.meta.push_back({"cape_options", render_cape_options(spec), true});
    rule.action = spec;
    return true;
}

} // namespace able
