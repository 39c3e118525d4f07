#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "able/hex_pattern.hpp"

namespace able {

/// One disassembly line: address text, raw instruction bytes, mnemonic text.
struct TraceLine {
    std::string address;
    std::vector<std::uint8_t> bytes;
    std::string disasm;

    bool operator==(const TraceLine&) const = default;
};

/// A captured execution trace ending at (or near) a process-exit call.
struct TraceDocument {
    std::string sample_id;
    std::vector<TraceLine> lines;
    std::optional<std::size_t> exit_marker; // index of the exit-call line

    bool operator==(const TraceDocument&) const = default;
};

namespace detail {

inline bool is_address_token(const std::string& tok) {
    if (tok.size() < 4 || tok.size() > 16) return false;
    return std::all_of(tok.begin(), tok.end(), [](char c) { return is_hex_digit(c); });
}

inline bool is_byte_token(const std::string& tok) {
    return tok.size() == 2 && is_hex_digit(tok[0]) && is_hex_digit(tok[1]);
}

inline bool mentions_exit_call(const std::string& disasm) {
    static const char* markers[] = {"exitprocess", "terminateprocess", "terminationprocess",
                                    "exitthread", "ntterminateprocess"};
    std::string lower = disasm;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (const char* m : markers)
        if (lower.find(m) != std::string::npos) return true;
    return false;
}

} // namespace detail

/// Parses "ADDRESS  BYTES  DISASM" lines. Lenient: a line that does not fit
/// the three-column shape is kept with the whole line as disasm. The exit
/// marker is the last line whose disasm mentions a process-exit API.
inline TraceDocument parse_trace(const std::string& text, const std::string& sample_id = "") {
    TraceDocument doc;
    doc.sample_id = sample_id;
    std::stringstream ss(text);
    std::string raw;
    while (std::getline(ss, raw)) {
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        std::string trimmed = detail::trim(raw);
        if (trimmed.empty()) continue;
        TraceLine line;
        std::stringstream ls(trimmed);
        std::string first;
        ls >> first;
        if (detail::is_address_token(first)) {
            line.address = first;
            std::string tok;
            std::string rest;
            while (ls >> tok) {
                if (rest.empty() && detail::is_byte_token(tok)) {
                    line.bytes.push_back(static_cast<std::uint8_t>(
                        detail::hex_value(tok[0]) * 16 + detail::hex_value(tok[1])));
                } else {
                    if (!rest.empty()) rest += ' ';
                    rest += tok;
                }
            }
            line.disasm = rest;
        } else {
            line.disasm = trimmed;
        }
        if (detail::mentions_exit_call(line.disasm)) doc.exit_marker = doc.lines.size();
        doc.lines.push_back(std::move(line));
    }
    return doc;
}

inline std::vector<std::uint8_t> trace_bytes(const TraceDocument& doc) {
    std::vector<std::uint8_t> out;
    for (const auto& line : doc.lines)
        out.insert(out.end(), line.bytes.begin(), line.bytes.end());
    return out;
}

namespace detail {

inline std::string format_trace_line(const TraceLine& line) {
    std::string bytes;
    for (auto b : line.bytes) {
        static const char* digits = "0123456789ABCDEF";
        if (!bytes.empty()) bytes += ' ';
        bytes += digits[b >> 4];
        bytes += digits[b & 0xF];
    }
    std::string out = line.address;
    if (!out.empty()) {
        while (out.size() < 10) out += ' ';
    }
    out += bytes;
    if (!line.disasm.empty()) {
        if (!out.empty()) {
            while (out.size() < 30) out += ' ';
            out += "  ";
        }
        out += line.disasm;
    }
    return out;
}

} // namespace detail

/// Serializes the trace, optionally capped to `line_cap` lines (0 = all).
/// The window is tail-biased toward the exit marker: it always keeps the
/// marker plus up to 16 following lines, and elisions are noted in place.
inline std::string serialize_trace(const TraceDocument& doc, std::size_t line_cap = 0) {
    std::size_t begin = 0, end = doc.lines.size();
    if (line_cap > 0 && doc.lines.size() > line_cap) {
        end = doc.exit_marker ? std::min(doc.lines.size(), *doc.exit_marker + 1 + 16)
                              : doc.lines.size();
        begin = end > line_cap ? end - line_cap : 0;
        if (doc.exit_marker && begin > *doc.exit_marker) begin = *doc.exit_marker;
        end = std::min(doc.lines.size(), begin + line_cap);
    }
    std::ostringstream out;
    if (begin > 0)
        out << "... (" << begin << " earlier trace lines omitted)\n";
    for (std::size_t i = begin; i < end; ++i)
        out << detail::format_trace_line(doc.lines[i]) << "\n";
    if (end < doc.lines.size())
        out << "... (" << (doc.lines.size() - end) << " later trace lines omitted)\n";
    return out.str();
}

} // namespace able
