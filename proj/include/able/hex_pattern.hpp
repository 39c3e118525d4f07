#pragma once

#include <cctype>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "able/errors.hpp"

namespace able {

/// One element of a YARA hex string: a concrete byte, a single-byte wildcard
/// (`??`), or a fixed-length jump (`[n]`, matching n arbitrary bytes).
struct HexToken {
    enum class Kind { Byte, Wildcard, Jump };

    Kind kind = Kind::Wildcard;
    std::uint8_t value = 0; // Kind::Byte only
    std::size_t length = 0; // Kind::Jump only, >= 1

    static HexToken byte(std::uint8_t v) { return HexToken{Kind::Byte, v, 0}; }
    static HexToken wildcard() { return HexToken{Kind::Wildcard, 0, 0}; }
    static HexToken jump(std::size_t n) { return HexToken{Kind::Jump, 0, n}; }

    bool operator==(const HexToken&) const = default;
};

/// A named hex pattern from a rule's strings section.
struct HexPattern {
    std::string name; // includes the leading '$'
    std::vector<HexToken> tokens;

    /// Total bytes a match spans: bytes + wildcards + jump lengths.
    std::size_t byte_length() const {
        std::size_t n = 0;
        for (const auto& t : tokens)
            n += (t.kind == HexToken::Kind::Jump) ? t.length : 1;
        return n;
    }

    /// Bytes not pinned to a concrete value: wildcards + jump lengths.
    std::size_t wildcard_bytes() const {
        std::size_t n = 0;
        for (const auto& t : tokens) {
            if (t.kind == HexToken::Kind::Wildcard) n += 1;
            if (t.kind == HexToken::Kind::Jump) n += t.length;
        }
        return n;
    }

    /// Explicitly written byte elements (bytes + wildcards, jumps excluded).
    /// This is the measure the 6-20 length bound applies to.
    std::size_t token_bytes() const {
        std::size_t n = 0;
        for (const auto& t : tokens)
            if (t.kind != HexToken::Kind::Jump) n += 1;
        return n;
    }

    /// Concrete byte values in order, skipping wildcards and jumps.
    std::vector<std::uint8_t> concrete_bytes() const {
        std::vector<std::uint8_t> out;
        for (const auto& t : tokens)
            if (t.kind == HexToken::Kind::Byte) out.push_back(t.value);
        return out;
    }

    bool operator==(const HexPattern&) const = default;
};

namespace detail {

inline bool is_hex_digit(char c) {
    return std::isxdigit(static_cast<unsigned char>(c)) != 0;
}

inline int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return c - 'A' + 10;
}

} // namespace detail

/// Parses the token sequence of a brace-delimited hex pattern, e.g.
/// "{ E8 ?? [4] 85 C0 }". Nibble wildcards ("7?") and ranged jumps ("[2-4]")
/// are rejected; "[0]" is rejected.
inline std::vector<HexToken> parse_hex_pattern(const std::string& text) {
    std::size_t i = 0;
    const std::size_t n = text.size();
    auto skip_ws = [&] {
        while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    };

    skip_ws();
    if (i >= n || text[i] != '{')
        throw PatternSyntaxError("hex pattern must start with '{'", i);
    ++i;

    std::vector<HexToken> tokens;
    bool closed = false;
    while (i < n) {
        skip_ws();
        if (i >= n) break;
        const char c = text[i];
        if (c == '}') {
            closed = true;
            ++i;
            break;
        }
        if (c == '?') {
            if (i + 1 < n && text[i + 1] == '?') {
                tokens.push_back(HexToken::wildcard());
                i += 2;
            } else {
                throw PatternSyntaxError("incomplete wildcard: '?' must appear as '?\?'", i);
            }
            continue;
        }
        if (c == '[') {
            const std::size_t open = i;
            ++i;
            std::string digits;
            while (i < n && std::isdigit(static_cast<unsigned char>(text[i])))
                digits += text[i++];
            if (i < n && text[i] == '-')
                throw PatternSyntaxError("ranged jumps like [2-4] are not supported", open);
            if (i >= n || text[i] != ']')
                throw PatternSyntaxError("unterminated jump", open);
            if (digits.empty())
                throw PatternSyntaxError("jump needs a length, e.g. [4]", open);
            const unsigned long len = std::stoul(digits);
            if (len == 0)
                throw PatternSyntaxError("jump length must be >= 1", open);
            tokens.push_back(HexToken::jump(len));
            ++i;
            continue;
        }
        if (detail::is_hex_digit(c)) {
            if (i + 1 < n && text[i + 1] == '?')
                throw PatternSyntaxError("nibble wildcards like '7?' are not supported", i);
            if (i + 1 >= n || !detail::is_hex_digit(text[i + 1]))
                throw PatternSyntaxError("odd hex digit: bytes need two hex digits", i);
            const int v = detail::hex_value(c) * 16 + detail::hex_value(text[i + 1]);
            tokens.push_back(HexToken::byte(static_cast<std::uint8_t>(v)));
            i += 2;
            continue;
        }
        throw PatternSyntaxError(std::string("unexpected character '") + c + "' in hex pattern", i);
    }
    if (!closed)
        throw PatternSyntaxError("hex pattern must end with '}'", n);
    skip_ws();
    if (i < n)
        throw PatternSyntaxError("trailing content after '}'", i);
    return tokens;
}

/// Renders tokens in canonical form: uppercase hex, single spaces, no braces.
inline std::string render_hex_tokens(const std::vector<HexToken>& tokens) {
    static const char* digits = "0123456789ABCDEF";
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) out += ' ';
        switch (t.kind) {
        case HexToken::Kind::Byte:
            out += digits[t.value >> 4];
            out += digits[t.value & 0xF];
            break;
        case HexToken::Kind::Wildcard:
            out += "??";
            break;
        case HexToken::Kind::Jump:
            out += '[';
            out += std::to_string(t.length);
            out += ']';
            break;
        }
    }
    return out;
}

} // namespace able
