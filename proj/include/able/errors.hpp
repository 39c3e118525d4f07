#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace able {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Rule-level structural problems: missing header/sections, unbalanced braces.
class StructureError : public Error {
public:
    using Error::Error;
};

/// Malformed hex pattern content. Carries the byte offset into the pattern
/// source where scanning stopped.
class PatternSyntaxError : public Error {
public:
    PatternSyntaxError(const std::string& msg, std::size_t offset)
        : Error(msg + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

/// Malformed cape_options content: bad key, bad verb, dangling action index.
class ActionSyntaxError : public Error {
public:
    using Error::Error;
};

/// Metadata injection requested on a rule with zero patterns.
class NoPatternsError : public Error {
public:
    using Error::Error;
};

/// Ratio queries on a pattern with byte_length zero.
class EmptyPatternError : public Error {
public:
    using Error::Error;
};

/// Prompt construction over a trace with no lines.
class EmptyTraceError : public Error {
public:
    using Error::Error;
};

/// Connection-level failure talking to a generation endpoint.
class TransportError : public Error {
public:
    using Error::Error;
};

/// Provider yielded no text (blank response or exhausted script).
class EmptyResponseError : public Error {
public:
    using Error::Error;
};

/// Model output contained no recognizable rule span.
class NoRuleFoundError : public Error {
public:
    using Error::Error;
};

/// Sandbox controller unreachable after retries plus recovery.
class SandboxUnavailableError : public Error {
public:
    using Error::Error;
};

/// Sandbox report was not parseable into an ExecutionResult.
class ReportParseError : public Error {
public:
    using Error::Error;
};

/// Ablation asked to remove a value absent from the campaign grid.
class UnknownDimensionValueError : public Error {
public:
    using Error::Error;
};

} // namespace able
