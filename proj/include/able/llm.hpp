#pragma once

#include <chrono>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "able/errors.hpp"
#include "able/rule.hpp"

namespace able {

/// Generation parameters for one model endpoint.
struct ModelConfig {
    std::string model_name;
    double temperature = 0.7;
    std::size_t max_context_tokens = 128000;
    std::string endpoint;               // e.g. "http://127.0.0.1:11434"
    std::string endpoint_path = "/api/generate";
    double request_timeout_s = 120.0;
    int max_attempts = 3;               // transport retries
    double backoff_initial_s = 1.0;     // doubled after each failed attempt
};

/// Audit record of one generation call.
struct GenerationRecord {
    std::string prompt;
    std::string raw_output;
    std::string model;
    double latency_s = 0.0;
    std::size_t attempt_index = 0; // sequence number on this provider
};

/// A text-generation backend. Providers are shareable across threads; the
/// audit log never interleaves records.
class TextProvider {
public:
    virtual ~TextProvider() = default;

    std::string generate(const std::string& prompt) {
        const auto t0 = std::chrono::steady_clock::now();
        std::string raw = generate_impl(prompt);
        const auto t1 = std::chrono::steady_clock::now();
        if (raw.empty())
            throw EmptyResponseError("provider '" + name() + "' returned an empty response");
        std::lock_guard<std::mutex> lock(mutex_);
        GenerationRecord rec;
        rec.prompt = prompt;
        rec.raw_output = raw;
        rec.model = name();
        rec.latency_s = std::chrono::duration<double>(t1 - t0).count();
        rec.attempt_index = records_.size();
        records_.push_back(std::move(rec));
        return raw;
    }

    std::vector<GenerationRecord> records() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return records_;
    }

    virtual std::string name() const = 0;

protected:
    virtual std::string generate_impl(const std::string& prompt) = 0;

private:
    mutable std::mutex mutex_;
    std::vector<GenerationRecord> records_;
};

/// Deterministic provider that replays a fixed script of outputs in order.
/// Once the script is exhausted it raises EmptyResponseError (or cycles,
/// when constructed with loop=true).
class ScriptedProvider : public TextProvider {
public:
    ScriptedProvider(std::string model_name, std::vector<std::string> script, bool loop = false)
        : model_name_(std::move(model_name)), script_(std::move(script)), loop_(loop) {}

    std::string name() const override { return model_name_; }

    std::size_t remaining() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return script_.size() - std::min(cursor_, script_.size());
    }

protected:
    std::string generate_impl(const std::string&) override {
        std::lock_guard<std::mutex> lock(mutex_);
        if (cursor_ >= script_.size()) {
            if (!loop_ || script_.empty())
                throw EmptyResponseError("scripted provider '" + model_name_ + "' is exhausted");
            cursor_ = 0;
        }
        return script_[cursor_++];
    }

private:
    std::string model_name_;
    std::vector<std::string> script_;
    bool loop_;
    mutable std::mutex mutex_;
    std::size_t cursor_ = 0;
};

/// JSON-over-HTTP provider. Request: {"model", "prompt", "temperature"};
/// response: {"text": "..."} (a "response" field is accepted for
/// compatibility). Connection-level failures retry with exponential backoff
/// before surfacing as TransportError.
class HttpProvider : public TextProvider {
public:
    explicit HttpProvider(ModelConfig config) : config_(std::move(config)) {}

    std::string name() const override { return config_.model_name; }

    const ModelConfig& config() const { return config_; }

protected:
    std::string generate_impl(const std::string& prompt) override {
        nlohmann::json request = {
            {"model", config_.model_name},
            {"prompt", prompt},
            {"temperature", config_.temperature},
        };
        const std::string body = request.dump();

        std::string last_error;
        const int attempts = config_.max_attempts > 0 ? config_.max_attempts : 1;
        for (int attempt = 0; attempt < attempts; ++attempt) {
            if (attempt > 0) {
                const double delay = config_.backoff_initial_s * static_cast<double>(1 << (attempt - 1));
                std::this_thread::sleep_for(std::chrono::duration<double>(delay));
            }
            httplib::Client client(config_.endpoint);
            client.set_connection_timeout(std::chrono::duration<double>(config_.request_timeout_s));
            client.set_read_timeout(std::chrono::duration<double>(config_.request_timeout_s));
            auto res = client.Post(config_.endpoint_path, body, "application/json");
            if (!res) {
                last_error = "connection failed: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status != 200) {
                last_error = "endpoint returned status " + std::to_string(res->status);
                continue;
            }
            nlohmann::json parsed;
            try {
                parsed = nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::exception& e) {
                last_error = std::string("malformed response JSON: ") + e.what();
                continue;
            }
            if (parsed.contains("text") && parsed["text"].is_string())
                return parsed["text"].get<std::string>();
            if (parsed.contains("response") && parsed["response"].is_string())
                return parsed["response"].get<std::string>();
            last_error = "response JSON has no text field";
            continue;
        }
        throw TransportError("generation endpoint '" + config_.endpoint + "' failed after " +
                             std::to_string(attempts) + " attempt(s): " + last_error);
    }

private:
    ModelConfig config_;
};

namespace detail {

inline std::string strip_think_regions(const std::string& text) {
    static const std::pair<const char*, const char*> tags[] = {
        {"<think>", "</think>"},
        {"<thinking>", "</thinking>"},
    };
    std::string lower = text;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    std::string out;
    std::size_t i = 0;
    while (i < text.size()) {
        std::size_t next_open = std::string::npos;
        const char* close_tag = nullptr;
        for (const auto& [open, close] : tags) {
            const std::size_t pos = lower.find(open, i);
            if (pos != std::string::npos && pos < next_open) {
                next_open = pos;
                close_tag = close;
            }
        }
        if (next_open == std::string::npos) {
            out += text.substr(i);
            break;
        }
        out += text.substr(i, next_open - i);
        const std::size_t close = lower.find(close_tag, next_open);
        if (close == std::string::npos) break; // unclosed region: drop to end
        i = close + std::string(close_tag).size();
    }
    return out;
}

/// First balanced `rule <identifier> { ... }` span, or npos pair.
inline std::pair<std::size_t, std::size_t> find_rule_span(const std::string& text) {
    std::size_t pos = 0;
    while ((pos = text.find("rule", pos)) != std::string::npos) {
        const bool start_ok = pos == 0 || !is_ident_char(text[pos - 1]);
        std::size_t i = pos + 4;
        if (!start_ok || i >= text.size() ||
            !std::isspace(static_cast<unsigned char>(text[i]))) {
            pos += 4;
            continue;
        }
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t name_len = 0;
        while (i + name_len < text.size() && is_ident_char(text[i + name_len])) ++name_len;
        if (name_len == 0 || std::isdigit(static_cast<unsigned char>(text[i]))) {
            pos += 4;
            continue;
        }
        i += name_len;
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i >= text.size() || text[i] != '{') {
            pos += 4;
            continue;
        }
        int depth = 0;
        bool in_quote = false;
        for (std::size_t j = i; j < text.size(); ++j) {
            const char c = text[j];
            if (in_quote) {
                if (c == '\\' && j + 1 < text.size()) ++j;
                else if (c == '"') in_quote = false;
                continue;
            }
            if (c == '"') in_quote = true;
            else if (c == '{') ++depth;
            else if (c == '}') {
                if (--depth == 0) return {pos, j + 1};
            }
        }
        pos += 4; // unbalanced candidate; keep looking
    }
    return {std::string::npos, std::string::npos};
}

} // namespace detail

/// Pulls the rule text out of raw model output: strips <think>/<thinking>
/// regions, prefers the first fenced code block containing a rule (falling
/// back to the whole body), and returns the first balanced
/// `rule <name> { ... }` span. Idempotent on its own output. Throws
/// NoRuleFoundError when no span exists.
inline std::string extract_rule(const std::string& raw) {
    const std::string body = detail::strip_think_regions(raw);

    // Fenced code blocks first.
    std::size_t i = 0;
    while ((i = body.find("```", i)) != std::string::npos) {
        std::size_t content_start = i + 3;
        // optional language tag up to end of line
        const std::size_t nl = body.find('\n', content_start);
        const std::size_t close = body.find("```", content_start);
        if (close == std::string::npos) break;
        if (nl != std::string::npos && nl < close) content_start = nl + 1;
        const std::string content = body.substr(content_start, close - content_start);
        const auto [b, e] = detail::find_rule_span(content);
        if (b != std::string::npos) return content.substr(b, e - b);
        i = close + 3;
    }

    const auto [b, e] = detail::find_rule_span(body);
    if (b == std::string::npos)
        throw NoRuleFoundError("model output contains no YARA rule");
    return body.substr(b, e - b);
}

} // namespace able
