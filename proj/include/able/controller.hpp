#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "able/sandbox.hpp"

namespace able {

/// Connection details for a remote sandbox controller.
struct ControllerConfig {
    std::string host;             // informational: which box this is
    std::string credentials_ref;  // "env:VAR" resolves at use time, else literal
    std::string rule_dir;         // where rendered rules are deployed
    std::string report_endpoint;  // HTTP endpoint for submit + report
    int retry_count = 3;
    std::string recovery_command; // shell command restoring the sandbox
    double analysis_timeout_s = 200.0;
};

/// Resolves a credentials reference: "env:NAME" reads the environment,
/// anything else is taken literally. Empty result means no credentials.
inline std::string resolve_credentials(const std::string& ref) {
    if (ref.rfind("env:", 0) == 0) {
        const char* v = std::getenv(ref.substr(4).c_str());
        return v ? v : "";
    }
    return ref;
}

/// Decodes a controller report into an ExecutionResult. Recognized fields:
/// signatures (list of {"name": ...} or plain strings), optional crash
/// section ({"signatures": [...], "debugger_log": ...}), optional top-level
/// debugger_log, malscore, and rule_hits ([{"pattern", "offset"}]). Unknown
/// fields are ignored. Throws ReportParseError on malformed documents.
inline ExecutionResult parse_report_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ReportParseError(std::string("report is not valid JSON: ") + e.what());
    }
    if (!j.is_object())
        throw ReportParseError("report JSON must be an object");
    ExecutionResult res;
    try {
        if (j.contains("signatures"))
            for (const auto& sig : j["signatures"]) {
                if (sig.is_object()) res.signatures.insert(sig.at("name").get<std::string>());
                else res.signatures.insert(sig.get<std::string>());
            }
        if (j.contains("crash")) {
            const auto& crash = j["crash"];
            if (crash.contains("signatures"))
                for (const auto& sig : crash["signatures"])
                    res.crash_signatures.insert(sig.get<std::string>());
            if (crash.contains("debugger_log"))
                res.debugger_log = crash["debugger_log"].get<std::string>();
        }
        if (j.contains("debugger_log") && res.debugger_log.empty())
            res.debugger_log = j["debugger_log"].get<std::string>();
        if (j.contains("malscore")) res.score = j["malscore"].get<double>();
        if (j.contains("rule_hits"))
            for (const auto& hit : j["rule_hits"])
                res.rule_hits.insert({hit.at("pattern").get<std::string>(),
                                      hit.at("offset").get<std::size_t>()});
    } catch (const nlohmann::json::exception& e) {
        throw ReportParseError(std::string("report field has wrong shape: ") + e.what());
    }
    return res;
}

/// Submission transport, injectable so tests can stub the controller.
class ReportTransport {
public:
    virtual ~ReportTransport() = default;

    /// Submits the sample for analysis and returns the raw report document.
    /// Connection-level failure raises TransportError.
    virtual std::string submit_and_fetch(const std::string& sample, double timeout_s) = 0;
};

/// POSTs {"sample", "timeout"} to the report endpoint and returns the body.
class HttpReportTransport : public ReportTransport {
public:
    explicit HttpReportTransport(ControllerConfig config) : config_(std::move(config)) {}

    std::string submit_and_fetch(const std::string& sample, double timeout_s) override {
        const auto split = split_url(config_.report_endpoint);
        httplib::Client client(split.first);
        client.set_connection_timeout(std::chrono::duration<double>(timeout_s));
        client.set_read_timeout(std::chrono::duration<double>(timeout_s));
        const std::string token = resolve_credentials(config_.credentials_ref);
        httplib::Headers headers;
        if (!token.empty()) headers.insert({"Authorization", "Bearer " + token});
        nlohmann::json body = {{"sample", sample}, {"timeout", timeout_s}};
        auto res = client.Post(split.second, headers, body.dump(), "application/json");
        if (!res)
            throw TransportError("controller endpoint unreachable: " +
                                 httplib::to_string(res.error()));
        if (res->status != 200)
            throw TransportError("controller returned status " + std::to_string(res->status));
        return res->body;
    }

private:
    static std::pair<std::string, std::string> split_url(const std::string& url) {
        // "http://host:port/path" -> ("http://host:port", "/path")
        const std::size_t scheme = url.find("://");
        const std::size_t path_start =
            url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
        if (path_start == std::string::npos) return {url, "/"};
        return {url.substr(0, path_start), url.substr(path_start)};
    }

    ControllerConfig config_;
};

/// Client for a remote analysis controller: deploys rendered rules into the
/// controller's rule directory, submits samples, and parses the returned
/// report. When the transport stays down through the retry budget, one
/// recovery attempt (the configured command) is made before a final try;
/// after that, SandboxUnavailableError.
class RemoteSandbox : public Sandbox {
public:
    explicit RemoteSandbox(ControllerConfig config,
                           std::unique_ptr<ReportTransport> transport = nullptr)
        : config_(std::move(config)), transport_(std::move(transport)) {
        if (!transport_) transport_ = std::make_unique<HttpReportTransport>(config_);
    }

    const ControllerConfig& config() const { return config_; }

    /// Writes the canonical rendering of the rule to
    /// <rule_dir>/<rule name>.yar, byte-identical to render_rule().
    std::filesystem::path deploy_rule(const BypassRule& rule) {
        namespace fs = std::filesystem;
        const fs::path dir(config_.rule_dir);
        fs::create_directories(dir);
        const fs::path target = dir / (rule.name + ".yar");
        std::ofstream out(target, std::ios::binary | std::ios::trunc);
        if (!out)
            throw SandboxUnavailableError("cannot write rule to " + target.string());
        out << render_rule(rule);
        out.close();
        return target;
    }

    ExecutionResult submit_sample(const std::string& sample, double timeout_s) {
        std::string last_error;
        const int retries = config_.retry_count > 0 ? config_.retry_count : 1;
        for (int attempt = 0; attempt < retries; ++attempt) {
            try {
                return parse_report_json(transport_->submit_and_fetch(sample, timeout_s));
            } catch (const TransportError& e) {
                last_error = e.what();
            }
        }
        recover();
        try {
            return parse_report_json(transport_->submit_and_fetch(sample, timeout_s));
        } catch (const TransportError& e) {
            last_error = e.what();
        }
        throw SandboxUnavailableError("controller '" + config_.host + "' unavailable after " +
                                      std::to_string(retries) +
                                      " retries and one recovery attempt: " + last_error);
    }

    ExecutionResult run(const std::string& sample, const BypassRule* rule) override {
        if (rule) deploy_rule(*rule);
        return submit_sample(sample, config_.analysis_timeout_s);
    }

    void recover() override {
        ++recoveries_;
        if (!config_.recovery_command.empty()) {
            // Best effort: the retry loop re-probes the sandbox either way.
            const int rc = std::system(config_.recovery_command.c_str());
            (void)rc;
        }
    }

    std::size_t recoveries() const { return recoveries_; }

private:
    ControllerConfig config_;
    std::unique_ptr<ReportTransport> transport_;
    std::size_t recoveries_ = 0;
};

} // namespace able
