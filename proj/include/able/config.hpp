#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "able/controller.hpp"
#include "able/orchestrator.hpp"
#include "able/simulator.hpp"

namespace able {

/// A campaign config materialized: budgets, samples with parsed traces,
/// model providers, and the sandbox pool.
struct LoadedCampaign {
    CampaignConfig config;
    std::vector<SampleSpec> samples;
    std::vector<ModelSlot> models;
    std::vector<std::shared_ptr<Sandbox>> sandboxes;
};

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file '" + path.string() + "'");
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

inline std::filesystem::path resolve_path(const std::filesystem::path& base,
                                          const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

inline std::string env_or(const char* var, const std::string& fallback) {
    const char* v = std::getenv(var);
    return (v && *v) ? v : fallback;
}

} // namespace detail

inline Scenario load_scenario_file(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error("scenario file '" + path + "' is not valid JSON: " + e.what());
    }
    return scenario_from_json(j);
}

/// Loads a campaign config document. Environment overrides:
///   ABLE_LLM_ENDPOINT      - overrides every http model endpoint
///   ABLE_REPORT_ENDPOINT   - overrides every controller report endpoint
///   ABLE_SANDBOX_CREDENTIALS - overrides controller credentials references
/// Relative paths inside the document resolve against its directory.
inline LoadedCampaign load_campaign(const nlohmann::json& j,
                                    const std::filesystem::path& base_dir) {
    LoadedCampaign out;
    try {
        CampaignConfig& cfg = out.config;
        if (j.contains("strategies")) {
            cfg.strategies.clear();
            for (const auto& s : j["strategies"]) {
                const auto id = parse_strategy_id(s.get<std::string>());
                if (!id) throw Error("unknown strategy '" + s.get<std::string>() + "'");
                cfg.strategies.push_back(*id);
            }
        }
        if (cfg.strategies.empty()) throw Error("campaign needs at least one strategy");
        cfg.max_iterations = j.value("max_iterations", cfg.max_iterations);
        cfg.validation_retries = j.value("validation_retries", cfg.validation_retries);
        cfg.theta = j.value("theta", cfg.theta);
        cfg.n_patterns = j.value("n_patterns", cfg.n_patterns);
        cfg.analysis_timeout_s = j.value("analysis_timeout_s", cfg.analysis_timeout_s);
        cfg.baseline_runs = j.value("baseline_runs", cfg.baseline_runs);
        cfg.trace_line_cap = j.value("trace_line_cap", cfg.trace_line_cap);
        cfg.history_window = j.value("history_window", cfg.history_window);
        cfg.require_trace_grounding =
            j.value("require_trace_grounding", cfg.require_trace_grounding);
        if (j.contains("limits")) {
            const auto& lim = j["limits"];
            cfg.limits.min_pattern_bytes =
                lim.value("min_pattern_bytes", cfg.limits.min_pattern_bytes);
            cfg.limits.max_pattern_bytes =
                lim.value("max_pattern_bytes", cfg.limits.max_pattern_bytes);
            cfg.limits.max_wildcard_ratio =
                lim.value("max_wildcard_ratio", cfg.limits.max_wildcard_ratio);
        }
        // Input paths resolve against the config directory; the results path
        // is an output and resolves against the working directory instead.
        if (j.contains("results")) cfg.results_path = j["results"].get<std::string>();

        for (const auto& m : j.at("models")) {
            ModelSlot slot;
            slot.name = m.at("name").get<std::string>();
            const std::string kind = m.value("provider", "http");
            if (kind == "scripted") {
                std::vector<std::string> script;
                if (m.contains("script"))
                    for (const auto& s : m["script"]) script.push_back(s.get<std::string>());
                if (m.contains("script_files"))
                    for (const auto& f : m["script_files"])
                        script.push_back(detail::read_file(
                            detail::resolve_path(base_dir, f.get<std::string>())));
                slot.provider = std::make_shared<ScriptedProvider>(slot.name, std::move(script),
                                                                   m.value("loop", false));
            } else if (kind == "http") {
                ModelConfig mc;
                mc.model_name = slot.name;
                mc.endpoint = detail::env_or("ABLE_LLM_ENDPOINT",
                                             m.value("endpoint", std::string{}));
                if (mc.endpoint.empty())
                    throw Error("model '" + slot.name +
                                "' needs an endpoint (or ABLE_LLM_ENDPOINT)");
                mc.endpoint_path = m.value("path", mc.endpoint_path);
                mc.temperature = m.value("temperature", mc.temperature);
                mc.max_context_tokens = m.value("max_context_tokens", mc.max_context_tokens);
                mc.request_timeout_s = m.value("request_timeout_s", mc.request_timeout_s);
                mc.max_attempts = m.value("max_attempts", mc.max_attempts);
                mc.backoff_initial_s = m.value("backoff_initial_s", mc.backoff_initial_s);
                slot.provider = std::make_shared<HttpProvider>(mc);
            } else {
                throw Error("unknown provider kind '" + kind + "' for model '" + slot.name +
                            "'");
            }
            out.models.push_back(std::move(slot));
        }
        if (out.models.empty()) throw Error("campaign needs at least one model");

        for (const auto& s : j.at("samples")) {
            SampleSpec spec;
            spec.id = s.at("id").get<std::string>();
            const auto trace_path =
                detail::resolve_path(base_dir, s.at("trace").get<std::string>());
            spec.trace = parse_trace(detail::read_file(trace_path), spec.id);
            spec.sandbox_ref = s.value("sandbox_ref", spec.id);
            out.samples.push_back(std::move(spec));
        }
        if (out.samples.empty()) throw Error("campaign needs at least one sample");

        const auto& sb = j.at("sandbox");
        const std::string type = sb.value("type", "simulator");
        if (type == "simulator") {
            std::vector<Scenario> scenarios;
            for (const auto& path : sb.at("scenarios"))
                scenarios.push_back(load_scenario_file(
                    detail::resolve_path(base_dir, path.get<std::string>()).string()));
            const std::size_t instances = sb.value("instances", std::size_t{1});
            for (std::size_t i = 0; i < std::max<std::size_t>(instances, 1); ++i)
                out.sandboxes.push_back(std::make_shared<SimulatorSandbox>(scenarios));
        } else if (type == "remote") {
            for (const auto& c : sb.at("controllers")) {
                ControllerConfig cc;
                cc.host = c.value("host", std::string{});
                cc.credentials_ref = detail::env_or(
                    "ABLE_SANDBOX_CREDENTIALS", c.value("credentials", std::string{}));
                cc.rule_dir =
                    detail::resolve_path(base_dir, c.at("rule_dir").get<std::string>())
                        .string();
                cc.report_endpoint = detail::env_or(
                    "ABLE_REPORT_ENDPOINT", c.at("report_endpoint").get<std::string>());
                cc.retry_count = c.value("retry_count", cc.retry_count);
                cc.recovery_command = c.value("recovery_command", cc.recovery_command);
                cc.analysis_timeout_s = cfg.analysis_timeout_s;
                out.sandboxes.push_back(std::make_shared<RemoteSandbox>(cc));
            }
        } else {
            throw Error("unknown sandbox type '" + type + "'");
        }
        if (out.sandboxes.empty()) throw Error("campaign needs at least one sandbox instance");
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("bad campaign config: ") + e.what());
    }
    return out;
}

inline LoadedCampaign load_campaign_file(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error("campaign config '" + path + "' is not valid JSON: " + e.what());
    }
    return load_campaign(j, std::filesystem::path(path).parent_path());
}

} // namespace able
