// able - command line front end for the bypass-rule pipeline.
//
// Exit codes: 0 success / rule valid, 1 rule invalid or campaign produced
// no successes, 2 operational error (bad file, transport failure, ...).

#include <exception>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "able/config.hpp"
#include "able/orchestrator.hpp"
#include "able/reporting.hpp"
#include "able/results.hpp"
#include "able/sanitizer.hpp"
#include "able/simulator.hpp"
#include "able/trace.hpp"
#include "able/validator.hpp"

namespace {

int cmd_sanitize(const std::string& path) {
    const std::string text = able::detail::read_file(path);
    const able::SanitizeResult res = able::sanitize(text);
    std::cout << res.text;
    if (!res.text.empty() && res.text.back() != '\n') std::cout << '\n';
    for (const auto& fix : res.fixes)
        std::cerr << "fix line " << fix.line << " [" << to_string(fix.category) << "]: "
                  << fix.before << "  ->  " << fix.after << '\n';
    return 0;
}

int cmd_validate(const std::string& path, std::size_t iteration) {
    const std::string text = able::detail::read_file(path);
    const able::ValidationReport report = able::validate(text, iteration);
    for (const auto& fix : report.fixes)
        std::cout << "fix line " << fix.line << " [" << to_string(fix.category) << "]: "
                  << fix.before << "  ->  " << fix.after << '\n';
    if (report.valid) {
        std::cout << "valid: " << report.rule->name << " (" << report.rule->patterns.size()
                  << " pattern" << (report.rule->patterns.size() == 1 ? "" : "s") << ")\n";
        return 0;
    }
    for (const auto& err : report.errors) {
        std::cout << "error [" << to_string(err.category) << "]";
        if (err.pattern_name) std::cout << " " << *err.pattern_name;
        std::cout << ": " << err.message << '\n';
    }
    return 1;
}

int cmd_trace_parse(const std::string& path, std::size_t cap) {
    const able::TraceDocument doc = able::parse_trace(able::detail::read_file(path), path);
    std::cout << "lines: " << doc.lines.size() << '\n';
    if (doc.exit_marker)
        std::cout << "exit marker (line " << (*doc.exit_marker + 1)
                  << "): " << doc.lines[*doc.exit_marker].disasm << '\n';
    else
        std::cout << "exit marker: none\n";
    std::cout << serialize_trace(doc, cap);
    return 0;
}

int cmd_baseline(const std::string& scenario_path, std::size_t runs) {
    const able::Scenario sc = able::load_scenario_file(scenario_path);
    able::SimulatorSandbox sandbox({sc});
    const able::Baseline base = able::establish_baseline(sandbox, sc.sample_id, runs);
    std::cout << "sample: " << sc.sample_id << '\n'
              << "runs: " << base.runs_observed << '\n'
              << "score: " << base.score << '\n'
              << "signatures (" << base.signatures.size() << "):\n";
    for (const auto& sig : base.signatures) std::cout << "  " << sig << '\n';
    return 0;
}

int cmd_simulate(const std::string& scenario_path, const std::string& rule_path) {
    const able::Scenario sc = able::load_scenario_file(scenario_path);
    const able::ValidationReport report =
        able::validate(able::detail::read_file(rule_path), 1);
    if (!report.valid) {
        for (const auto& err : report.errors)
            std::cout << "error [" << to_string(err.category) << "]: " << err.message << '\n';
        return 1;
    }
    const able::ExecutionResult result = able::simulate_execution(sc, *report.rule);
    able::Baseline base;
    base.signatures = sc.baseline_signatures;
    base.score = sc.baseline_signatures.size();
    const able::Outcome outcome = able::classify_outcome(result, base);
    std::cout << "status: " << to_string(outcome.status) << '\n'
              << "message: " << outcome.message << '\n'
              << "rule hits: " << result.rule_hits.size() << '\n';
    for (const auto& [name, offset] : result.rule_hits)
        std::cout << "  " << name << " at " << able::detail::format_offset(offset) << '\n';
    std::cout << "new signatures (" << outcome.new_signatures.size() << "):\n";
    for (const auto& sig : outcome.new_signatures) std::cout << "  " << sig << '\n';
    if (outcome.debugger_log && !outcome.debugger_log->empty())
        std::cout << "debugger log:\n" << *outcome.debugger_log << '\n';
    return outcome.status == able::OutcomeStatus::Success ? 0 : 1;
}

int cmd_run(const std::string& config_path) {
    able::LoadedCampaign campaign = able::load_campaign_file(config_path);
    able::SandboxPool pool(campaign.sandboxes);
    std::unique_ptr<able::ResultsWriter> writer;
    able::CompletedKeys done;
    if (!campaign.config.results_path.empty()) {
        try {
            done = able::completed_keys(able::read_results(campaign.config.results_path));
        } catch (const able::Error&) {
            // No readable prior results; start fresh.
        }
        writer = std::make_unique<able::ResultsWriter>(campaign.config.results_path);
    }
    able::ResultSink sink;
    if (writer)
        sink = [&writer](const able::SampleRun& run) { writer->append(run); };
    const std::vector<able::SampleRun> runs = able::run_campaign(
        campaign.samples, campaign.models, campaign.config, pool, sink, done);
    std::size_t solved = 0;
    for (const auto& run : runs) {
        std::cout << run.sample_id << " x " << run.model << " x " << run.strategy << ": "
                  << to_string(run.final_status);
        if (run.solved()) {
            ++solved;
            std::cout << " (iteration " << *run.success_iteration << ")";
        } else if (!run.failure_message.empty()) {
            std::cout << " (" << run.failure_message << ")";
        }
        std::cout << '\n';
    }
    std::cout << "solved " << solved << "/" << runs.size() << " runs";
    if (done.size()) std::cout << " (resumed past " << done.size() << ")";
    std::cout << '\n';
    return solved > 0 ? 0 : 1;
}

int cmd_report(const std::string& results_path, const std::string& table,
               const std::string& dimension, const std::string& removed_csv) {
    const std::vector<able::SampleRun> runs = able::read_results(results_path);
    if (table == "all") {
        std::cout << render_report(able::build_campaign_report(runs));
        return 0;
    }
    if (table == "cumulative") {
        std::cout << render_cumulative(able::cumulative_success(runs));
        return 0;
    }
    if (table == "unique") {
        std::cout << render_unique_shared(able::unique_shared(runs));
        return 0;
    }
    const auto dim = able::parse_dimension(dimension);
    if (!dim) throw able::Error("unknown dimension '" + dimension + "'");
    if (table == "retry") {
        std::cout << render_retry(able::retry_rate(runs, *dim), dimension);
        return 0;
    }
    if (table == "ablation") {
        std::set<std::string> removed;
        std::stringstream ss(removed_csv);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) removed.insert(item);
        if (removed.empty())
            throw able::Error("ablation needs --remove with at least one value");
        std::cout << render_ablation(able::ablation(runs, *dim, removed), *dim, removed);
        return 0;
    }
    throw able::Error("unknown table '" + table + "'");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"LLM-guided bypass-rule pipeline"};
    app.require_subcommand(1);

    std::string rule_path, trace_path, scenario_path, config_path, results_path;
    std::size_t iteration = 0, runs = 4, cap = 0;
    std::string table = "all", dimension = "model", removed_csv;

    auto* sanitize = app.add_subcommand("sanitize", "Auto-fix a rule file and print it");
    sanitize->add_option("rule", rule_path, "rule file")->required();

    auto* validate = app.add_subcommand("validate", "Validate a rule file");
    validate->add_option("rule", rule_path, "rule file")->required();
    validate->add_option("--iteration", iteration, "refinement iteration (default 0)");

    auto* trace = app.add_subcommand("trace", "Trace utilities");
    trace->require_subcommand(1);
    auto* trace_parse = trace->add_subcommand("parse", "Parse and summarize a trace file");
    trace_parse->add_option("trace", trace_path, "trace file")->required();
    trace_parse->add_option("--lines", cap, "serialization line cap (0 = all)");

    auto* baseline = app.add_subcommand("baseline", "Establish a scenario baseline");
    baseline->add_option("scenario", scenario_path, "scenario JSON file")->required();
    baseline->add_option("--runs", runs, "baseline runs (default 4)");

    auto* simulate = app.add_subcommand("simulate", "Run a rule against a scenario");
    simulate->add_option("scenario", scenario_path, "scenario JSON file")->required();
    simulate->add_option("rule", rule_path, "rule file")->required();

    auto* run = app.add_subcommand("run", "Run a campaign from a config file");
    run->add_option("config", config_path, "campaign config JSON")->required();

    auto* report = app.add_subcommand("report", "Render tables from a results file");
    report->add_option("results", results_path, "NDJSON results file")->required();
    report->add_option("--table", table, "cumulative|unique|retry|ablation|all");
    report->add_option("--dimension", dimension, "model|strategy|iteration");
    report->add_option("--remove", removed_csv, "comma-separated values to ablate");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sanitize) return cmd_sanitize(rule_path);
        if (*validate) return cmd_validate(rule_path, iteration);
        if (*trace_parse) return cmd_trace_parse(trace_path, cap);
        if (*baseline) return cmd_baseline(scenario_path, runs);
        if (*simulate) return cmd_simulate(scenario_path, rule_path);
        if (*run) return cmd_run(config_path);
        if (*report) return cmd_report(results_path, table, dimension, removed_csv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}
