#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "able/orchestrator.hpp"

namespace able {

/// Compact persistent form of a SampleRun (prompts and full reports are
/// in-memory only; everything aggregation needs is kept).
inline nlohmann::json run_to_json(const SampleRun& run) {
    nlohmann::json j;
    j["sample"] = run.sample_id;
    j["model"] = run.model;
    j["strategy"] = run.strategy;
    j["final_status"] = to_string(run.final_status);
    if (run.success_iteration) j["success_iteration"] = *run.success_iteration;
    if (run.winning_rule) j["winning_rule"] = *run.winning_rule;
    if (run.best) j["best"] = {{"rule", run.best->first}, {"new_signatures", run.best->second}};
    if (!run.failure_message.empty()) j["failure_message"] = run.failure_message;
    j["iterations"] = nlohmann::json::array();
    for (const auto& it : run.iterations) {
        nlohmann::json entry;
        entry["executed"] = it.executed;
        if (it.generation_aborted) entry["generation_aborted"] = true;
        if (it.executed) {
            entry["status"] = to_string(it.status);
            entry["new_signatures"] = it.new_signatures;
        }
        if (!it.message.empty()) entry["message"] = it.message;
        j["iterations"].push_back(std::move(entry));
    }
    j["attempts"] = nlohmann::json::array();
    for (const auto& a : run.attempts)
        j["attempts"].push_back({{"iteration", a.iteration},
                                 {"attempt", a.attempt},
                                 {"validation_failed", a.validation_failed},
                                 {"latency_s", a.latency_s}});
    return j;
}

inline SampleRun run_from_json(const nlohmann::json& j) {
    SampleRun run;
    try {
        run.sample_id = j.at("sample").get<std::string>();
        run.model = j.at("model").get<std::string>();
        run.strategy = j.at("strategy").get<std::string>();
        const auto status = parse_final_status(j.at("final_status").get<std::string>());
        if (!status) throw Error("unknown final_status in results record");
        run.final_status = *status;
        if (j.contains("success_iteration"))
            run.success_iteration = j["success_iteration"].get<std::size_t>();
        if (j.contains("winning_rule")) run.winning_rule = j["winning_rule"].get<std::string>();
        if (j.contains("best"))
            run.best = {j["best"].at("rule").get<std::string>(),
                        j["best"].at("new_signatures").get<std::size_t>()};
        if (j.contains("failure_message"))
            run.failure_message = j["failure_message"].get<std::string>();
        if (j.contains("iterations"))
            for (const auto& entry : j["iterations"]) {
                IterationEntry it;
                it.executed = entry.at("executed").get<bool>();
                it.generation_aborted = entry.value("generation_aborted", false);
                if (it.executed) {
                    const auto st = parse_outcome_status(entry.at("status").get<std::string>());
                    if (!st) throw Error("unknown iteration status in results record");
                    it.status = *st;
                    for (const auto& sig : entry.at("new_signatures"))
                        it.new_signatures.insert(sig.get<std::string>());
                }
                it.message = entry.value("message", "");
                run.iterations.push_back(std::move(it));
            }
        if (j.contains("attempts"))
            for (const auto& a : j["attempts"])
                run.attempts.push_back({a.at("iteration").get<std::size_t>(),
                                        a.at("attempt").get<std::size_t>(),
                                        a.at("validation_failed").get<bool>(),
                                        a.value("latency_s", 0.0)});
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed results record: ") + e.what());
    }
    return run;
}

/// Reads a newline-delimited results file. Blank lines are skipped.
inline std::vector<SampleRun> read_results(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open results file '" + path + "'");
    std::vector<SampleRun> runs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error("results file '" + path + "' line " + std::to_string(line_no) +
                        " is not valid JSON: " + e.what());
        }
        runs.push_back(run_from_json(j));
    }
    return runs;
}

inline CompletedKeys completed_keys(const std::vector<SampleRun>& runs) {
    CompletedKeys keys;
    for (const auto& r : runs)
        keys.emplace(std::make_tuple(r.sample_id, r.model, r.strategy), r);
    return keys;
}

/// Append-mode incremental writer; one JSON record per line, flushed per
/// record so an interrupted campaign can resume from what reached disk.
class ResultsWriter {
public:
    explicit ResultsWriter(const std::string& path)
        : out_(path, std::ios::app) {
        if (!out_) throw Error("cannot open results file '" + path + "' for writing");
    }

    void append(const SampleRun& run) {
        out_ << run_to_json(run).dump() << "\n";
        out_.flush();
    }

private:
    std::ofstream out_;
};

} // namespace able
