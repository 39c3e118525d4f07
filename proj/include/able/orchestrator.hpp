#pragma once

#include <atomic>
#include <condition_variable>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "able/llm.hpp"
#include "able/prompts.hpp"
#include "able/sandbox.hpp"
#include "able/validator.hpp"

namespace able {

/// Budgets and thresholds for a campaign (and for single-sample runs).
struct CampaignConfig {
    std::vector<StrategyId> strategies = {StrategyId::V0};
    std::size_t max_iterations = 3;      // sandbox executions per run
    std::size_t validation_retries = 3;  // generation attempts per iteration
    std::size_t theta = 1;               // new signatures required for Success
    std::size_t n_patterns = 3;
    double analysis_timeout_s = 200.0;
    std::size_t baseline_runs = 4;
    std::size_t trace_line_cap = 400;
    std::size_t history_window = 3;
    bool require_trace_grounding = false; // patterns must occur in trace bytes
    std::string results_path;             // newline-delimited records; empty = off
    ValidatorLimits limits;

    PromptOptions prompt_options() const {
        return PromptOptions{n_patterns, trace_line_cap, history_window};
    }
};

/// Raised when every generation attempt of one iteration failed validation.
/// Carries all reports so callers can inspect what the model kept getting
/// wrong. The iteration is consumed; the sample run continues.
class GenerationAbortedError : public Error {
public:
    explicit GenerationAbortedError(std::vector<ValidationReport> reports)
        : Error("rule generation aborted after " + std::to_string(reports.size()) +
                " invalid attempt(s)"),
          reports_(std::move(reports)) {}

    const std::vector<ValidationReport>& reports() const { return reports_; }

private:
    std::vector<ValidationReport> reports_;
};

/// One generation attempt, for retry-rate accounting.
struct AttemptRecord {
    std::size_t iteration = 0;
    std::size_t attempt = 0;
    bool validation_failed = false;
    double latency_s = 0.0;
};

/// One refinement iteration as recorded in a SampleRun.
struct IterationEntry {
    bool executed = false;           // false when generation aborted
    bool generation_aborted = false;
    OutcomeStatus status = OutcomeStatus::Failed;
    std::set<std::string> new_signatures;
    std::string message;
    std::string rule_text;
    std::optional<std::string> debugger_log;

    bool crashed_with_new_signatures() const {
        return executed && status == OutcomeStatus::Crashed && !new_signatures.empty();
    }
};

enum class FinalStatus { Success, PartialBest, Failure, SandboxUnavailable };

inline const char* to_string(FinalStatus s) {
    switch (s) {
    case FinalStatus::Success: return "Success";
    case FinalStatus::PartialBest: return "PartialBest";
    case FinalStatus::Failure: return "Failure";
    case FinalStatus::SandboxUnavailable: return "SandboxUnavailable";
    }
    return "?";
}

inline std::optional<FinalStatus> parse_final_status(const std::string& s) {
    if (s == "Success") return FinalStatus::Success;
    if (s == "PartialBest") return FinalStatus::PartialBest;
    if (s == "Failure") return FinalStatus::Failure;
    if (s == "SandboxUnavailable") return FinalStatus::SandboxUnavailable;
    return std::nullopt;
}

/// Everything one (sample, model, strategy) run produced.
struct SampleRun {
    std::string sample_id;
    std::string model;
    std::string strategy;
    FinalStatus final_status = FinalStatus::Failure;
    std::optional<std::size_t> success_iteration;
    std::optional<std::string> winning_rule;
    std::optional<std::pair<std::string, std::size_t>> best; // rule text, |new|
    std::string failure_message;
    std::vector<IterationEntry> iterations;
    std::vector<AttemptRecord> attempts;
    // In-memory only; not persisted in results records.
    std::vector<GenerationRecord> generation_records;
    std::vector<ValidationReport> validation_reports;

    bool solved() const { return final_status == FinalStatus::Success; }
};

/// Maps a failed outcome to revision guidance. Success is a precondition
/// violation - there is nothing to fix.
inline FeedbackText analyze_failure(const Outcome& outcome) {
    FeedbackText fb;
    switch (outcome.status) {
    case OutcomeStatus::Success:
        throw std::invalid_argument("analyze_failure is only defined for failed outcomes");
    case OutcomeStatus::Crashed:
        fb.category = FeedbackCategory::Crashed;
        fb.body = std::string("The previous rule crashed the monitored process: the action "
                              "fired at an unsafe offset (likely mid-instruction or inside a "
                              "fragile sequence). Review the debugger log and ") +
                  feedback_directive(FeedbackCategory::Crashed) +
                  ", keeping the trigger on an instruction boundary.";
        fb.debugger_log_excerpt = outcome.debugger_log;
        break;
    case OutcomeStatus::Partial:
        fb.category = FeedbackCategory::Partial;
        fb.body = std::string("The rule matched but execution revealed no new behaviors - the "
                              "bypass fired at the wrong place. Re-examine the trace and ") +
                  feedback_directive(FeedbackCategory::Partial) +
                  ": the comparison or branch that decides whether the program exits early.";
        break;
    case OutcomeStatus::Failed:
        fb.category = FeedbackCategory::Failed;
        fb.body = std::string("The rule's patterns did not match the binary at all. Try ") +
                  feedback_directive(FeedbackCategory::Failed) +
                  " around the target instruction, or selecting alternative instruction "
                  "sequences from the trace.";
        break;
    }
    return fb;
}

/// Generates one validated rule: builds the appropriate prompt (initial when
/// the history is empty, revision otherwise), calls the provider, extracts
/// and validates, and on failure retries with a correction prompt, up to
/// config.validation_retries attempts. Exhausting the budget raises
/// GenerationAbortedError carrying every report.
inline BypassRule generate_valid_rule(
    const TraceDocument& trace, const ReasoningStrategy& strat, std::size_t iteration,
    const std::vector<std::pair<std::string, Outcome>>& history,
    const std::optional<std::string>& best_rule, const std::optional<FeedbackText>& feedback,
    TextProvider& provider, const CampaignConfig& config,
    std::vector<AttemptRecord>* attempts_out = nullptr,
    std::vector<ValidationReport>* reports_out = nullptr,
    std::vector<GenerationRecord>* records_out = nullptr) {
    const PromptOptions options = config.prompt_options();
    const std::size_t budget = config.validation_retries ? config.validation_retries : 1;

    std::vector<ValidationReport> reports;
    std::string prompt;
    std::string failed_text;
    std::vector<std::uint8_t> grounding_bytes;
    if (config.require_trace_grounding) grounding_bytes = trace_bytes(trace);

    for (std::size_t attempt = 0; attempt < budget; ++attempt) {
        if (attempt == 0) {
            if (history.empty()) {
                prompt = build_initial_prompt(trace, strat, options);
            } else {
                prompt = build_revision_prompt(trace, history, best_rule,
                                               feedback ? *feedback
                                                        : analyze_failure(history.back().second),
                                               options);
            }
        } else {
            prompt = build_retry_prompt(reports.back().errors, failed_text, trace, options);
        }

        const auto t0 = std::chrono::steady_clock::now();
        const std::string raw = provider.generate(prompt);
        const double latency =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        ValidationReport report;
        std::string candidate;
        try {
            candidate = extract_rule(raw);
            report = validate(candidate, iteration, config.limits);
        } catch (const NoRuleFoundError& e) {
            report.valid = false;
            report.errors.push_back(
                {ErrorCategory::Structure, std::nullopt,
                 std::string(e.what()) +
                     "; respond with one rule of the form 'rule Name { meta: ... strings: "
                     "... condition: ... }'"});
            candidate = raw;
        }
        if (report.valid && config.require_trace_grounding && report.rule) {
            for (const auto& p : report.rule->patterns) {
                if (match_pattern(grounding_bytes, p).empty()) {
                    report.errors.push_back(
                        {ErrorCategory::Context, p.name,
                         "pattern " + p.name + " does not occur in the trace bytes; build "
                             "patterns from instruction bytes that appear in the trace"});
                }
            }
            report.valid = report.errors.empty();
        }

        if (records_out)
            records_out->push_back({prompt, raw, provider.name(), latency, attempt});
        if (attempts_out)
            attempts_out->push_back({iteration, attempt, !report.valid, latency});
        if (reports_out) reports_out->push_back(report);

        if (report.valid) return *report.rule;

        failed_text = report.sanitized_text.empty() ? candidate : report.sanitized_text;
        reports.push_back(std::move(report));
    }
    throw GenerationAbortedError(std::move(reports));
}

/// The refinement loop for one (sample, model, strategy) triple: up to
/// config.max_iterations generate->execute->classify rounds, stopping early
/// on Success. Failed iterations feed analyze_failure guidance into the
/// next revision prompt; the best non-crashed attempt (by new-signature
/// count) is tracked and returned as PartialBest when no iteration
/// succeeds. A generation abort consumes its iteration without a sandbox
/// execution.
inline SampleRun revise_rule(const TraceDocument& trace, const std::string& sample,
                             const Baseline& baseline, const ReasoningStrategy& strat,
                             TextProvider& provider, Sandbox& sandbox,
                             const CampaignConfig& config) {
    SampleRun run;
    run.sample_id = sample.empty() ? trace.sample_id : sample;
    run.model = provider.name();
    run.strategy = strat.name;

    std::vector<std::pair<std::string, Outcome>> history;
    std::optional<std::string> best_rule;
    std::size_t best_count = 0;

    const std::size_t iterations = config.max_iterations ? config.max_iterations : 1;
    for (std::size_t i = 0; i < iterations; ++i) {
        std::optional<FeedbackText> feedback;
        if (!history.empty()) feedback = analyze_failure(history.back().second);

        BypassRule rule;
        try {
            rule = generate_valid_rule(trace, strat, i, history, best_rule, feedback, provider,
                                       config, &run.attempts, &run.validation_reports,
                                       &run.generation_records);
        } catch (const GenerationAbortedError& e) {
            IterationEntry entry;
            entry.executed = false;
            entry.generation_aborted = true;
            entry.message = e.what();
            run.iterations.push_back(std::move(entry));
            continue; // iteration consumed, no execution
        }

        const std::string rule_text = render_rule(rule);
        const ExecutionResult result = sandbox.run(run.sample_id, &rule);
        const Outcome outcome = classify_outcome(result, baseline, config.theta);

        IterationEntry entry;
        entry.executed = true;
        entry.status = outcome.status;
        entry.new_signatures = outcome.new_signatures;
        entry.message = outcome.message;
        entry.rule_text = rule_text;
        entry.debugger_log = outcome.debugger_log;
        run.iterations.push_back(entry);
        history.emplace_back(rule_text, outcome);

        if (outcome.status == OutcomeStatus::Success) {
            run.final_status = FinalStatus::Success;
            run.success_iteration = i;
            run.winning_rule = rule_text;
            return run;
        }
        // Track the best failed attempt. Crashed attempts never qualify;
        // Partial attempts qualify only when they surfaced something new.
        if (outcome.status == OutcomeStatus::Partial && !outcome.new_signatures.empty() &&
            outcome.new_signatures.size() > best_count) {
            best_count = outcome.new_signatures.size();
            best_rule = rule_text;
        }
    }
    if (best_rule) {
        run.final_status = FinalStatus::PartialBest;
        run.winning_rule = best_rule;
        run.best = {*best_rule, best_count};
    } else {
        run.final_status = FinalStatus::Failure;
    }
    return run;
}

/// A sample in a campaign: id, its trace, and the reference handed to the
/// sandbox (scenario sample_id or remote sample path; defaults to id).
struct SampleSpec {
    std::string id;
    TraceDocument trace;
    std::string sandbox_ref;
};

/// A model slot: a provider plus the display name used in reports.
struct ModelSlot {
    std::string name;
    std::shared_ptr<TextProvider> provider;
};

/// Fixed-size pool of sandbox instances; a campaign run leases one instance
/// for exclusive use and returns it afterwards.
class SandboxPool {
public:
    explicit SandboxPool(std::vector<std::shared_ptr<Sandbox>> instances)
        : instances_(std::move(instances)) {
        if (instances_.empty()) throw Error("sandbox pool needs at least one instance");
    }

    std::size_t size() const { return instances_.size(); }

    std::shared_ptr<Sandbox> acquire() {
        std::unique_lock<std::mutex> lock(mutex_);
        cv_.wait(lock, [&] { return !instances_.empty(); });
        auto out = instances_.back();
        instances_.pop_back();
        return out;
    }

    void release(std::shared_ptr<Sandbox> instance) {
        {
            std::lock_guard<std::mutex> lock(mutex_);
            instances_.push_back(std::move(instance));
        }
        cv_.notify_one();
    }

private:
    std::mutex mutex_;
    std::condition_variable cv_;
    std::vector<std::shared_ptr<Sandbox>> instances_;
};

using ResultSink = std::function<void(const SampleRun&)>;
using CompletedKeys = std::map<std::tuple<std::string, std::string, std::string>, SampleRun>;

/// Runs the full (sample x model x strategy) grid. Baselines are computed
/// once per sample and shared. Each run leases one pool instance; runs
/// proceed concurrently up to the pool size. Per-run failures (sandbox
/// down, provider down) are recorded in that run's result and never abort
/// the campaign. `completed` keys are skipped (resume); every finished run
/// is handed to `sink` before the campaign moves on.
inline std::vector<SampleRun> run_campaign(const std::vector<SampleSpec>& samples,
                                           const std::vector<ModelSlot>& models,
                                           const CampaignConfig& config, SandboxPool& pool,
                                           const ResultSink& sink = {},
                                           const CompletedKeys& completed = {}) {
    struct Triple {
        const SampleSpec* sample;
        const ModelSlot* model;
        StrategyId strategy;
    };
    std::vector<Triple> triples;
    for (const auto& s : samples)
        for (const auto& m : models)
            for (const auto st : config.strategies) triples.push_back({&s, &m, st});

    std::vector<SampleRun> results(triples.size());
    std::mutex sink_mutex;

    // Baselines: computed once per sample by the first worker to need them.
    std::mutex baseline_mutex;
    std::map<std::string, std::shared_future<Baseline>> baselines;
    auto baseline_for = [&](const SampleSpec& sample,
                            const std::shared_ptr<Sandbox>& sandbox) -> Baseline {
        std::shared_future<Baseline> fut;
        std::promise<Baseline> mine;
        bool compute = false;
        {
            std::lock_guard<std::mutex> lock(baseline_mutex);
            auto it = baselines.find(sample.id);
            if (it == baselines.end()) {
                fut = mine.get_future().share();
                baselines.emplace(sample.id, fut);
                compute = true;
            } else {
                fut = it->second;
            }
        }
        if (compute) {
            try {
                mine.set_value(establish_baseline(
                    *sandbox, sample.sandbox_ref.empty() ? sample.id : sample.sandbox_ref,
                    config.baseline_runs));
            } catch (...) {
                mine.set_exception(std::current_exception());
            }
        }
        return fut.get();
    };

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            const std::size_t idx = next.fetch_add(1);
            if (idx >= triples.size()) return;
            const Triple& t = triples[idx];
            const std::string strategy_name = to_string(t.strategy);

            const auto key = std::make_tuple(t.sample->id, t.model->name, strategy_name);
            if (auto it = completed.find(key); it != completed.end()) {
                results[idx] = it->second;
                continue;
            }

            SampleRun run;
            auto sandbox = pool.acquire();
            try {
                const Baseline baseline = baseline_for(*t.sample, sandbox);
                const std::string ref =
                    t.sample->sandbox_ref.empty() ? t.sample->id : t.sample->sandbox_ref;
                run = revise_rule(t.sample->trace, ref, baseline, strategy(t.strategy),
                                  *t.model->provider, *sandbox, config);
                run.sample_id = t.sample->id;
            } catch (const SandboxUnavailableError& e) {
                run = SampleRun{};
                run.final_status = FinalStatus::SandboxUnavailable;
                run.failure_message = e.what();
            } catch (const Error& e) {
                run = SampleRun{};
                run.final_status = FinalStatus::Failure;
                run.failure_message = e.what();
            }
            run.sample_id = t.sample->id;
            run.model = t.model->name;
            run.strategy = strategy_name;
            pool.release(std::move(sandbox));

            if (sink) {
                std::lock_guard<std::mutex> lock(sink_mutex);
                sink(run);
            }
            results[idx] = std::move(run);
        }
    };

    const std::size_t workers = std::min(pool.size(), triples.size());
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(workers);
        for (std::size_t i = 0; i < workers; ++i) threads.emplace_back(worker);
        for (auto& th : threads) th.join();
    }
    return results;
}

} // namespace able
