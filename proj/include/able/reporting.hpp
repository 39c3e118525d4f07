#pragma once

#include <algorithm>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "able/orchestrator.hpp"

namespace able {

/// Signatures a run surfaced beyond the baseline.
inline std::set<std::string> signature_diff(const Baseline& baseline,
                                            const ExecutionResult& result) {
    std::set<std::string> out;
    for (const auto& s : result.signatures)
        if (!baseline.signatures.count(s)) out.insert(s);
    return out;
}

/// Cumulative success counts: for each (model, strategy) cell and iteration
/// k, the number of distinct samples first solved at iteration <= k. Row
/// and column totals count distinct samples (a sample solved by two
/// strategies counts once in the model total).
struct CumulativeTable {
    std::vector<std::string> models;
    std::vector<std::string> strategies;
    std::size_t iteration_count = 0;
    // cells[(model, strategy)][k] = distinct samples solved by iteration k
    std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> cells;
    std::map<std::string, std::vector<std::size_t>> model_totals;    // across strategies
    std::map<std::string, std::vector<std::size_t>> strategy_totals; // across models
    std::vector<std::size_t> ensemble_totals;                        // across everything
};

namespace detail {

inline void sorted_unique(std::vector<std::string>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

} // namespace detail

inline CumulativeTable cumulative_success(const std::vector<SampleRun>& runs) {
    CumulativeTable table;
    for (const auto& r : runs) {
        table.models.push_back(r.model);
        table.strategies.push_back(r.strategy);
        table.iteration_count = std::max(
            {table.iteration_count, r.iterations.size(),
             r.success_iteration ? *r.success_iteration + 1 : std::size_t{0}});
    }
    detail::sorted_unique(table.models);
    detail::sorted_unique(table.strategies);
    if (table.iteration_count == 0) table.iteration_count = 1;
    const std::size_t K = table.iteration_count;

    // first-success iteration per scope
    std::map<std::pair<std::string, std::string>, std::map<std::string, std::size_t>> cell_first;
    std::map<std::string, std::map<std::string, std::size_t>> model_first, strategy_first;
    std::map<std::string, std::size_t> ensemble_first;
    auto note = [](std::map<std::string, std::size_t>& m, const std::string& sample,
                   std::size_t iter) {
        auto it = m.find(sample);
        if (it == m.end() || iter < it->second) m[sample] = iter;
    };
    for (const auto& r : runs) {
        if (!r.solved() || !r.success_iteration) continue;
        note(cell_first[{r.model, r.strategy}], r.sample_id, *r.success_iteration);
        note(model_first[r.model], r.sample_id, *r.success_iteration);
        note(strategy_first[r.strategy], r.sample_id, *r.success_iteration);
        note(ensemble_first, r.sample_id, *r.success_iteration);
    }
    auto accumulate = [K](const std::map<std::string, std::size_t>& firsts) {
        std::vector<std::size_t> out(K, 0);
        for (const auto& [sample, iter] : firsts)
            for (std::size_t k = iter; k < K; ++k) ++out[k];
        return out;
    };
    for (const auto& m : table.models)
        for (const auto& s : table.strategies)
            table.cells[{m, s}] = accumulate(cell_first[{m, s}]);
    for (const auto& m : table.models) table.model_totals[m] = accumulate(model_first[m]);
    for (const auto& s : table.strategies)
        table.strategy_totals[s] = accumulate(strategy_first[s]);
    table.ensemble_totals = accumulate(ensemble_first);
    return table;
}

/// Unique/shared solve counts per model: unique = samples only this model
/// solved; shared = samples this model solved that at least one other model
/// also solved. all_models_shared counts samples every model solved.
struct UniqueSharedTable {
    std::map<std::string, std::size_t> unique;
    std::map<std::string, std::size_t> shared;
    std::size_t all_models_shared = 0;
    std::size_t total_solved = 0; // distinct samples solved by anyone
};

inline UniqueSharedTable unique_shared(const std::vector<SampleRun>& runs) {
    std::set<std::string> models;
    std::map<std::string, std::set<std::string>> solved_by; // sample -> models
    for (const auto& r : runs) {
        models.insert(r.model);
        if (r.solved()) solved_by[r.sample_id].insert(r.model);
    }
    UniqueSharedTable table;
    for (const auto& m : models) {
        table.unique[m] = 0;
        table.shared[m] = 0;
    }
    for (const auto& [sample, solvers] : solved_by) {
        if (solvers.empty()) continue;
        ++table.total_solved;
        if (solvers.size() == 1) {
            ++table.unique[*solvers.begin()];
        } else {
            for (const auto& m : solvers) ++table.shared[m];
        }
        if (!models.empty() && solvers.size() == models.size()) ++table.all_models_shared;
    }
    return table;
}

enum class Dimension { Model, Strategy, Iteration };

inline const char* to_string(Dimension d) {
    switch (d) {
    case Dimension::Model: return "model";
    case Dimension::Strategy: return "strategy";
    case Dimension::Iteration: return "iteration";
    }
    return "?";
}

inline std::optional<Dimension> parse_dimension(const std::string& s) {
    if (s == "model") return Dimension::Model;
    if (s == "strategy") return Dimension::Strategy;
    if (s == "iteration") return Dimension::Iteration;
    return std::nullopt;
}

/// Correction-rate accounting: calls = generation attempts in the bucket,
/// retries = attempts whose validation failed.
struct RetryRow {
    std::string key;
    std::size_t calls = 0;
    std::size_t retries = 0;

    double rate_pct() const {
        return calls == 0 ? 0.0 : 100.0 * static_cast<double>(retries) /
                                      static_cast<double>(calls);
    }
};

inline std::vector<RetryRow> retry_rate(const std::vector<SampleRun>& runs,
                                        Dimension dimension) {
    std::map<std::string, RetryRow> buckets;
    for (const auto& r : runs) {
        for (const auto& a : r.attempts) {
            std::string key;
            switch (dimension) {
            case Dimension::Model: key = r.model; break;
            case Dimension::Strategy: key = r.strategy; break;
            case Dimension::Iteration: key = "iter" + std::to_string(a.iteration); break;
            }
            auto& row = buckets[key];
            row.key = key;
            ++row.calls;
            if (a.validation_failed) ++row.retries;
        }
    }
    std::vector<RetryRow> out;
    for (auto& [k, row] : buckets) out.push_back(row);
    return out;
}

/// Ensemble solve counts with one dimension value (or value set) removed.
struct AblationResult {
    std::size_t full = 0; // distinct samples solved by the full ensemble
    std::size_t kept = 0; // distinct samples still solved after removal
    long long delta() const {
        return static_cast<long long>(kept) - static_cast<long long>(full);
    }
};

/// Recomputes ensemble coverage without the named models, strategies, or
/// iteration indices. Iteration removal discounts successes achieved at a
/// removed iteration. Unknown values raise UnknownDimensionValueError.
inline AblationResult ablation(const std::vector<SampleRun>& runs, Dimension dimension,
                               const std::set<std::string>& removed) {
    std::set<std::string> known;
    std::size_t max_iterations = 0;
    for (const auto& r : runs) {
        switch (dimension) {
        case Dimension::Model: known.insert(r.model); break;
        case Dimension::Strategy: known.insert(r.strategy); break;
        case Dimension::Iteration: break;
        }
        max_iterations = std::max(
            {max_iterations, r.iterations.size(),
             r.success_iteration ? *r.success_iteration + 1 : std::size_t{0}});
    }
    if (dimension == Dimension::Iteration)
        for (std::size_t k = 0; k < max_iterations; ++k) {
            known.insert(std::to_string(k));
            known.insert("iter" + std::to_string(k));
        }
    for (const auto& v : removed)
        if (!known.count(v))
            throw UnknownDimensionValueError("no " + std::string(to_string(dimension)) +
                                             " named '" + v + "' in this campaign");

    AblationResult out;
    std::set<std::string> full_solved, kept_solved;
    for (const auto& r : runs) {
        if (!r.solved()) continue;
        full_solved.insert(r.sample_id);
        bool drop = false;
        switch (dimension) {
        case Dimension::Model: drop = removed.count(r.model) > 0; break;
        case Dimension::Strategy: drop = removed.count(r.strategy) > 0; break;
        case Dimension::Iteration:
            if (r.success_iteration) {
                const std::string k = std::to_string(*r.success_iteration);
                drop = removed.count(k) > 0 || removed.count("iter" + k) > 0;
            }
            break;
        }
        if (!drop) kept_solved.insert(r.sample_id);
    }
    out.full = full_solved.size();
    out.kept = kept_solved.size();
    return out;
}

/// Samples whose runs crashed while still surfacing new signatures, and
/// which no configuration ever solved - the runs excluded from success
/// counts by crash precedence.
inline std::size_t crashed_with_new_signatures_tally(const std::vector<SampleRun>& runs) {
    std::set<std::string> solved, crashed_new;
    for (const auto& r : runs) {
        if (r.solved()) solved.insert(r.sample_id);
        for (const auto& it : r.iterations)
            if (it.crashed_with_new_signatures()) crashed_new.insert(r.sample_id);
    }
    std::size_t n = 0;
    for (const auto& s : crashed_new)
        if (!solved.count(s)) ++n;
    return n;
}

/// Everything the report command prints.
struct CampaignReport {
    CumulativeTable cumulative;
    UniqueSharedTable unique;
    std::vector<RetryRow> retry_by_model;
    std::vector<RetryRow> retry_by_strategy;
    std::vector<RetryRow> retry_by_iteration;
    std::size_t excluded_crashed_with_new = 0;
    std::size_t total_runs = 0;
    std::size_t sandbox_unavailable_runs = 0;
};

inline CampaignReport build_campaign_report(const std::vector<SampleRun>& runs) {
    CampaignReport report;
    report.cumulative = cumulative_success(runs);
    report.unique = unique_shared(runs);
    report.retry_by_model = retry_rate(runs, Dimension::Model);
    report.retry_by_strategy = retry_rate(runs, Dimension::Strategy);
    report.retry_by_iteration = retry_rate(runs, Dimension::Iteration);
    report.excluded_crashed_with_new = crashed_with_new_signatures_tally(runs);
    report.total_runs = runs.size();
    for (const auto& r : runs)
        if (r.final_status == FinalStatus::SandboxUnavailable) ++report.sandbox_unavailable_runs;
    return report;
}

// ---------------------------------------------------------------------------
// Text rendering

namespace detail {

inline std::string pad(const std::string& s, std::size_t width) {
    std::string out = s;
    while (out.size() < width) out += ' ';
    return out;
}

} // namespace detail

inline std::string render_cumulative(const CumulativeTable& table) {
    std::ostringstream out;
    out << "Cumulative successes by iteration (distinct samples)\n";
    std::size_t name_w = 5;
    for (const auto& m : table.models) name_w = std::max(name_w, m.size());
    out << detail::pad("model", name_w + 2);
    for (std::size_t k = 0; k < table.iteration_count; ++k)
        for (const auto& s : table.strategies)
            out << detail::pad(s + "@" + std::to_string(k), 8);
    for (std::size_t k = 0; k < table.iteration_count; ++k)
        out << detail::pad("tot@" + std::to_string(k), 8);
    out << "\n";
    for (const auto& m : table.models) {
        out << detail::pad(m, name_w + 2);
        for (std::size_t k = 0; k < table.iteration_count; ++k)
            for (const auto& s : table.strategies)
                out << detail::pad(std::to_string(table.cells.at({m, s})[k]), 8);
        for (std::size_t k = 0; k < table.iteration_count; ++k)
            out << detail::pad(std::to_string(table.model_totals.at(m)[k]), 8);
        out << "\n";
    }
    out << detail::pad("all", name_w + 2);
    for (std::size_t k = 0; k < table.iteration_count; ++k)
        for (const auto& s : table.strategies)
            out << detail::pad(std::to_string(table.strategy_totals.at(s)[k]), 8);
    for (std::size_t k = 0; k < table.iteration_count; ++k)
        out << detail::pad(std::to_string(table.ensemble_totals[k]), 8);
    out << "\n";
    return out.str();
}

inline std::string render_unique_shared(const UniqueSharedTable& table) {
    std::ostringstream out;
    out << "Unique vs shared solves per model\n";
    std::size_t name_w = 5;
    for (const auto& [m, _] : table.unique) name_w = std::max(name_w, m.size());
    out << detail::pad("model", name_w + 2) << detail::pad("unique", 8)
        << detail::pad("shared", 8) << "\n";
    for (const auto& [m, u] : table.unique)
        out << detail::pad(m, name_w + 2) << detail::pad(std::to_string(u), 8)
            << detail::pad(std::to_string(table.shared.at(m)), 8) << "\n";
    out << "solved by every model: " << table.all_models_shared
        << "; solved by any: " << table.total_solved << "\n";
    return out.str();
}

inline std::string render_retry(const std::vector<RetryRow>& rows, const std::string& title) {
    std::ostringstream out;
    out << "Correction retries by " << title << "\n";
    std::size_t key_w = 6;
    for (const auto& r : rows) key_w = std::max(key_w, r.key.size());
    out << detail::pad("bucket", key_w + 2) << detail::pad("calls", 8)
        << detail::pad("retries", 9) << "rate\n";
    for (const auto& r : rows) {
        std::ostringstream rate;
        if (r.calls == 0)
            rate << "(no calls)";
        else
            rate << std::fixed << std::setprecision(1) << r.rate_pct() << "%";
        out << detail::pad(r.key, key_w + 2) << detail::pad(std::to_string(r.calls), 8)
            << detail::pad(std::to_string(r.retries), 9) << rate.str() << "\n";
    }
    return out.str();
}

inline std::string render_ablation(const AblationResult& result, Dimension dimension,
                                   const std::set<std::string>& removed) {
    std::ostringstream out;
    std::string values;
    for (const auto& v : removed) {
        if (!values.empty()) values += ", ";
        values += v;
    }
    out << "Ablation: remove " << to_string(dimension) << " {" << values << "}\n"
        << "full ensemble: " << result.full << " solved; without: " << result.kept
        << " solved; delta: " << result.delta() << "\n";
    return out.str();
}

inline std::string render_report(const CampaignReport& report) {
    std::ostringstream out;
    out << render_cumulative(report.cumulative) << "\n"
        << render_unique_shared(report.unique) << "\n"
        << render_retry(report.retry_by_model, "model") << "\n"
        << render_retry(report.retry_by_strategy, "strategy") << "\n"
        << render_retry(report.retry_by_iteration, "iteration") << "\n"
        << "runs: " << report.total_runs
        << "; sandbox-unavailable runs: " << report.sandbox_unavailable_runs
        << "; crashed-with-new-signatures samples excluded from success: "
        << report.excluded_crashed_with_new << "\n";
    return out.str();
}

} // namespace able
