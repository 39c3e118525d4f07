#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <able/reporting.hpp>

using namespace able;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::MessageMatches;

namespace {

SampleRun make_run(const std::string& sample, const std::string& model,
                   const std::string& strategy, std::optional<std::size_t> success_iter,
                   std::size_t recorded_iterations = 0) {
    SampleRun r;
    r.sample_id = sample;
    r.model = model;
    r.strategy = strategy;
    if (success_iter) {
        r.final_status = FinalStatus::Success;
        r.success_iteration = *success_iter;
        r.winning_rule = "rule W { condition: true }";
        r.iterations.resize(*success_iter + 1);
        r.iterations.back().executed = true;
        r.iterations.back().status = OutcomeStatus::Success;
    } else {
        r.final_status = FinalStatus::Failure;
        r.iterations.resize(recorded_iterations);
    }
    return r;
}

// Two models, two strategies, four samples, three iterations:
//   A/V0 solves s1@0 and s2@1; A/V1 solves s2@0; B/V0 solves s1@2.
std::vector<SampleRun> fixture_runs() {
    return {
        make_run("s1", "A", "V0", 0),
        make_run("s2", "A", "V0", 1),
        make_run("s4", "A", "V0", std::nullopt, 3),
        make_run("s2", "A", "V1", 0),
        make_run("s1", "B", "V0", 2),
        make_run("s3", "B", "V1", std::nullopt, 3),
    };
}

} // namespace

// ---------------------------------------------------------------------------
// Signature diff
// ---------------------------------------------------------------------------

TEST_CASE("signature_diff returns only the beyond-baseline signatures") {
    Baseline base;
    base.signatures = {"a", "b"};
    ExecutionResult result;
    result.signatures = {"a", "b", "c", "d"};
    CHECK(signature_diff(base, result) == std::set<std::string>{"c", "d"});

    result.signatures = {"a"};
    CHECK(signature_diff(base, result).empty());
}

// ---------------------------------------------------------------------------
// Cumulative success table
// ---------------------------------------------------------------------------

TEST_CASE("cumulative_success counts distinct samples per iteration") {
    const auto table = cumulative_success(fixture_runs());

    CHECK(table.models == std::vector<std::string>{"A", "B"});
    CHECK(table.strategies == std::vector<std::string>{"V0", "V1"});
    CHECK(table.iteration_count == 3);

    CHECK(table.cells.at({"A", "V0"}) == std::vector<std::size_t>{1, 2, 2});
    CHECK(table.cells.at({"A", "V1"}) == std::vector<std::size_t>{1, 1, 1});
    CHECK(table.cells.at({"B", "V0"}) == std::vector<std::size_t>{0, 0, 1});
    CHECK(table.cells.at({"B", "V1"}) == std::vector<std::size_t>{0, 0, 0});

    // s1 and s2 are both first solved by model A at iteration 0.
    CHECK(table.model_totals.at("A") == std::vector<std::size_t>{2, 2, 2});
    CHECK(table.model_totals.at("B") == std::vector<std::size_t>{0, 0, 1});
    CHECK(table.strategy_totals.at("V0") == std::vector<std::size_t>{1, 2, 2});
    CHECK(table.strategy_totals.at("V1") == std::vector<std::size_t>{1, 1, 1});
    CHECK(table.ensemble_totals == std::vector<std::size_t>{2, 2, 2});
}

TEST_CASE("cumulative_success on an empty campaign") {
    const auto table = cumulative_success({});
    CHECK(table.models.empty());
    CHECK(table.strategies.empty());
    CHECK(table.iteration_count == 1);
    CHECK(table.ensemble_totals == std::vector<std::size_t>{0});
}

TEST_CASE("a sample solved twice in one cell counts once, at the earlier iteration") {
    std::vector<SampleRun> runs = {
        make_run("s1", "A", "V0", 2),
        make_run("s1", "A", "V0", 1),
    };
    const auto table = cumulative_success(runs);
    CHECK(table.cells.at({"A", "V0"}) == std::vector<std::size_t>{0, 1, 1});
    CHECK(table.ensemble_totals == std::vector<std::size_t>{0, 1, 1});
}

// ---------------------------------------------------------------------------
// Unique vs shared solves
// ---------------------------------------------------------------------------

TEST_CASE("unique_shared splits solvers per sample") {
    std::vector<SampleRun> runs = {
        make_run("s1", "A", "V0", 0),
        make_run("s1", "B", "V0", std::nullopt, 1),
        make_run("s2", "A", "V0", 1),
        make_run("s2", "B", "V0", 0),
        make_run("s3", "C", "V0", std::nullopt, 1),
        make_run("s4", "A", "V0", 0),
        make_run("s4", "B", "V0", 0),
        make_run("s4", "C", "V0", 0),
    };
    const auto table = unique_shared(runs);

    CHECK(table.unique.at("A") == 1); // s1
    CHECK(table.unique.at("B") == 0);
    CHECK(table.unique.at("C") == 0);
    CHECK(table.shared.at("A") == 2); // s2, s4
    CHECK(table.shared.at("B") == 2);
    CHECK(table.shared.at("C") == 1); // s4
    CHECK(table.all_models_shared == 1); // s4 solved by all of A, B, C
    CHECK(table.total_solved == 3);
}

TEST_CASE("unique_shared on an empty campaign") {
    const auto table = unique_shared({});
    CHECK(table.unique.empty());
    CHECK(table.total_solved == 0);
    CHECK(table.all_models_shared == 0);
}

// ---------------------------------------------------------------------------
// Oracle cross-check over randomized campaigns
// ---------------------------------------------------------------------------

TEST_CASE("aggregations agree with brute-force enumeration") {
    std::mt19937 rng(20260823);
    std::uniform_int_distribution<int> pct(0, 99);
    std::uniform_int_distribution<std::size_t> iter_pick(0, 3);
    std::uniform_int_distribution<std::size_t> len_pick(0, 4);

    const std::vector<std::string> model_names = {"m0", "m1", "m2"};
    const std::vector<std::string> strategy_names = {"V0", "V1"};
    const std::vector<std::string> sample_names = {"s0", "s1", "s2", "s3", "s4", "s5"};

    for (int trial = 0; trial < 60; ++trial) {
        std::vector<SampleRun> runs;
        for (const auto& s : sample_names)
            for (const auto& m : model_names)
                for (const auto& st : strategy_names) {
                    int copies = pct(rng) < 80 ? 1 : 0;
                    if (pct(rng) < 15) ++copies; // occasional duplicate triple
                    for (int c = 0; c < copies; ++c) {
                        if (pct(rng) < 50)
                            runs.push_back(make_run(s, m, st, iter_pick(rng)));
                        else
                            runs.push_back(make_run(s, m, st, std::nullopt, len_pick(rng)));
                    }
                }
        std::shuffle(runs.begin(), runs.end(), rng);

        std::size_t K = 1;
        for (const auto& r : runs)
            K = std::max({K, r.iterations.size(),
                          r.success_iteration ? *r.success_iteration + 1 : std::size_t{0}});

        const auto table = cumulative_success(runs);
        if (runs.empty()) continue;
        REQUIRE(table.iteration_count == K);

        // Oracle: directly enumerate "solved by iteration k" per scope.
        auto solved_by_k = [&](std::size_t k, auto&& pred) {
            std::set<std::string> samples;
            for (const auto& r : runs)
                if (r.solved() && r.success_iteration && *r.success_iteration <= k &&
                    pred(r))
                    samples.insert(r.sample_id);
            return samples.size();
        };
        for (std::size_t k = 0; k < K; ++k) {
            for (const auto& m : table.models) {
                for (const auto& st : table.strategies)
                    REQUIRE(table.cells.at({m, st})[k] ==
                            solved_by_k(k, [&](const SampleRun& r) {
                                return r.model == m && r.strategy == st;
                            }));
                REQUIRE(table.model_totals.at(m)[k] ==
                        solved_by_k(k, [&](const SampleRun& r) { return r.model == m; }));
            }
            for (const auto& st : table.strategies)
                REQUIRE(table.strategy_totals.at(st)[k] ==
                        solved_by_k(k,
                                    [&](const SampleRun& r) { return r.strategy == st; }));
            REQUIRE(table.ensemble_totals[k] ==
                    solved_by_k(k, [](const SampleRun&) { return true; }));
        }

        // Oracle for unique/shared: recount solver sets from scratch.
        const auto us = unique_shared(runs);
        std::set<std::string> all_models;
        for (const auto& r : runs) all_models.insert(r.model);
        std::map<std::string, std::set<std::string>> solvers;
        for (const auto& r : runs)
            if (r.solved()) solvers[r.sample_id].insert(r.model);
        std::size_t expect_total = 0, expect_all_shared = 0;
        std::map<std::string, std::size_t> expect_unique, expect_shared;
        for (const auto& m : all_models) expect_unique[m] = expect_shared[m] = 0;
        for (const auto& [sample, who] : solvers) {
            ++expect_total;
            if (who.size() == 1) ++expect_unique[*who.begin()];
            else
                for (const auto& m : who) ++expect_shared[m];
            if (who.size() == all_models.size()) ++expect_all_shared;
        }
        REQUIRE(us.unique == expect_unique);
        REQUIRE(us.shared == expect_shared);
        REQUIRE(us.total_solved == expect_total);
        REQUIRE(us.all_models_shared == expect_all_shared);
    }
}

// ---------------------------------------------------------------------------
// Retry rates
// ---------------------------------------------------------------------------

namespace {

std::vector<SampleRun> retry_fixture() {
    auto r1 = make_run("s1", "M1", "V0", 1);
    r1.attempts = {{0, 0, true, 0.1}, {0, 1, false, 0.1}, {1, 0, false, 0.1}};
    auto r2 = make_run("s2", "M1", "V1", 0);
    r2.attempts = {{0, 0, false, 0.1}};
    auto r3 = make_run("s3", "M2", "V0", std::nullopt, 1);
    r3.attempts = {{0, 0, true, 0.1}, {0, 1, true, 0.1}};
    return {r1, r2, r3};
}

} // namespace

TEST_CASE("retry_rate buckets attempts by the chosen dimension") {
    const auto runs = retry_fixture();

    const auto by_model = retry_rate(runs, Dimension::Model);
    REQUIRE(by_model.size() == 2);
    CHECK(by_model[0].key == "M1");
    CHECK(by_model[0].calls == 4);
    CHECK(by_model[0].retries == 1);
    CHECK(by_model[0].rate_pct() == 25.0);
    CHECK(by_model[1].key == "M2");
    CHECK(by_model[1].calls == 2);
    CHECK(by_model[1].retries == 2);
    CHECK(by_model[1].rate_pct() == 100.0);

    const auto by_strategy = retry_rate(runs, Dimension::Strategy);
    REQUIRE(by_strategy.size() == 2);
    CHECK(by_strategy[0].key == "V0");
    CHECK(by_strategy[0].calls == 5);
    CHECK(by_strategy[0].retries == 3);
    CHECK(by_strategy[1].key == "V1");
    CHECK(by_strategy[1].retries == 0);

    const auto by_iteration = retry_rate(runs, Dimension::Iteration);
    REQUIRE(by_iteration.size() == 2);
    CHECK(by_iteration[0].key == "iter0");
    CHECK(by_iteration[0].calls == 5);
    CHECK(by_iteration[0].retries == 3);
    CHECK(by_iteration[1].key == "iter1");
    CHECK(by_iteration[1].calls == 1);
    CHECK(by_iteration[1].retries == 0);
}

TEST_CASE("retry rate handles empty buckets and empty campaigns") {
    CHECK(RetryRow{"x", 0, 0}.rate_pct() == 0.0);
    CHECK(retry_rate({}, Dimension::Model).empty());
}

TEST_CASE("dimension names parse and print") {
    for (auto d : {Dimension::Model, Dimension::Strategy, Dimension::Iteration})
        CHECK(parse_dimension(to_string(d)) == d);
    CHECK_FALSE(parse_dimension("epoch").has_value());
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

TEST_CASE("ablation recomputes coverage without the removed values") {
    const auto runs = fixture_runs();

    const auto keep_b = ablation(runs, Dimension::Model, {"B"});
    CHECK(keep_b.full == 2); // s1, s2
    CHECK(keep_b.kept == 2); // A still solves both
    CHECK(keep_b.delta() == 0);

    const auto drop_a = ablation(runs, Dimension::Model, {"A"});
    CHECK(drop_a.kept == 1); // only B's s1 remains
    CHECK(drop_a.delta() == -1);

    CHECK(ablation(runs, Dimension::Strategy, {"V1"}).kept == 2);
    CHECK(ablation(runs, Dimension::Strategy, {"V0"}).kept == 1);
}

TEST_CASE("iteration ablation accepts bare indices and iterN forms") {
    const auto runs = fixture_runs();

    const auto late_removed = ablation(runs, Dimension::Iteration, {"1", "2"});
    CHECK(late_removed.kept == 2); // s1@0 and s2@0 survive

    const auto no_first = ablation(runs, Dimension::Iteration, {"iter0"});
    CHECK(no_first.kept == 2); // s2@1 and s1@2 still solve both samples

    CHECK(ablation(runs, Dimension::Iteration, {"0", "1"}).kept == 1); // only s1@2

    // Removing every later iteration reproduces the cumulative table's
    // iteration-0 ensemble column.
    const auto table = cumulative_success(runs);
    CHECK(late_removed.kept == table.ensemble_totals[0]);
}

TEST_CASE("ablation rejects values absent from the campaign") {
    const auto runs = fixture_runs();
    CHECK_THROWS_MATCHES(ablation(runs, Dimension::Model, {"ghost"}),
                         UnknownDimensionValueError,
                         MessageMatches(ContainsSubstring("no model named 'ghost'")));
    CHECK_THROWS_AS(ablation(runs, Dimension::Strategy, {"V7"}),
                    UnknownDimensionValueError);
    CHECK_THROWS_AS(ablation(runs, Dimension::Iteration, {"7"}),
                    UnknownDimensionValueError);
    CHECK_THROWS_AS(ablation(runs, Dimension::Iteration, {"iter9"}),
                    UnknownDimensionValueError);
    // Removing anything from an empty campaign is unknown by definition.
    CHECK_THROWS_AS(ablation({}, Dimension::Model, {"A"}), UnknownDimensionValueError);
}

// ---------------------------------------------------------------------------
// Crash accounting and the assembled report
// ---------------------------------------------------------------------------

namespace {

SampleRun crashed_new_run(const std::string& sample) {
    SampleRun r = make_run(sample, "A", "V0", std::nullopt, 0);
    IterationEntry entry;
    entry.executed = true;
    entry.status = OutcomeStatus::Crashed;
    entry.new_signatures = {"late_payload"};
    r.iterations.push_back(entry);
    return r;
}

} // namespace

TEST_CASE("crashed_with_new_signatures_tally counts only never-solved samples") {
    auto runs = fixture_runs();
    runs.push_back(crashed_new_run("s5")); // never solved -> counted
    runs.push_back(crashed_new_run("s1")); // solved elsewhere -> not counted
    CHECK(crashed_with_new_signatures_tally(runs) == 1);
    CHECK(crashed_with_new_signatures_tally(fixture_runs()) == 0);
}

TEST_CASE("build_campaign_report assembles every table plus the tallies") {
    auto runs = fixture_runs();
    runs.push_back(crashed_new_run("s5"));
    SampleRun down;
    down.sample_id = "s6";
    down.model = "B";
    down.strategy = "V1";
    down.final_status = FinalStatus::SandboxUnavailable;
    down.failure_message = "controller 'x' unavailable";
    runs.push_back(down);

    const CampaignReport report = build_campaign_report(runs);
    CHECK(report.total_runs == 8);
    CHECK(report.sandbox_unavailable_runs == 1);
    CHECK(report.excluded_crashed_with_new == 1);
    CHECK(report.cumulative.ensemble_totals == cumulative_success(runs).ensemble_totals);
    CHECK(report.unique.total_solved == 2);
    CHECK(report.retry_by_iteration.empty()); // fixture runs carry no attempts
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

TEST_CASE("render_cumulative lays out strategies per iteration plus totals") {
    const std::string text = render_cumulative(cumulative_success(fixture_runs()));
    CHECK_THAT(text, ContainsSubstring("Cumulative successes by iteration (distinct samples)"));
    CHECK_THAT(text, ContainsSubstring("V0@0"));
    CHECK_THAT(text, ContainsSubstring("V1@2"));
    CHECK_THAT(text, ContainsSubstring("tot@2"));
    CHECK_THAT(text, ContainsSubstring("\nall"));

    // header + column header + one row per model + the "all" row
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);
}

TEST_CASE("render_unique_shared summarizes solver overlap") {
    std::vector<SampleRun> runs = {
        make_run("s1", "A", "V0", 0),
        make_run("s2", "A", "V0", 0),
        make_run("s2", "B", "V0", 0),
        make_run("s3", "B", "V0", std::nullopt, 1),
    };
    const std::string text = render_unique_shared(unique_shared(runs));
    CHECK_THAT(text, ContainsSubstring("Unique vs shared solves per model"));
    CHECK_THAT(text, ContainsSubstring("unique"));
    CHECK_THAT(text, ContainsSubstring("shared"));
    CHECK_THAT(text, ContainsSubstring("solved by every model: 1; solved by any: 2"));
}

TEST_CASE("render_retry prints one row per bucket with a percentage") {
    const std::string text = render_retry(retry_rate(retry_fixture(), Dimension::Model),
                                          "model");
    CHECK_THAT(text, ContainsSubstring("Correction retries by model"));
    CHECK_THAT(text, ContainsSubstring("bucket"));
    CHECK_THAT(text, ContainsSubstring("25.0%"));
    CHECK_THAT(text, ContainsSubstring("100.0%"));

    const std::string empty_bucket = render_retry({RetryRow{"quiet", 0, 0}}, "model");
    CHECK_THAT(empty_bucket, ContainsSubstring("(no calls)"));
}

TEST_CASE("render_ablation names the removed values and the delta") {
    const auto result = ablation(fixture_runs(), Dimension::Model, {"A"});
    const std::string text = render_ablation(result, Dimension::Model, {"A"});
    CHECK_THAT(text, ContainsSubstring("Ablation: remove model {A}"));
    CHECK_THAT(text,
               ContainsSubstring("full ensemble: 2 solved; without: 1 solved; delta: -1"));
}

TEST_CASE("render_report stitches all sections together") {
    auto runs = retry_fixture();
    runs.push_back(crashed_new_run("s9"));
    const std::string text = render_report(build_campaign_report(runs));
    CHECK_THAT(text, ContainsSubstring("Cumulative successes by iteration"));
    CHECK_THAT(text, ContainsSubstring("Unique vs shared solves per model"));
    CHECK_THAT(text, ContainsSubstring("Correction retries by model"));
    CHECK_THAT(text, ContainsSubstring("Correction retries by strategy"));
    CHECK_THAT(text, ContainsSubstring("Correction retries by iteration"));
    CHECK_THAT(text, ContainsSubstring("runs: 4; sandbox-unavailable runs: 0; "
                                       "crashed-with-new-signatures samples excluded "
                                       "from success: 1"));
}
