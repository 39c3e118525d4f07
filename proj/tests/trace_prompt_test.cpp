#include <catch2/catch_amalgamated.hpp>

#include "able/prompts.hpp"

using namespace able;

namespace {

const std::string kTraceText =
    "004012F0  55                    push ebp\n"
    "004012F1  8B EC                 mov ebp, esp\n"
    "004012F3  83 EC 10              sub esp, 0x10\n"
    "004012F6  E8 15 1D 00 00        call 0x00403010\n"
    "00403010  53                    push ebx\n"
    "00403011  57                    push edi\n"
    "00403012  57                    push edi\n"
    "00403013  57                    push edi\n"
    "00403014  FF 15 24 37 38 00     call dword ptr [0x00383724]\n"
    "0040301A  8B F0                 mov esi, eax\n"
    "0040301C  74 03                 je 0x00403021\n"
    "00403021  E8 30 FE FF FF        call 0x00402E56\n"
    "00403026  74 03                 je 0x0040302B\n"
    "0040302B  6A 00                 push 0\n"
    "0040302D  FF 15 BC 36 38 00     call dword ptr [ExitProcess]\n";

TraceDocument make_long_trace(std::size_t lines, std::size_t marker_at) {
    TraceDocument doc;
    doc.sample_id = "long";
    for (std::size_t i = 0; i < lines; ++i) {
        TraceLine line;
        line.address = "0040" + std::string(i % 2 ? "A" : "B") + std::to_string(1000 + i);
        line.bytes = {0x90};
        line.disasm = (i == marker_at) ? "call dword ptr [ExitProcess]" : "nop";
        doc.lines.push_back(line);
    }
    doc.exit_marker = marker_at;
    return doc;
}

} // namespace

TEST_CASE("trace parsing splits address, bytes, and disasm") {
    const TraceDocument doc = parse_trace(kTraceText, "stealc_demo");
    CHECK(doc.sample_id == "stealc_demo");
    REQUIRE(doc.lines.size() == 15);
    CHECK(doc.lines[0].address == "004012F0");
    CHECK(doc.lines[0].bytes == std::vector<std::uint8_t>{0x55});
    CHECK(doc.lines[0].disasm == "push ebp");
    CHECK(doc.lines[8].bytes ==
          std::vector<std::uint8_t>{0xFF, 0x15, 0x24, 0x37, 0x38, 0x00});
    CHECK(doc.lines[8].disasm == "call dword ptr [0x00383724]");
    REQUIRE(doc.exit_marker.has_value());
    CHECK(*doc.exit_marker == 14);
}

TEST_CASE("trace parsing is lenient about non-conforming lines") {
    const TraceDocument doc = parse_trace(
        "some header text\n004012F0  55  push ebp\n\n   \nno address here either\n");
    REQUIRE(doc.lines.size() == 3);
    CHECK(doc.lines[0].address.empty());
    CHECK(doc.lines[0].disasm == "some header text");
    CHECK(doc.lines[1].address == "004012F0");
    CHECK(doc.lines[2].disasm == "no address here either");
    CHECK_FALSE(doc.exit_marker.has_value());
}

TEST_CASE("exit marker is the last exit-api mention, case-insensitive") {
    const TraceDocument doc = parse_trace(
        "00401000  E8 00 00 00 00  call ExitProcess\n"
        "00401005  90              nop\n"
        "0040100A  FF 25 00 10 40 00  jmp dword ptr [NtTerminateProcess]\n");
    REQUIRE(doc.exit_marker.has_value());
    CHECK(*doc.exit_marker == 2);

    CHECK(parse_trace("00401000  90  call [TERMINATEPROCESS]\n").exit_marker == 0);
    CHECK(parse_trace("00401000  90  call [ExitThread]\n").exit_marker == 0);
    CHECK_FALSE(parse_trace("00401000  90  call [CreateFileW]\n").exit_marker.has_value());
}

TEST_CASE("trace bytes concatenate executed instruction bytes") {
    const TraceDocument doc = parse_trace(kTraceText);
    const auto bytes = trace_bytes(doc);
    REQUIRE(bytes.size() == 40);
    CHECK(bytes[0] == 0x55);
    CHECK(bytes.back() == 0x00);
}

TEST_CASE("trace serialization pads columns and round-trips") {
    const TraceDocument doc = parse_trace(kTraceText);
    const std::string out = serialize_trace(doc);
    CHECK(out.find("004012F0  55                    push ebp\n") != std::string::npos);
    CHECK(parse_trace(out).lines.size() == doc.lines.size());
    CHECK(trace_bytes(parse_trace(out)) == trace_bytes(doc));
}

TEST_CASE("trace serialization caps tail-biased around the exit marker") {
    SECTION("marker deep in the trace keeps it plus 16 following lines") {
        const TraceDocument doc = make_long_trace(500, 449);
        const std::string out = serialize_trace(doc, 400);
        CHECK(out.find("... (66 earlier trace lines omitted)\n") == 0);
        CHECK(out.find("... (34 later trace lines omitted)\n") != std::string::npos);
        CHECK(out.find("ExitProcess") != std::string::npos);
    }
    SECTION("marker near the start is never cut away") {
        const TraceDocument doc = make_long_trace(30, 5);
        const std::string out = serialize_trace(doc, 10);
        CHECK(out.find("ExitProcess") != std::string::npos);
        CHECK(out.find("... (5 earlier trace lines omitted)\n") == 0);
        CHECK(out.find("... (15 later trace lines omitted)\n") != std::string::npos);
    }
    SECTION("no marker means a plain tail window") {
        TraceDocument doc = make_long_trace(30, 5);
        doc.lines[5].disasm = "nop";
        doc.exit_marker.reset();
        const std::string out = serialize_trace(doc, 10);
        CHECK(out.find("... (20 earlier trace lines omitted)\n") == 0);
        CHECK(out.find("later trace lines omitted") == std::string::npos);
    }
    SECTION("zero cap serializes everything") {
        const TraceDocument doc = make_long_trace(50, 10);
        CHECK(serialize_trace(doc, 0).find("omitted") == std::string::npos);
    }
}

TEST_CASE("strategy catalogue") {
    CHECK(all_strategies().size() == 4);
    CHECK(strategy(StrategyId::V0).body.find("exactly 3 different patterns") !=
          std::string::npos);
    CHECK(strategy(StrategyId::V1).body.rfind("Think step-by-step: (1) The trace ends at an "
                                              "exit point---why did execution stop here?",
                                              0) == 0);
    CHECK(strategy(StrategyId::V2).body.find("Phase 1 -- Hypothesis Generation:") !=
          std::string::npos);
    CHECK(strategy(StrategyId::V2).body.find("Rate 0-100") != std::string::npos);
    CHECK(strategy(StrategyId::V3).body.find("Attacker's Perspective:") != std::string::npos);
    CHECK(strategy(StrategyId::V3).body.find("Defender's Perspective:") != std::string::npos);
    CHECK(parse_strategy_id("v2") == StrategyId::V2);
    CHECK(parse_strategy_id("V3") == StrategyId::V3);
    CHECK_FALSE(parse_strategy_id("V4").has_value());
}

TEST_CASE("initial prompt has the fixed section order") {
    const TraceDocument doc = parse_trace(kTraceText, "stealc_demo");
    const std::string prompt = build_initial_prompt(doc, strategy(StrategyId::V1));

    const auto task = prompt.find("## Task");
    const auto trace = prompt.find("## Binary Trace");
    const auto strat = prompt.find("## Reasoning Strategy");
    const auto output = prompt.find("## Output Format");
    REQUIRE(task != std::string::npos);
    REQUIRE(trace != std::string::npos);
    REQUIRE(strat != std::string::npos);
    REQUIRE(output != std::string::npos);
    CHECK(task < trace);
    CHECK(trace < strat);
    CHECK(strat < output);

    CHECK(prompt.find("sample: stealc_demo") != std::string::npos);
    CHECK(prompt.find("TEST+JE and CMP+JZ") != std::string::npos);
    CHECK(prompt.find("exactly 3 distinct bypass patterns") != std::string::npos);
    CHECK(prompt.find("Think step-by-step") != std::string::npos);
    CHECK(prompt.find("Each pattern must contain 6-20 bytes.") != std::string::npos);
    CHECK(prompt.find("$pattern0 = { E8 ?? ?? ?? ?? 85 C0 74 ?? }") != std::string::npos);
    CHECK(prompt.find("$pattern1 = { FF 15 ?? ?? ?? ?? 85 C0 }") != std::string::npos);
    CHECK(prompt.find("$pattern2 = { 83 F8 01 0F 84 ?? ?? ?? ?? }") != std::string::npos);
    CHECK(prompt.find("cape_options = \"bp0=$pattern0+0,action0=skip\"") != std::string::npos);

    SECTION("pattern count is configurable") {
        PromptOptions options;
        options.n_patterns = 5;
        const std::string five = build_initial_prompt(doc, strategy(StrategyId::V0), options);
        CHECK(five.find("exactly 5 distinct bypass patterns") != std::string::npos);
        CHECK(five.find("all 5 patterns must be distinct") != std::string::npos);
    }
    SECTION("identical inputs give identical prompts") {
        CHECK(build_initial_prompt(doc, strategy(StrategyId::V1)) == prompt);
    }
    SECTION("empty trace is refused") {
        CHECK_THROWS_AS(build_initial_prompt(TraceDocument{}, strategy(StrategyId::V0)),
                        EmptyTraceError);
    }
}

TEST_CASE("retry prompt lists errors, the failed rule, and deduped examples") {
    const TraceDocument doc = parse_trace(kTraceText, "stealc_demo");
    const std::vector<ValidationError> errors = {
        {ErrorCategory::Length, "$p0", "pattern $p0 has 3 byte elements; it must have 6-20"},
        {ErrorCategory::Length, "$p1", "pattern $p1 has 2 byte elements; it must have 6-20"},
        {ErrorCategory::AssemblyConfusion, "$p2", "pattern $p2 contains assembly mnemonics"},
    };
    const std::string failed = "rule Bad\n{\n    strings:\n        $p0 = { E8 ?? ?? }\n"
                               "    condition:\n        any of them\n}\n";
    const std::string prompt = build_retry_prompt(errors, failed, doc);

    CHECK(prompt.find("## Validation Errors") == 0);
    CHECK(prompt.find("1. [LengthError] $p0:") != std::string::npos);
    CHECK(prompt.find("2. [LengthError] $p1:") != std::string::npos);
    CHECK(prompt.find("3. [AssemblyConfusion] $p2:") != std::string::npos);
    CHECK(prompt.find("## Failed Rule\n" + failed) != std::string::npos);
    // one example per distinct category
    CHECK(prompt.find("[LengthError]\nbefore:") == prompt.rfind("[LengthError]\nbefore:"));
    CHECK(prompt.find("$p0 = { 50 FF D2 }") != std::string::npos);
    CHECK(prompt.find("## Binary Trace") != std::string::npos);
    CHECK(prompt.find("## Output Format") != std::string::npos);

    CHECK_THROWS_AS(build_retry_prompt({}, failed, doc), std::invalid_argument);
}

TEST_CASE("fix examples cover every category") {
    CHECK(fix_example_for(ErrorCategory::Structure).find("brace-delimited") !=
          std::string::npos);
    CHECK(fix_example_for(ErrorCategory::AssemblyConfusion).find("{ 50 FF D2 }") !=
          std::string::npos);
    CHECK(fix_example_for(ErrorCategory::Length).find("extend short patterns") !=
          std::string::npos);
    CHECK(fix_example_for(ErrorCategory::Specificity).find("20% of the bytes concrete") !=
          std::string::npos);
    CHECK(fix_example_for(ErrorCategory::Context).find("anchor bare call opcodes") !=
          std::string::npos);
    CHECK(fix_example_for(ErrorCategory::Duplicate).find("distinct instruction sequence") !=
          std::string::npos);
}

TEST_CASE("revision prompt windows history and carries feedback") {
    const TraceDocument doc = parse_trace(kTraceText, "stealc_demo");
    std::vector<std::pair<std::string, Outcome>> history;
    for (int i = 0; i < 5; ++i) {
        Outcome outcome;
        outcome.status = OutcomeStatus::Failed;
        outcome.message = "Pattern not matched";
        history.emplace_back("rule Attempt" + std::to_string(i) + "\n{\n}\n", outcome);
    }
    FeedbackText feedback;
    feedback.category = FeedbackCategory::Crashed;
    feedback.body = "The previous rule crashed the monitored process.";
    feedback.debugger_log_excerpt = "debugger fault at offset 0x0013 (action 'skip')";

    const std::string prompt =
        build_revision_prompt(doc, history, std::string("rule Best\n{\n}\n"), feedback);

    CHECK(prompt.find("(2 earlier attempt(s) omitted)") != std::string::npos);
    CHECK(prompt.find("Attempt 1 ") == std::string::npos);
    CHECK(prompt.find("Attempt 3 [Failed]: Pattern not matched") != std::string::npos);
    CHECK(prompt.find("Attempt 5 [Failed]: Pattern not matched") != std::string::npos);
    CHECK(prompt.find("rule Attempt4") != std::string::npos);
    CHECK(prompt.find("## Current Best Rule\nrule Best") != std::string::npos);
    CHECK(prompt.find("## Feedback\nThe previous rule crashed") != std::string::npos);
    CHECK(prompt.find("Debugger log:\ndebugger fault at offset 0x0013") != std::string::npos);
    CHECK(prompt.find("## Output Format") != std::string::npos);

    SECTION("no best rule means no best-rule section") {
        const std::string without =
            build_revision_prompt(doc, history, std::nullopt, feedback);
        CHECK(without.find("## Current Best Rule") == std::string::npos);
    }
    SECTION("short history shows everything unwindowed") {
        std::vector<std::pair<std::string, Outcome>> two(history.begin(),
                                                         history.begin() + 2);
        const std::string short_prompt =
            build_revision_prompt(doc, two, std::nullopt, feedback);
        CHECK(short_prompt.find("omitted") == std::string::npos);
        CHECK(short_prompt.find("Attempt 1 [Failed]") != std::string::npos);
    }
    SECTION("empty history is refused") {
        CHECK_THROWS_AS(build_revision_prompt(doc, {}, std::nullopt, feedback),
                        std::invalid_argument);
    }
}

TEST_CASE("feedback directives are distinct per category") {
    CHECK(std::string(feedback_directive(FeedbackCategory::Crashed)) ==
          "select a safer nearby instruction as the bypass target");
    CHECK(std::string(feedback_directive(FeedbackCategory::Partial)) ==
          "target instructions closer to the evasion checkpoint");
    CHECK(std::string(feedback_directive(FeedbackCategory::Failed)) ==
          "extending the pattern with additional context bytes");
}
