#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <string>
#include <thread>
#include <vector>

#include <able/errors.hpp>
#include <able/llm.hpp>

using namespace able;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::MessageMatches;

// ---------------------------------------------------------------------------
// Reasoning-region stripping
// ---------------------------------------------------------------------------

TEST_CASE("strip_think_regions removes closed regions") {
    CHECK(detail::strip_think_regions("<think>internal</think>answer") == "answer");
    CHECK(detail::strip_think_regions("a<thinking>x</thinking>b") == "ab");
    CHECK(detail::strip_think_regions("<thinking>a</thinking>b<think>c</think>d") == "bd");
}

TEST_CASE("strip_think_regions is case-insensitive") {
    CHECK(detail::strip_think_regions("<THINK>x</THINK>done") == "done");
    CHECK(detail::strip_think_regions("<Thinking>x</thinkING>done") == "done");
}

TEST_CASE("strip_think_regions drops unclosed regions to end of text") {
    CHECK(detail::strip_think_regions("keep <think>never closed, all gone") == "keep ");
}

TEST_CASE("strip_think_regions leaves plain text untouched") {
    const std::string plain = "rule R { condition: true }";
    CHECK(detail::strip_think_regions(plain) == plain);
    CHECK(detail::strip_think_regions("") == "");
}

// ---------------------------------------------------------------------------
// Rule extraction
// ---------------------------------------------------------------------------

TEST_CASE("extract_rule prefers a fenced code block with a language tag") {
    const std::string raw =
        "Here is my reasoning about rule Prose { condition: false } in text.\n"
        "```yara\n"
        "rule Fenced { condition: true }\n"
        "```\n"
        "Some trailing chatter.\n";
    CHECK(extract_rule(raw) == "rule Fenced { condition: true }");
}

TEST_CASE("extract_rule falls back to the body when no fence holds a rule") {
    const std::string raw =
        "```c\nint unrelated = 0;\n```\n"
        "The final answer is rule Body { condition: true } as shown.";
    CHECK(extract_rule(raw) == "rule Body { condition: true }");
}

TEST_CASE("extract_rule works on bare output without fences") {
    CHECK(extract_rule("rule Bare { condition: true }") ==
          "rule Bare { condition: true }");
}

TEST_CASE("extract_rule ignores braces inside quoted strings") {
    const std::string raw =
        "rule Quoted { strings: $s = \"close } brace\" condition: $s }";
    CHECK(extract_rule(raw) == raw);

    const std::string escaped =
        "rule Esc { strings: $s = \"a\\\"b}\" condition: $s }";
    CHECK(extract_rule(escaped) == escaped);
}

TEST_CASE("extract_rule skips false rule keywords and bad names") {
    // "rules" is an identifier, "9bad" is not a valid rule name; the first
    // real rule afterwards wins.
    const std::string raw =
        "The rules are strict. rule 9bad {} rule Good { condition: true } tail";
    CHECK(extract_rule(raw) == "rule Good { condition: true }");
}

TEST_CASE("extract_rule skips unbalanced candidates") {
    const std::string raw =
        "rule Broken { no closing brace here... "
        "rule Fine { condition: true } trailing";
    // The Broken span swallows Fine's opening brace, so only Fine balances.
    CHECK(extract_rule(raw) == "rule Fine { condition: true }");
}

TEST_CASE("extract_rule ignores rules inside think regions") {
    const std::string raw =
        "<think>draft: rule Draft { condition: false }</think>\n"
        "rule Final { condition: true }\n";
    CHECK(extract_rule(raw) == "rule Final { condition: true }");
}

TEST_CASE("extract_rule is idempotent on its own output") {
    const std::string raw =
        "chatter\n```\nrule R { strings: $a = { E8 ?? } condition: $a }\n```\n";
    const std::string once = extract_rule(raw);
    CHECK(extract_rule(once) == once);
}

TEST_CASE("extract_rule throws NoRuleFoundError when nothing matches") {
    CHECK_THROWS_MATCHES(extract_rule("no rule here, just chatter"), NoRuleFoundError,
                         MessageMatches(ContainsSubstring("no YARA rule")));
    CHECK_THROWS_AS(extract_rule(""), NoRuleFoundError);
    // A rule mentioned only inside an unclosed think region is invisible.
    CHECK_THROWS_AS(extract_rule("<think>rule R { condition: true }"), NoRuleFoundError);
}

// ---------------------------------------------------------------------------
// Scripted provider
// ---------------------------------------------------------------------------

TEST_CASE("ScriptedProvider replays its script in order") {
    ScriptedProvider provider("demo", {"one", "two", "three"});
    CHECK(provider.name() == "demo");
    CHECK(provider.remaining() == 3);
    CHECK(provider.generate("p1") == "one");
    CHECK(provider.generate("p2") == "two");
    CHECK(provider.remaining() == 1);
    CHECK(provider.generate("p3") == "three");
    CHECK(provider.remaining() == 0);
}

TEST_CASE("ScriptedProvider keeps an audit trail of generations") {
    ScriptedProvider provider("demo", {"alpha", "beta"});
    provider.generate("first prompt");
    provider.generate("second prompt");

    const auto records = provider.records();
    REQUIRE(records.size() == 2);
    CHECK(records[0].prompt == "first prompt");
    CHECK(records[0].raw_output == "alpha");
    CHECK(records[0].model == "demo");
    CHECK(records[0].attempt_index == 0);
    CHECK(records[0].latency_s >= 0.0);
    CHECK(records[1].prompt == "second prompt");
    CHECK(records[1].raw_output == "beta");
    CHECK(records[1].attempt_index == 1);
}

TEST_CASE("ScriptedProvider raises once the script is exhausted") {
    ScriptedProvider provider("short", {"only"});
    provider.generate("p");
    CHECK_THROWS_MATCHES(provider.generate("p"), EmptyResponseError,
                         MessageMatches(ContainsSubstring("'short' is exhausted")));
    // The failed call leaves no audit record behind.
    CHECK(provider.records().size() == 1);
}

TEST_CASE("ScriptedProvider cycles when constructed with loop=true") {
    ScriptedProvider provider("loop", {"a", "b"}, /*loop=*/true);
    CHECK(provider.generate("p") == "a");
    CHECK(provider.generate("p") == "b");
    CHECK(provider.generate("p") == "a");
    CHECK(provider.generate("p") == "b");
    CHECK(provider.records().size() == 4);
}

TEST_CASE("ScriptedProvider with an empty looping script still raises") {
    ScriptedProvider provider("void", {}, /*loop=*/true);
    CHECK_THROWS_AS(provider.generate("p"), EmptyResponseError);
}

TEST_CASE("an empty scripted response is rejected at the provider layer") {
    ScriptedProvider provider("hollow", {""});
    CHECK_THROWS_MATCHES(
        provider.generate("p"), EmptyResponseError,
        MessageMatches(ContainsSubstring("'hollow' returned an empty response")));
}

TEST_CASE("provider audit log stays sequential under concurrent use") {
    ScriptedProvider provider("parallel", {"x"}, /*loop=*/true);
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t)
        threads.emplace_back([&provider] {
            for (int i = 0; i < 25; ++i) provider.generate("p");
        });
    for (auto& t : threads) t.join();

    const auto records = provider.records();
    REQUIRE(records.size() == 100);
    for (std::size_t i = 0; i < records.size(); ++i)
        CHECK(records[i].attempt_index == i);
}

// ---------------------------------------------------------------------------
// HTTP provider
// ---------------------------------------------------------------------------

namespace {

struct TestServer {
    httplib::Server server;
    int port = 0;
    std::thread thread;

    void start() {
        port = server.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }

    void stop() {
        server.stop();
        if (thread.joinable()) thread.join();
    }

    ~TestServer() { stop(); }
};

ModelConfig config_for(const TestServer& ts, const std::string& path) {
    ModelConfig cfg;
    cfg.model_name = "unit-model";
    cfg.temperature = 0.25;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(ts.port);
    cfg.endpoint_path = path;
    cfg.request_timeout_s = 5.0;
    cfg.max_attempts = 3;
    cfg.backoff_initial_s = 0.01;
    return cfg;
}

} // namespace

TEST_CASE("HttpProvider posts model, prompt, and temperature as JSON") {
    TestServer ts;
    ts.server.Post("/api/generate",
                   [](const httplib::Request& req, httplib::Response& res) {
                       // Echo the request body back so the client can verify it.
                       nlohmann::json out = {{"text", req.body}};
                       res.set_content(out.dump(), "application/json");
                   });
    ts.start();

    HttpProvider provider(config_for(ts, "/api/generate"));
    const std::string echoed = provider.generate("write me a rule");

    const auto request = nlohmann::json::parse(echoed);
    CHECK(request.at("model").get<std::string>() == "unit-model");
    CHECK(request.at("prompt").get<std::string>() == "write me a rule");
    CHECK(request.at("temperature").get<double>() == Catch::Approx(0.25));

    const auto records = provider.records();
    REQUIRE(records.size() == 1);
    CHECK(records[0].model == "unit-model");
    CHECK(records[0].prompt == "write me a rule");
    CHECK(records[0].raw_output == echoed);
}

TEST_CASE("HttpProvider accepts a 'response' field for compatibility") {
    TestServer ts;
    ts.server.Post("/compat", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"response": "legacy style"})", "application/json");
    });
    ts.start();

    HttpProvider provider(config_for(ts, "/compat"));
    CHECK(provider.generate("p") == "legacy style");
}

TEST_CASE("HttpProvider retries server errors before succeeding") {
    std::atomic<int> calls{0};
    TestServer ts;
    ts.server.Post("/flaky", [&calls](const httplib::Request&, httplib::Response& res) {
        if (++calls <= 2) {
            res.status = 500;
            res.set_content("boom", "text/plain");
        } else {
            res.set_content(R"({"text": "finally"})", "application/json");
        }
    });
    ts.start();

    HttpProvider provider(config_for(ts, "/flaky"));
    CHECK(provider.generate("p") == "finally");
    CHECK(calls.load() == 3);
    CHECK(provider.records().size() == 1);
}

TEST_CASE("HttpProvider surfaces persistent server errors as TransportError") {
    TestServer ts;
    ts.server.Post("/always-500", [](const httplib::Request&, httplib::Response& res) {
        res.status = 500;
    });
    ts.start();

    auto cfg = config_for(ts, "/always-500");
    cfg.max_attempts = 2;
    HttpProvider provider(cfg);
    CHECK_THROWS_MATCHES(provider.generate("p"), TransportError,
                         MessageMatches(ContainsSubstring("failed after 2 attempt(s)") &&
                                        ContainsSubstring("endpoint returned status 500")));
    CHECK(provider.records().empty());
}

TEST_CASE("HttpProvider reports malformed and incomplete response bodies") {
    TestServer ts;
    ts.server.Post("/broken-json", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("this is not json{", "application/json");
    });
    ts.server.Post("/no-text", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"ok": true})", "application/json");
    });
    ts.start();

    auto broken = config_for(ts, "/broken-json");
    broken.max_attempts = 1;
    CHECK_THROWS_MATCHES(HttpProvider(broken).generate("p"), TransportError,
                         MessageMatches(ContainsSubstring("malformed response JSON")));

    auto missing = config_for(ts, "/no-text");
    missing.max_attempts = 1;
    CHECK_THROWS_MATCHES(HttpProvider(missing).generate("p"), TransportError,
                         MessageMatches(ContainsSubstring("no text field")));
}

TEST_CASE("HttpProvider turns connection failures into TransportError") {
    // Find a port that was just free, then close it again before connecting.
    int dead_port = 0;
    {
        TestServer ts;
        ts.start();
        dead_port = ts.port;
    }

    ModelConfig cfg;
    cfg.model_name = "unreachable";
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(dead_port);
    cfg.request_timeout_s = 2.0;
    cfg.max_attempts = 2;
    cfg.backoff_initial_s = 0.01;

    HttpProvider provider(cfg);
    CHECK_THROWS_MATCHES(provider.generate("p"), TransportError,
                         MessageMatches(ContainsSubstring("failed after 2 attempt(s)") &&
                                        ContainsSubstring("connection failed")));
}
