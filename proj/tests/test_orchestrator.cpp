#include <gtest/gtest.h>

#include <thread>

#include "decode_cases.hpp"

using namespace toolcoder;
using namespace std::chrono_literals;

class DecodeCaseTest : public ::testing::TestWithParam<decode_cases::Case> {};

TEST_P(DecodeCaseTest, MatchesHandTrace) {
    const auto r = decode_cases::run(GetParam());
    EXPECT_EQ(r.mismatch, "");
    EXPECT_EQ(r.outcome.clean_code, strip_tool_calls(r.outcome.raw_text));
    EXPECT_FALSE(contains_marker(r.outcome.clean_code));
}

INSTANTIATE_TEST_SUITE_P(Scripts, DecodeCaseTest, ::testing::ValuesIn(decode_cases::all()),
                         [](const auto& info) { return info.param.name; });

namespace {

class SlowTool : public ApiSearchTool {
  public:
    SearchResult lookup(std::string_view) override {
        std::this_thread::sleep_for(30ms);
        return {"np.sum", ""};
    }
};

class BadAnswerTool : public ApiSearchTool {
  public:
    SearchResult lookup(std::string_view) override { return {"np sum</API>", ""}; }
};

class ExplodingGenerator : public TokenGenerator {
  public:
    std::unique_ptr<GenerationSession> start(const SamplingParams&) const override {
        struct S : GenerationSession {
            int n = 0;
            StepResult step(std::string_view) override {
                if (n++ == 0) return {"<API>APISearch(su", false};
                throw GeneratorError("connection reset");
            }
        };
        return std::make_unique<S>();
    }
};

class SilentGenerator : public TokenGenerator {
  public:
    std::unique_ptr<GenerationSession> start(const SamplingParams&) const override {
        struct S : GenerationSession {
            StepResult step(std::string_view) override { return {"", false}; }
        };
        return std::make_unique<S>();
    }
};

class ContextRecorder : public TokenGenerator {
  public:
    mutable std::vector<std::string> contexts;
    std::unique_ptr<GenerationSession> start(const SamplingParams&) const override {
        struct S : GenerationSession {
            const ContextRecorder* owner;
            int n = 0;
            explicit S(const ContextRecorder* o) : owner(o) {}
            StepResult step(std::string_view ctx) override {
                owner->contexts.emplace_back(ctx);
                if (n++ == 0) return {"<API>APISearch(sum)->", false};
                return {"np.sum(a)", true};
            }
        };
        return std::make_unique<S>(this);
    }
};

class RecordingTransport : public HttpTransport {
  public:
    std::vector<std::string> bodies;
    std::vector<HttpResponse> replies;
    HttpResponse get(const std::string&, std::chrono::milliseconds) override { return {500, "", ""}; }
    HttpResponse post(const std::string& url, const std::string& body, const std::string&, std::chrono::milliseconds) override {
        EXPECT_EQ(url, "http://model:8000/v1/step");
        bodies.push_back(body);
        if (replies.empty()) return {0, "", "refused"};
        auto r = replies.front();
        replies.erase(replies.begin());
        return r;
    }
};

}  // namespace

TEST(Orchestrator, ContextIncludesInjection) {
    ContextRecorder gen;
    decode_cases::MapTool tool;
    const auto out = infer_with_tool(gen, &tool, "P:", SamplingParams{});
    ASSERT_EQ(gen.contexts.size(), 2u);
    EXPECT_EQ(gen.contexts[0], "P:");
    EXPECT_EQ(gen.contexts[1], "P:<API>APISearch(sum)->np.sum</API>");
    EXPECT_EQ(out.clean_code, "np.sum(a)");
}

TEST(Orchestrator, SlowToolFallsBackToEmpty) {
    ScriptedGenerator gen({"<API>APISearch(sum)->", "x"});
    SlowTool tool;
    OrchestratorOptions opts;
    opts.tool_timeout = 5ms;
    const auto out = infer_with_tool(gen, &tool, "p", SamplingParams{}, {}, opts);
    EXPECT_EQ(out.raw_text, "<API>APISearch(sum)-></API>x");
    ASSERT_EQ(out.trace.tool_invocations(), 1u);
    const auto& inv = std::get<ToolInvoked>(out.trace.events[1]);
    EXPECT_NE(inv.error.find("exceeded"), std::string::npos);
    EXPECT_GE(inv.latency_ms, 5.0);
}

TEST(Orchestrator, UnusableAnswerIsNotInjected) {
    ScriptedGenerator gen({"<API>APISearch(sum)->", "x"});
    BadAnswerTool tool;
    const auto out = infer_with_tool(gen, &tool, "p", SamplingParams{});
    EXPECT_EQ(out.raw_text, "<API>APISearch(sum)-></API>x");
    EXPECT_EQ(out.clean_code, "x");
}

TEST(Orchestrator, GeneratorErrorIsReported) {
    ExplodingGenerator gen;
    const auto out = infer_with_tool(gen, nullptr, "p", SamplingParams{});
    EXPECT_TRUE(out.failed);
    EXPECT_NE(out.error.find("connection reset"), std::string::npos);
    EXPECT_EQ(out.raw_text, "APISearch(su");
    ASSERT_NE(out.trace.stopped(), nullptr);
    EXPECT_EQ(out.trace.stopped()->reason, StopReason::GeneratorError);
}

TEST(Orchestrator, EmptyIncrementIsAnError) {
    SilentGenerator gen;
    const auto out = infer_with_tool(gen, nullptr, "p", SamplingParams{});
    EXPECT_TRUE(out.failed);
}

TEST(Orchestrator, RejectsBadArguments) {
    ScriptedGenerator gen({"x"});
    EXPECT_THROW(infer_with_tool(gen, nullptr, "", SamplingParams{}), std::invalid_argument);
    SamplingParams p;
    p.max_len = 0;
    EXPECT_THROW(infer_with_tool(gen, nullptr, "p", p), std::invalid_argument);
    p = {};
    p.temperature = -1;
    EXPECT_THROW(infer_with_tool(gen, nullptr, "p", p), std::invalid_argument);
}

TEST(Orchestrator, CandidatesUseConsecutiveSeeds) {
    auto gen = ScriptedGenerator::from_json(nlohmann::json::parse(R"({"by_seed": {"5": ["a"], "6": ["b"]}, "default": ["c"]})"));
    SamplingParams p;
    p.seed = 5;
    const auto out = generate_candidates(gen, nullptr, "p", 3, p);
    ASSERT_EQ(out.size(), 3u);
    EXPECT_EQ(out[0].clean_code, "a");
    EXPECT_EQ(out[1].clean_code, "b");
    EXPECT_EQ(out[2].clean_code, "c");
    EXPECT_THROW(generate_candidates(gen, nullptr, "p", 0, p), std::invalid_argument);
}

TEST(Orchestrator, DeterministicAcrossRuns) {
    const auto gen = ScriptedGenerator::load(TOOLCODER_DATA_DIR "/reference_script.json");
    decode_cases::MapTool t1, t2;
    const std::string prompt = "x = np.array([1, 2, 3, 4])\n# cumulative sum of x\nresult = ";
    const auto a = infer_with_tool(gen, &t1, prompt, SamplingParams{});
    const auto b = infer_with_tool(gen, &t2, prompt, SamplingParams{});
    EXPECT_EQ(a.raw_text, b.raw_text);
    EXPECT_EQ(a.trace.events, b.trace.events);
    EXPECT_EQ(a.clean_code, "np.cumsum(x)");
}

TEST(ScriptedGenerator, SessionMatchingOrder) {
    auto gen = ScriptedGenerator::from_json(nlohmann::json::parse(R"({
        "sessions": [{"match": "foo", "seed": 1, "chunks": ["foo1"]}, {"match": "foo", "chunks": ["foo"]}],
        "by_seed": {"1": ["one"]},
        "default": ["dflt"]})"));
    auto run = [&](const char* prompt, std::uint64_t seed) {
        SamplingParams p;
        p.seed = seed;
        return infer_with_tool(gen, nullptr, prompt, p).clean_code;
    };
    EXPECT_EQ(run("a foo b", 1), "foo1");
    EXPECT_EQ(run("a foo b", 2), "foo");
    EXPECT_EQ(run("bar", 1), "one");
    EXPECT_EQ(run("bar", 2), "dflt");
}

TEST(HttpGenerator, SpeaksStepProtocol) {
    auto transport = std::make_shared<RecordingTransport>();
    transport->replies = {{200, R"j({"text": "<API>APISearch(sum)->", "done": false})j", ""},
                          {200, R"j({"text": "np.sum(a)", "done": true})j", ""}};
    HttpGenerator gen(transport, "http://model:8000/", 16);
    decode_cases::MapTool tool;
    SamplingParams p;
    p.seed = 42;
    p.temperature = 0.2;
    const auto out = infer_with_tool(gen, &tool, "P", p);
    EXPECT_FALSE(out.failed);
    EXPECT_EQ(out.clean_code, "np.sum(a)");
    ASSERT_EQ(transport->bodies.size(), 2u);
    const auto second = nlohmann::json::parse(transport->bodies[1]);
    EXPECT_EQ(second["context"], "P<API>APISearch(sum)->np.sum</API>");
    EXPECT_EQ(second["seed"], 42);
    EXPECT_EQ(second["max_new"], 16);
    EXPECT_DOUBLE_EQ(second["temperature"].get<double>(), 0.2);
}

TEST(HttpGenerator, TransportFailureFailsTheSample) {
    auto transport = std::make_shared<RecordingTransport>();
    HttpGenerator gen(transport, "http://model:8000");
    const auto out = infer_with_tool(gen, nullptr, "P", SamplingParams{});
    EXPECT_TRUE(out.failed);
    EXPECT_NE(out.error.find("refused"), std::string::npos);

    transport->replies = {{200, "not json", ""}};
    EXPECT_TRUE(infer_with_tool(gen, nullptr, "P", SamplingParams{}).failed);
}
