#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <toolcoder/eval.hpp>

using namespace toolcoder;
using namespace std::chrono_literals;
using S = CandidateStatus;

namespace {

BenchmarkProblem problem(std::string tests = "assert out == 6") {
    return {"p", "import numpy as np\nout = ", "sum", std::move(tests), ""};
}

EvalConfig fast_config() {
    EvalConfig c;
    c.timeout_s = 5;
    return c;
}

}  // namespace

TEST(PassAtK, EnumeratedPattern) {
    // problem 0 passes only at candidate 2, problem 1 never, problem 2 at candidate 1 (1-based)
    std::vector<std::vector<S>> table(3, std::vector<S>(10, S::Fail));
    table[0][1] = S::Pass;
    table[2][0] = S::Pass;
    EXPECT_EQ(pass_at_k(table, 1), 1.0 / 3.0);
    EXPECT_EQ(pass_at_k(table, 10), 2.0 / 3.0);
    EXPECT_EQ(pass_at_k(table, 2), 2.0 / 3.0);
}

TEST(PassAtK, MonotoneInK) {
    std::mt19937 rng(17);
    for (int iter = 0; iter < 100; ++iter) {
        std::vector<std::vector<S>> table(1 + rng() % 10, std::vector<S>(10));
        for (auto& row : table)
            for (auto& s : row) s = static_cast<S>(rng() % 4);
        double prev = 0;
        for (std::size_t k = 1; k <= 10; ++k) {
            const double v = pass_at_k(table, k);
            EXPECT_GE(v, prev);
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
            prev = v;
        }
    }
}

TEST(PassAtK, Errors) {
    EXPECT_THROW(pass_at_k({{S::Pass}}, 2), std::invalid_argument);
    EXPECT_THROW(pass_at_k({{S::Pass}}, 0), std::invalid_argument);
    EXPECT_EQ(pass_at_k({}, 1), 0.0);
}

TEST(PassAtK, UnbiasedEstimator) {
    // n=10, c=3, k=1 -> 0.3 ; k=10 -> 1
    EXPECT_NEAR(pass_at_k_unbiased(10, 3, 1), 0.3, 1e-12);
    EXPECT_EQ(pass_at_k_unbiased(10, 3, 10), 1.0);
    EXPECT_EQ(pass_at_k_unbiased(10, 0, 5), 0.0);
    // 1 - C(8,2)/C(10,2) = 1 - 28/45
    EXPECT_NEAR(pass_at_k_unbiased(10, 2, 2), 17.0 / 45.0, 1e-12);
    EXPECT_THROW(pass_at_k_unbiased(5, 1, 6), std::invalid_argument);
}

TEST(Template, SinglePassSubstitution) {
    EXPECT_EQ(render_template("{a}-{b}-{c}", {{"a", "{b}"}, {"b", "x"}}), "{b}-x-{c}");
    const auto p = problem();
    EXPECT_EQ(assemble_program(p, "6", {}), "import numpy as np\nout = 6\n\nassert out == 6\n");
    EXPECT_EQ(render_prompt(p, {}), p.context_code);
}

TEST(Benchmark, LoadsFixtureAndReportsErrors) {
    const auto probs = load_benchmark(TOOLCODER_DATA_DIR "/numpy_fixture.jsonl");
    EXPECT_EQ(probs.size(), 5u);
    const auto dir = std::filesystem::temp_directory_path();
    auto write = [&](const char* name, const std::string& text) {
        const auto path = (dir / name).string();
        std::ofstream(path) << text;
        return path;
    };
    const auto missing = write("tc_bench_missing.jsonl", R"({"id": "a", "context": "", "description": ""})" "\n");
    try {
        load_benchmark(missing);
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find(":1: missing field 'tests'"), std::string::npos);
    }
    const auto dup = write("tc_bench_dup.jsonl", R"({"id": "a", "context": "", "description": "", "tests": "x"})" "\n"
                                                 R"({"id": "a", "context": "", "description": "", "tests": "x"})" "\n");
    EXPECT_THROW(load_benchmark(dup), std::runtime_error);
    const auto empty = write("tc_bench_empty.jsonl", "\n");
    EXPECT_THROW(load_benchmark(empty), std::runtime_error);
    for (const auto& p : {missing, dup, empty}) std::filesystem::remove(p);
}

TEST(RunCandidate, Statuses) {
    const auto cfg = fast_config();
    EXPECT_EQ(run_candidate(problem(), "np.sum([1, 2, 3])", cfg).status, S::Pass);
    EXPECT_EQ(run_candidate(problem(), "np.sum([1, 2])", cfg).status, S::Fail);
    EXPECT_EQ(run_candidate(problem(), "np.sum([1, 2, 3]", cfg).status, S::Error);
    EXPECT_EQ(run_candidate(problem(), "undefined_name", cfg).status, S::Error);
    EXPECT_THROW(run_candidate(problem(), "<API>APISearch(q)->x</API>6", cfg), std::invalid_argument);
}

TEST(RunCandidate, Timeout) {
    auto cfg = fast_config();
    cfg.timeout_s = 0.5;
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = run_candidate(problem(), "6\nwhile True:\n    pass", cfg);
    EXPECT_EQ(r.status, S::Timeout);
    EXPECT_LT(std::chrono::steady_clock::now() - t0, 3s);
}

TEST(Sandbox, EmptyEnvironmentAndScratchCwd) {
    SandboxRequest req;
    req.command = {"python3"};
    req.program = "import os\nprint('PATH' in os.environ or 'HOME' in os.environ)\nprint(os.getcwd())\nopen('ok.txt', 'w').write('x')\n";
    req.keep_scratch = true;
    const auto r = run_sandboxed(req);
    EXPECT_EQ(r.exit_code, 0) << r.err;
    EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "False");
    EXPECT_NE(r.out.find(r.scratch_dir.string()), std::string::npos);
    EXPECT_TRUE(std::filesystem::exists(r.scratch_dir / "ok.txt"));
    std::filesystem::remove_all(r.scratch_dir);
}

TEST(Sandbox, OutputIsCapped) {
    SandboxRequest req;
    req.command = {"python3"};
    req.program = "import sys\nsys.stdout.write('x' * 1000000)\n";
    const auto r = run_sandboxed(req);
    EXPECT_EQ(r.exit_code, 0);
    EXPECT_EQ(r.out.size(), kDefaultOutputCap);
}

TEST(Sandbox, WritesOutsideScratchAreBlocked) {
    if (!write_isolation_available()) GTEST_SKIP() << "kernel has no Landlock support";
    const auto victim = std::filesystem::temp_directory_path() / "toolcoder_sandbox_probe.txt";
    std::filesystem::remove(victim);
    SandboxRequest req;
    req.command = {"python3"};
    req.program = "try:\n    open('" + victim.string() + "', 'w').write('x')\n    print('wrote')\nexcept OSError:\n    print('blocked')\n";
    const auto r = run_sandboxed(req);
    EXPECT_TRUE(r.write_isolation);
    EXPECT_EQ(r.out, "blocked\n") << r.err;
    EXPECT_FALSE(std::filesystem::exists(victim));
}

TEST(Sandbox, MissingInterpreter) {
    SandboxRequest req;
    req.command = {"definitely-not-an-interpreter"};
    req.program = "";
    const auto r = run_sandboxed(req);
    EXPECT_EQ(r.exit_code, 127);
}

TEST(Evaluate, ReferenceScriptSolvesFixture) {
    const auto probs = load_benchmark(TOOLCODER_DATA_DIR "/numpy_fixture.jsonl");
    const auto gen = ScriptedGenerator::load(TOOLCODER_DATA_DIR "/reference_script.json");
    auto cache = std::make_shared<SearchFixtureCache>(SearchFixtureCache::load(TOOLCODER_DATA_DIR "/search_cache.jsonl"));
    CachedSearchTool tool(cache, nullptr, CacheMode::Replay, MissPolicy::Error);
    EvalWiring w;
    w.generator = &gen;
    w.tool = &tool;
    EvalConfig cfg = fast_config();
    cfg.k_values = {1, 2};
    cfg.n_samples = 2;
    cfg.seeds = {0, 1000};
    const auto report = evaluate(w, "fixture", probs, cfg);
    ASSERT_EQ(report.seeds.size(), 2u);
    EXPECT_EQ(report.mean.at(1), 1.0);
    EXPECT_EQ(report.seeds[0].tool_invocations, 10u);
    const auto j = to_json(report);
    EXPECT_EQ(j["pass_at"]["1"], nlohmann::json::array({1.0, 1.0}));
    EXPECT_NE(format_table(report).find("pass@1"), std::string::npos);
}

TEST(Evaluate, GarbageScriptScoresZero) {
    const auto probs = load_benchmark(TOOLCODER_DATA_DIR "/numpy_fixture.jsonl");
    const auto gen = ScriptedGenerator::load(TOOLCODER_DATA_DIR "/garbage_script.json");
    EvalWiring w;
    w.generator = &gen;
    EvalConfig cfg = fast_config();
    cfg.k_values = {1};
    cfg.n_samples = 1;
    cfg.seeds = {0};
    const auto report = evaluate(w, "fixture", probs, cfg);
    EXPECT_EQ(report.mean.at(1), 0.0);
    for (const auto& c : report.seeds[0].candidates) EXPECT_EQ(c.status, S::Error);
}

TEST(Evaluate, ConfigValidation) {
    EvalConfig c;
    c.k_values = {1, 20};
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.seeds.clear();
    EXPECT_THROW(c.validate(), std::invalid_argument);
}
