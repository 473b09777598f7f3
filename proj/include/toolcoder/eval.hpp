#pragma once

// Benchmark loading, candidate execution and pass@k.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "generators.hpp"
#include "grammar.hpp"
#include "orchestrator.hpp"
#include "parallel.hpp"
#include "sandbox.hpp"
#include "search_tools.hpp"
#include "text.hpp"

namespace toolcoder {

struct BenchmarkProblem {
    std::string id;
    std::string context_code;
    std::string description;
    std::string test_code;
    std::string entry_hint;
};

/// Benchmark JSONL: {id, context, description, tests, entry_hint?} per line.
/// Throws std::runtime_error with the line number on schema violations.
inline std::vector<BenchmarkProblem> load_benchmark(const std::string& path) {
    std::vector<BenchmarkProblem> problems;
    std::set<std::string> ids;
    for_each_line(path, [&](const std::string& line, std::size_t number) {
        auto fail = [&](const std::string& why) { throw std::runtime_error(path + ":" + std::to_string(number) + ": " + why); };
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            fail(e.what());
        }
        if (!j.is_object()) fail("expected a JSON object");
        for (const char* key : {"id", "context", "description", "tests"})
            if (!j.contains(key)) fail(std::string("missing field '") + key + "'");
        BenchmarkProblem p;
        const auto& id = j["id"];
        p.id = id.is_string() ? id.get<std::string>() : id.dump();
        auto text = [&](const char* key) {
            if (!j[key].is_string()) fail(std::string("field '") + key + "' must be a string");
            return j[key].get<std::string>();
        };
        p.context_code = text("context");
        p.description = text("description");
        p.test_code = text("tests");
        if (j.contains("entry_hint") && j["entry_hint"].is_string()) p.entry_hint = j["entry_hint"].get<std::string>();
        if (p.test_code.empty()) fail("empty tests for '" + p.id + "'");
        if (!ids.insert(p.id).second) fail("duplicate id '" + p.id + "'");
        problems.push_back(std::move(p));
    });
    if (problems.empty()) throw std::runtime_error(path + ": benchmark contains no problems");
    return problems;
}

enum class CandidateStatus { Pass, Fail, Error, Timeout };

inline const char* to_string(CandidateStatus s) {
    switch (s) {
        case CandidateStatus::Pass: return "pass";
        case CandidateStatus::Fail: return "fail";
        case CandidateStatus::Error: return "error";
        case CandidateStatus::Timeout: return "timeout";
    }
    return "unknown";
}

struct CandidateResult {
    std::string problem_id;
    std::size_t candidate_index = 0;
    CandidateStatus status = CandidateStatus::Error;
    std::string stderr_excerpt;
    double wall_ms = 0.0;
};

struct BenchmarkTemplate {
    /// Placeholders: {context} {completion} {tests} {description} {entry_hint}
    std::string program = "{context}{completion}\n\n{tests}\n";
    std::string prompt = "{context}";
};

struct EvalConfig {
    std::vector<std::size_t> k_values = {1, 10};
    std::size_t n_samples = 10;
    std::vector<std::uint64_t> seeds = {0, 1000, 2000};
    double timeout_s = 10.0;
    std::vector<std::string> interpreter_cmd = {"python3"};
    BenchmarkTemplate templ;
    std::size_t workers = default_workers();
    bool unbiased_estimator = false;

    void validate() const {
        if (k_values.empty()) throw std::invalid_argument("eval config: k_values is empty");
        if (n_samples == 0) throw std::invalid_argument("eval config: n_samples must be positive");
        for (auto k : k_values)
            if (k == 0) throw std::invalid_argument("eval config: k must be positive");
        if (*std::max_element(k_values.begin(), k_values.end()) > n_samples)
            throw std::invalid_argument("eval config: max(k) exceeds n_samples");
        if (seeds.empty()) throw std::invalid_argument("eval config: no seeds");
        if (!(timeout_s > 0.0)) throw std::invalid_argument("eval config: timeout_s must be positive");
        if (interpreter_cmd.empty()) throw std::invalid_argument("eval config: empty interpreter command");
    }
};

/// Single-pass placeholder substitution; substituted text is not rescanned.
inline std::string render_template(std::string_view templ, const std::map<std::string, std::string_view>& values) {
    std::string out;
    std::size_t i = 0;
    while (i < templ.size()) {
        if (templ[i] == '{') {
            const auto close = templ.find('}', i);
            if (close != std::string_view::npos) {
                auto it = values.find(std::string(templ.substr(i + 1, close - i - 1)));
                if (it != values.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out += templ[i++];
    }
    return out;
}

inline std::string assemble_program(const BenchmarkProblem& p, std::string_view completion, const BenchmarkTemplate& t) {
    return render_template(t.program, {{"context", p.context_code},
                                       {"completion", completion},
                                       {"tests", p.test_code},
                                       {"description", p.description},
                                       {"entry_hint", p.entry_hint}});
}

inline std::string render_prompt(const BenchmarkProblem& p, const BenchmarkTemplate& t) {
    std::string prompt = render_template(t.prompt, {{"context", p.context_code},
                                                    {"description", p.description},
                                                    {"entry_hint", p.entry_hint}});
    return prompt.empty() ? p.description : prompt;
}

/// Executes context + completion + tests. Exit 0 is Pass; a failing assertion
/// is Fail; any other nonzero exit or signal is Error.
/// Throws std::invalid_argument if the completion still contains tool-call markup.
inline CandidateResult run_candidate(const BenchmarkProblem& problem, std::string_view clean_code, const EvalConfig& config,
                                     const ToolCallMarkers& markers = {}) {
    if (contains_marker(clean_code, markers))
        throw std::invalid_argument("run_candidate: completion contains tool-call markup; strip it first");
    SandboxRequest req;
    req.command = config.interpreter_cmd;
    req.program = assemble_program(problem, clean_code, config.templ);
    req.timeout = std::chrono::milliseconds(static_cast<long long>(std::llround(config.timeout_s * 1000.0)));
    const auto run = run_sandboxed(req);

    CandidateResult r;
    r.problem_id = problem.id;
    r.wall_ms = run.wall_ms;
    r.stderr_excerpt = run.err.substr(run.err.size() > 2048 ? run.err.size() - 2048 : 0);
    if (run.timed_out) r.status = CandidateStatus::Timeout;
    else if (!run.signaled && run.exit_code == 0) r.status = CandidateStatus::Pass;
    else if (!run.signaled && run.err.find("AssertionError") != std::string::npos) r.status = CandidateStatus::Fail;
    else r.status = CandidateStatus::Error;
    return r;
}

// ---------------------------------------------------------------------------
// pass@k

/// Fraction of problems where any of the first k candidates (generation order) passed.
/// Throws std::invalid_argument if a problem has fewer than k candidates.
inline double pass_at_k(const std::vector<std::vector<CandidateStatus>>& per_problem, std::size_t k) {
    if (k == 0) throw std::invalid_argument("pass_at_k: k must be positive");
    if (per_problem.empty()) return 0.0;
    std::size_t solved = 0;
    for (const auto& candidates : per_problem) {
        if (candidates.size() < k)
            throw std::invalid_argument("pass_at_k: a problem has " + std::to_string(candidates.size()) +
                                        " candidates, fewer than k = " + std::to_string(k));
        if (std::any_of(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                        [](CandidateStatus s) { return s == CandidateStatus::Pass; }))
            ++solved;
    }
    return static_cast<double>(solved) / static_cast<double>(per_problem.size());
}

/// 1 - C(n-c, k)/C(n, k): unbiased estimate from n samples with c correct.
inline double pass_at_k_unbiased(std::size_t n, std::size_t c, std::size_t k) {
    if (k == 0 || k > n || c > n) throw std::invalid_argument("pass_at_k_unbiased: need 0 < k <= n and c <= n");
    if (n - c < k) return 1.0;
    double miss = 1.0;
    for (std::size_t i = n - c + 1; i <= n; ++i) miss *= 1.0 - static_cast<double>(k) / static_cast<double>(i);
    return 1.0 - miss;
}

inline double pass_at_k_unbiased(const std::vector<std::vector<CandidateStatus>>& per_problem, std::size_t k) {
    if (per_problem.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& c : per_problem)
        sum += pass_at_k_unbiased(c.size(), static_cast<std::size_t>(std::count(c.begin(), c.end(), CandidateStatus::Pass)), k);
    return sum / static_cast<double>(per_problem.size());
}

// ---------------------------------------------------------------------------
// End-to-end evaluation

struct SeedReport {
    std::uint64_t seed = 0;
    std::map<std::size_t, double> pass_at;
    std::map<std::size_t, std::size_t> solved;
    std::size_t tool_invocations = 0;
    std::size_t failed_generations = 0;
    std::vector<CandidateResult> candidates;  // ordered by (problem, candidate index)
};

struct EvalReport {
    std::string benchmark;
    std::size_t problems = 0;
    std::size_t n_samples = 0;
    std::vector<SeedReport> seeds;
    std::map<std::size_t, double> mean;
};

struct EvalWiring {
    const TokenGenerator* generator = nullptr;
    ApiSearchTool* tool = nullptr;  // null: tool disabled
    SamplingParams sampling;
    ToolCallMarkers markers;
    OrchestratorOptions orchestrator;
};

/// For each seed: n_samples candidates per problem, strip, execute, pass@k.
/// Per-candidate failures are recorded, never fatal.
inline EvalReport evaluate(const EvalWiring& wiring, const std::string& benchmark_name,
                           const std::vector<BenchmarkProblem>& problems, const EvalConfig& config) {
    if (!wiring.generator) throw std::invalid_argument("evaluate: no generator");
    config.validate();
    EvalReport report;
    report.benchmark = benchmark_name;
    report.problems = problems.size();
    report.n_samples = config.n_samples;

    for (const auto seed : config.seeds) {
        SeedReport sr;
        sr.seed = seed;
        std::vector<std::vector<DecodeOutcome>> outcomes(problems.size());
        parallel_for(problems.size(), config.workers, [&](std::size_t p) {
            SamplingParams params = wiring.sampling;
            params.seed = seed;
            outcomes[p] = generate_candidates(*wiring.generator, wiring.tool, render_prompt(problems[p], config.templ),
                                              config.n_samples, params, wiring.markers, wiring.orchestrator);
        });

        const std::size_t total = problems.size() * config.n_samples;
        sr.candidates.resize(total);
        parallel_for(total, config.workers, [&](std::size_t idx) {
            const std::size_t p = idx / config.n_samples;
            const std::size_t c = idx % config.n_samples;
            const auto& outcome = outcomes[p][c];
            CandidateResult r;
            if (outcome.failed) {
                r.status = CandidateStatus::Error;
                r.stderr_excerpt = "generation failed: " + outcome.error;
            } else if (contains_marker(outcome.clean_code, wiring.markers)) {
                r.status = CandidateStatus::Error;
                r.stderr_excerpt = "completion still contains tool-call markup";
            } else {
                r = run_candidate(problems[p], outcome.clean_code, config, wiring.markers);
            }
            r.problem_id = problems[p].id;
            r.candidate_index = c;
            sr.candidates[idx] = std::move(r);
        });

        std::vector<std::vector<CandidateStatus>> table(problems.size());
        for (std::size_t p = 0; p < problems.size(); ++p) {
            for (std::size_t c = 0; c < config.n_samples; ++c) {
                table[p].push_back(sr.candidates[p * config.n_samples + c].status);
                sr.tool_invocations += outcomes[p][c].trace.tool_invocations();
                if (outcomes[p][c].failed) ++sr.failed_generations;
            }
        }
        for (const auto k : config.k_values) {
            const double v = config.unbiased_estimator ? pass_at_k_unbiased(table, k) : pass_at_k(table, k);
            sr.pass_at[k] = v;
            std::size_t solved = 0;
            for (const auto& row : table)
                if (std::any_of(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k),
                                [](CandidateStatus s) { return s == CandidateStatus::Pass; }))
                    ++solved;
            sr.solved[k] = solved;
        }
        report.seeds.push_back(std::move(sr));
    }
    for (const auto k : config.k_values) {
        double sum = 0.0;
        for (const auto& s : report.seeds) sum += s.pass_at.at(k);
        report.mean[k] = sum / static_cast<double>(report.seeds.size());
    }
    return report;
}

inline nlohmann::json to_json(const EvalReport& r, bool with_candidates = false) {
    nlohmann::json j;
    j["benchmark"] = r.benchmark;
    j["problems"] = r.problems;
    j["n_samples"] = r.n_samples;
    auto seeds = nlohmann::json::array();
    nlohmann::json pass_at = nlohmann::json::object();
    nlohmann::json solved = nlohmann::json::object();
    nlohmann::json mean = nlohmann::json::object();
    auto invocations = nlohmann::json::array();
    for (const auto& s : r.seeds) {
        seeds.push_back(s.seed);
        invocations.push_back(s.tool_invocations);
        for (const auto& [k, v] : s.pass_at) {
            pass_at[std::to_string(k)].push_back(v);
            solved[std::to_string(k)].push_back(s.solved.at(k));
        }
    }
    for (const auto& [k, v] : r.mean) mean[std::to_string(k)] = v;
    j["seeds"] = seeds;
    j["pass_at"] = pass_at;
    j["solved"] = solved;
    j["mean"] = mean;
    j["tool_invocations"] = invocations;
    if (with_candidates) {
        auto cands = nlohmann::json::array();
        for (const auto& s : r.seeds)
            for (const auto& c : s.candidates)
                cands.push_back({{"seed", s.seed},
                                 {"problem_id", c.problem_id},
                                 {"candidate_index", c.candidate_index},
                                 {"status", to_string(c.status)},
                                 {"stderr_excerpt", c.stderr_excerpt}});
        j["candidates"] = cands;
    }
    return j;
}

inline std::string format_table(const EvalReport& r) {
    std::ostringstream os;
    os << "benchmark " << r.benchmark << "  problems " << r.problems << "  samples " << r.n_samples << '\n';
    os << std::left << std::setw(10) << "seed";
    std::vector<std::size_t> ks;
    for (const auto& [k, _] : r.mean) ks.push_back(k);
    for (auto k : ks) os << std::setw(12) << ("pass@" + std::to_string(k));
    os << "tool calls\n";
    os << std::fixed << std::setprecision(4);
    for (const auto& s : r.seeds) {
        os << std::setw(10) << s.seed;
        for (auto k : ks) os << std::setw(12) << s.pass_at.at(k);
        os << s.tool_invocations << '\n';
    }
    os << std::setw(10) << "mean";
    for (auto k : ks) os << std::setw(12) << r.mean.at(k);
    os << '\n';
    return os.str();
}

}  // namespace toolcoder
