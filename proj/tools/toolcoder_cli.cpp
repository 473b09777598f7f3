// toolcoder: index, search, annotate, filter, stats, generate, evaluate, lora, config.
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "toolcoder/toolcoder.hpp"
// after Eigen: <resolv.h> (via httplib) defines a _res macro
#include "toolcoder/net.hpp"

namespace {

using namespace toolcoder;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Writes to --out when given, stdout otherwise.
class Output {
  public:
    explicit Output(const std::string& path) {
        if (!path.empty()) {
            file_.open(path, std::ios::binary);
            if (!file_) throw std::runtime_error("cannot write " + path);
        }
    }
    std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

  private:
    std::ofstream file_;
};

struct GeneratorOptions {
    std::string script;
    std::string url;
};

std::unique_ptr<TokenGenerator> make_generator(const GeneratorOptions& g, const GlobalConfig& cfg) {
    if (!g.script.empty()) return std::make_unique<ScriptedGenerator>(ScriptedGenerator::load(g.script));
    const std::string url = g.url.empty() ? cfg.generator_url : g.url;
    if (url.empty()) throw UsageError("no generator: pass --generator <script.json> or --generator-url <url>");
    return std::make_unique<HttpGenerator>(std::make_shared<HttplibTransport>(), url, cfg.generator_max_new,
                                           std::chrono::milliseconds(cfg.generator_timeout_ms));
}

nlohmann::json outcome_json(const DecodeOutcome& o) {
    auto events = nlohmann::json::array();
    for (const auto& e : o.trace.events) {
        if (const auto* t = std::get_if<TextEmitted>(&e)) events.push_back({{"type", "text"}, {"chunk", t->chunk}});
        else if (const auto* c = std::get_if<ToolInvoked>(&e))
            events.push_back({{"type", "tool"}, {"query", c->query}, {"answer", c->answer}, {"latency_ms", c->latency_ms}, {"error", c->error}});
        else if (const auto* s = std::get_if<Stopped>(&e))
            events.push_back({{"type", "stopped"}, {"reason", to_string(s->reason)}, {"detail", s->detail}});
    }
    nlohmann::json j = {{"raw_text", o.raw_text}, {"clean_code", o.clean_code}, {"failed", o.failed}, {"events", events}};
    if (o.failed) j["error"] = o.error;
    return j;
}

void print_verdict_counts(const std::vector<AnnotatedSample>& samples) {
    std::map<std::string, std::size_t> counts;
    for (const auto& s : samples) ++counts[s.verdict.accepted ? "accepted" : s.verdict.rule_id];
    for (const auto& [k, v] : counts) std::cerr << k << ": " << v << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"toolcoder: tool-augmented code generation pipeline"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "Config file (JSON); defaults to $TOOLCODER_CONFIG")->check(CLI::ExistingFile);

    // index
    auto* index_cmd = app.add_subcommand("index", "Build and persist a BM25 documentation index");
    std::vector<std::string> index_corpus;
    std::string index_out;
    double k1 = 1.2, b = 0.75;
    index_cmd->add_option("corpus", index_corpus, "Doc corpus JSONL files {name, signature, text}")->required()->check(CLI::ExistingFile);
    index_cmd->add_option("-o,--out", index_out, "Index output path")->required();
    index_cmd->add_option("--k1", k1, "BM25 k1");
    index_cmd->add_option("--b", b, "BM25 b");

    // search
    auto* search_cmd = app.add_subcommand("search", "Rank APIs for a natural-language query");
    std::string search_index;
    std::vector<std::string> search_corpus;
    std::string query;
    std::size_t top = 5;
    search_cmd->add_option("query", query, "Query text")->required();
    auto* idx_opt = search_cmd->add_option("--index", search_index, "Index built by `index`")->check(CLI::ExistingFile);
    search_cmd->add_option("--corpus", search_corpus, "Doc corpus JSONL (indexed on the fly)")->check(CLI::ExistingFile)->excludes(idx_opt);
    search_cmd->add_option("--top", top, "Number of results")->check(CLI::PositiveNumber);

    // annotate
    auto* annotate_cmd = app.add_subcommand("annotate", "Select base samples, annotate them, and filter the results");
    std::string ann_in, ann_out, ann_fixture, ann_url;
    std::size_t min_words = 1, max_words = 1000000, sample_n = 0;
    std::uint64_t ann_seed = 0;
    annotate_cmd->add_option("input", ann_in, "Corpus JSONL {id, code}")->required()->check(CLI::ExistingFile);
    annotate_cmd->add_option("-o,--out", ann_out, "Dataset JSONL output (stdout when omitted)");
    auto* fixture_opt = annotate_cmd->add_option("--fixture", ann_fixture, "Recorded annotations JSONL {id, text|error}")->check(CLI::ExistingFile);
    annotate_cmd->add_option("--url", ann_url, "Annotator endpoint (POST {system, messages} -> {text})")->excludes(fixture_opt);
    annotate_cmd->add_option("--min-words", min_words, "Minimum words per base sample");
    annotate_cmd->add_option("--max-words", max_words, "Maximum words per base sample");
    annotate_cmd->add_option("--sample", sample_n, "Number of base samples (0 = all eligible)");
    annotate_cmd->add_option("--seed", ann_seed, "Sampling seed");

    // filter
    auto* filter_cmd = app.add_subcommand("filter", "Apply the filter rules to an annotated dataset");
    std::string filter_in, filter_out;
    filter_cmd->add_option("input", filter_in, "Dataset JSONL {id, original_code, annotated_code}")->required()->check(CLI::ExistingFile);
    filter_cmd->add_option("-o,--out", filter_out, "Verdicts JSONL output (stdout when omitted)");

    // stats
    auto* stats_cmd = app.add_subcommand("stats", "Dataset statistics over accepted samples");
    std::string stats_in;
    bool refilter = false;
    stats_cmd->add_option("input", stats_in, "Dataset JSONL")->required()->check(CLI::ExistingFile);
    stats_cmd->add_flag("--refilter", refilter, "Recompute verdicts instead of trusting stored ones");

    // generate / evaluate share generator and tool selection
    GeneratorOptions gen_opts;
    std::string tool_choice;
    std::size_t samples = 0;
    std::optional<std::uint64_t> seed;
    std::string out_path;
    std::optional<std::size_t> max_len;
    auto add_common = [&](CLI::App* cmd) {
        auto* script = cmd->add_option("--generator", gen_opts.script, "Scripted generator JSON")->check(CLI::ExistingFile);
        cmd->add_option("--generator-url", gen_opts.url, "Remote generator base URL (POST /v1/step)")->excludes(script);
        cmd->add_option("--tool", tool_choice, "Search tool: doc, online, fixture, none")
            ->check(CLI::IsMember({"doc", "online", "fixture", "none"}));
        cmd->add_option("--samples", samples, "Candidates per problem")->check(CLI::PositiveNumber);
        cmd->add_option("--seed", seed, "Base seed");
        cmd->add_option("--max-len", max_len, "Generated character budget")->check(CLI::PositiveNumber);
        cmd->add_option("-o,--out", out_path, "Output path (stdout when omitted)");
    };

    auto* generate_cmd = app.add_subcommand("generate", "Tool-augmented generation for a prompt or benchmark");
    add_common(generate_cmd);
    std::string gen_prompt, gen_benchmark;
    auto* prompt_opt = generate_cmd->add_option("--prompt", gen_prompt, "Prompt text");
    generate_cmd->add_option("--benchmark", gen_benchmark, "Benchmark JSONL (prompts per problem)")
        ->check(CLI::ExistingFile)
        ->excludes(prompt_opt);

    auto* evaluate_cmd = app.add_subcommand("evaluate", "Generate, execute and score pass@k over a benchmark");
    add_common(evaluate_cmd);
    std::string eval_benchmark;
    std::vector<std::uint64_t> eval_seeds;
    std::vector<std::size_t> eval_k;
    double timeout_s = 0.0;
    bool with_candidates = false, unbiased = false;
    evaluate_cmd->add_option("--benchmark", eval_benchmark, "Benchmark JSONL {id, context, description, tests}")
        ->required()
        ->check(CLI::ExistingFile);
    evaluate_cmd->add_option("--seeds", eval_seeds, "Run seeds (results are averaged)");
    evaluate_cmd->add_option("--k", eval_k, "k values for pass@k");
    evaluate_cmd->add_option("--timeout", timeout_s, "Per-candidate timeout in seconds")->check(CLI::PositiveNumber);
    evaluate_cmd->add_flag("--candidates", with_candidates, "Include per-candidate results in the JSON report");
    evaluate_cmd->add_flag("--unbiased", unbiased, "Use the unbiased pass@k estimator instead of first-k");

    // lora
    auto* lora_cmd = app.add_subcommand("lora", "Trainable parameter count of a LoRA setup");
    LoraBudget budget{20, 2, 1024, 8, 350e6};
    lora_cmd->add_option("--layers", budget.n_layers, "Transformer layers");
    lora_cmd->add_option("--matrices", budget.adapted_matrices_per_layer, "Adapted projections per layer");
    lora_cmd->add_option("--d-model", budget.d_model, "Model width");
    lora_cmd->add_option("--rank", budget.rank, "Adapter rank");
    lora_cmd->add_option("--total", budget.total_params, "Total model parameters");

    // config
    auto* config_cmd = app.add_subcommand("config", "Print the effective configuration as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    GlobalConfig cfg;
    try {
        cfg = load_config(config_path);
        if (!tool_choice.empty()) cfg.tool = tool_choice;
        if (samples) cfg.eval.n_samples = samples;
        if (seed) cfg.sampling.seed = *seed;
        if (max_len) cfg.sampling.max_len = *max_len;
        if (!eval_seeds.empty()) cfg.eval.seeds = eval_seeds;
        if (!eval_k.empty()) cfg.eval.k_values = eval_k;
        if (timeout_s > 0) cfg.eval.timeout_s = timeout_s;
        if (unbiased) cfg.eval.unbiased_estimator = true;
        if (*generate_cmd || *evaluate_cmd) cfg.validate();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (*index_cmd) {
            std::vector<DocEntry> corpus;
            for (const auto& p : index_corpus) {
                auto part = load_doc_corpus(p);
                corpus.insert(corpus.end(), part.begin(), part.end());
            }
            const auto index = DocIndex::build(std::move(corpus), {k1, b});
            save_doc_index(index, index_out);
            std::cout << "indexed " << index.size() << " entries -> " << index_out << '\n';
            return 0;
        }

        if (*search_cmd) {
            if (tokenize(query).empty()) throw UsageError("query has no searchable terms");
            std::shared_ptr<const DocIndex> index;
            if (!search_index.empty()) {
                index = std::make_shared<const DocIndex>(load_doc_index(search_index));
            } else {
                std::vector<DocEntry> corpus;
                for (const auto& p : search_corpus.empty() ? cfg.doc_corpus : search_corpus) {
                    auto part = load_doc_corpus(p);
                    corpus.insert(corpus.end(), part.begin(), part.end());
                }
                if (corpus.empty() && !cfg.doc_index.empty())
                    index = std::make_shared<const DocIndex>(load_doc_index(cfg.doc_index));
                else if (corpus.empty())
                    throw UsageError("no documentation: pass --index or --corpus");
                else
                    index = std::make_shared<const DocIndex>(DocIndex::build(std::move(corpus), cfg.bm25));
            }
            for (const auto& r : bm25_search(*index, query, top)) std::cout << r.entry.api_name << '\t' << r.score << '\n';
            return 0;
        }

        if (*annotate_cmd) {
            auto units = load_code_units(ann_in);
            if (sample_n > 0 || min_words > 1 || max_words < 1000000) {
                auto sel = select_base_samples(units, min_words, max_words, sample_n ? sample_n : units.size(), ann_seed);
                for (const auto& d : sel.diagnostics) std::cerr << "note: " << d << '\n';
                units = std::move(sel.units);
            }
            std::unique_ptr<AnnotatorClient> annotator;
            const std::string url = ann_url.empty() ? cfg.annotator_url : ann_url;
            if (!ann_fixture.empty()) annotator = std::make_unique<FixtureAnnotator>(FixtureAnnotator::load(ann_fixture));
            else if (!url.empty())
                annotator = std::make_unique<HttpAnnotator>(std::make_shared<HttplibTransport>(), url,
                                                            std::chrono::milliseconds(cfg.annotator_timeout_ms));
            else throw UsageError("no annotator: pass --fixture <jsonl> or --url <endpoint>");
            const auto prompt = default_annotation_prompt();
            prompt.validate(cfg.library_prefixes, cfg.markers);
            std::vector<AnnotatedSample> results;
            for (const auto& u : units) results.push_back(annotate_sample(u, prompt, *annotator, cfg.public_prefixes, cfg.markers));
            Output out(ann_out);
            for (const auto& s : results) out.stream() << to_json(s).dump() << '\n';
            print_verdict_counts(results);
            return 0;
        }

        if (*filter_cmd) {
            const auto samples_in = load_dataset(filter_in, true, cfg.public_prefixes, cfg.markers);
            Output out(filter_out);
            for (const auto& s : samples_in) out.stream() << to_json(s).dump() << '\n';
            print_verdict_counts(samples_in);
            if (samples_in.empty()) std::cerr << "note: empty input\n";
            return 0;
        }

        if (*stats_cmd) {
            const auto st = compute_stats(load_dataset(stats_in, refilter, cfg.public_prefixes, cfg.markers), cfg.library_prefixes);
            for (const auto& d : st.diagnostics) std::cerr << "note: " << d << '\n';
            std::cout << to_json(st).dump(2) << '\n';
            return 0;
        }

        if (*generate_cmd || *evaluate_cmd) {
            auto generator = make_generator(gen_opts, cfg);
            auto tool = make_search_tool(cfg, std::make_shared<HttplibTransport>());
            if (!tool) std::cerr << "note: search tool disabled\n";

            if (*generate_cmd) {
                std::vector<std::pair<std::string, std::string>> prompts;
                if (!gen_benchmark.empty()) {
                    const auto stem = std::filesystem::path(gen_benchmark).stem().string();
                    for (const auto& p : load_benchmark(gen_benchmark))
                        prompts.emplace_back(p.id, render_prompt(p, cfg.template_for(stem)));
                } else if (!gen_prompt.empty()) {
                    prompts.emplace_back("prompt", gen_prompt);
                } else {
                    throw UsageError("generate needs --prompt or --benchmark");
                }
                const std::size_t n = samples ? samples : 1;
                Output out(out_path);
                for (const auto& [id, prompt] : prompts) {
                    const auto outcomes = generate_candidates(*generator, tool.get(), prompt, n, cfg.sampling, cfg.markers, cfg.orchestrator());
                    for (std::size_t i = 0; i < outcomes.size(); ++i) {
                        auto j = outcome_json(outcomes[i]);
                        j["id"] = id;
                        j["candidate_index"] = i;
                        j["seed"] = cfg.sampling.seed + i;
                        out.stream() << j.dump() << '\n';
                    }
                }
                return 0;
            }

            const auto problems = load_benchmark(eval_benchmark);
            const auto name = std::filesystem::path(eval_benchmark).stem().string();
            EvalConfig ec = cfg.eval;
            ec.templ = cfg.template_for(name);
            EvalWiring wiring{generator.get(), tool.get(), cfg.sampling, cfg.markers, cfg.orchestrator()};
            const auto report = evaluate(wiring, name, problems, ec);
            std::cerr << format_table(report);
            Output out(out_path);
            out.stream() << to_json(report, with_candidates).dump(2) << '\n';
            return 0;
        }

        if (*lora_cmd) {
            const auto count = lora_param_count(budget);
            std::cout << nlohmann::json{{"trainable", count.trainable}, {"fraction", count.fraction}}.dump(2) << '\n';
            return 0;
        }

        if (*config_cmd) {
            std::cout << to_json(cfg).dump(2) << '\n';
            return 0;
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
