#pragma once

// Global configuration: one JSON file, every field optional (defaults below).
// TOOLCODER_CONFIG names the file; TOOLCODER_TOOL and TOOLCODER_INTERPRETER
// override single fields. Relative paths resolve against the file's directory.

#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "annotation.hpp"
#include "eval.hpp"
#include "grammar.hpp"
#include "orchestrator.hpp"
#include "search_tools.hpp"

namespace toolcoder {

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct GlobalConfig {
    ToolCallMarkers markers;
    SamplingParams sampling;

    std::string tool = "doc";  // doc | online | fixture | none
    std::vector<std::string> doc_corpus;
    std::string doc_index;
    Bm25Params bm25;

    OnlineSearchConfig online;
    bool allowlist_from_corpus = true;

    std::string cache_path;
    CacheMode cache_mode = CacheMode::Replay;
    MissPolicy cache_miss = MissPolicy::Empty;

    long long tool_timeout_ms = 600;
    ToolFailurePolicy on_tool_failure = ToolFailurePolicy::InjectEmpty;

    std::vector<std::string> public_prefixes = default_public_prefixes();
    std::map<std::string, std::vector<std::string>> library_prefixes = default_library_prefixes();

    EvalConfig eval;
    std::map<std::string, BenchmarkTemplate> benchmark_templates;

    std::string generator_url;
    std::size_t generator_max_new = 16;
    long long generator_timeout_ms = 30000;

    std::string annotator_url;
    long long annotator_timeout_ms = 60000;

    OrchestratorOptions orchestrator() const {
        return {on_tool_failure, std::chrono::milliseconds(tool_timeout_ms)};
    }

    BenchmarkTemplate template_for(const std::string& benchmark) const {
        auto it = benchmark_templates.find(benchmark);
        return it == benchmark_templates.end() ? eval.templ : it->second;
    }

    /// Checks cross-field invariants and that referenced files exist.
    void validate() const {
        try {
            markers.validate();
            sampling.validate();
            eval.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        static const std::set<std::string> tools = {"doc", "online", "fixture", "none"};
        if (!tools.count(tool)) throw ConfigError("config: unknown tool '" + tool + "'");
        if (tool == "doc" && doc_corpus.empty() && doc_index.empty())
            throw ConfigError("config: tool 'doc' needs doc_corpus or doc_index");
        if (tool == "fixture" && cache_path.empty()) throw ConfigError("config: tool 'fixture' needs cache.path");
        if (tool == "online" && online.sites.empty()) throw ConfigError("config: tool 'online' needs sites");
        for (const auto& p : doc_corpus)
            if (!std::filesystem::exists(p)) throw ConfigError("config: doc corpus not found: " + p);
        if (!doc_index.empty() && !std::filesystem::exists(doc_index))
            throw ConfigError("config: doc index not found: " + doc_index);
        if (tool == "fixture" && !std::filesystem::exists(cache_path))
            throw ConfigError("config: cache file not found: " + cache_path);
        if (tool_timeout_ms <= 0) throw ConfigError("config: tool_timeout_ms must be positive");
    }
};

namespace detail {

inline std::string resolve_path(const std::string& p, const std::filesystem::path& base) {
    if (p.empty() || base.empty()) return p;
    std::filesystem::path path(p);
    return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

template <typename T>
void take(const nlohmann::json& j, const char* key, T& dst) {
    if (j.contains(key)) dst = j.at(key).get<T>();
}

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
    for (const auto& [key, _] : j.items())
        if (!allowed.count(key)) throw ConfigError("config: unknown key '" + key + "' in " + where);
}

}  // namespace detail

inline nlohmann::json to_json(const GlobalConfig& c) {
    nlohmann::json templates = nlohmann::json::object();
    for (const auto& [name, t] : c.benchmark_templates) templates[name] = {{"program", t.program}, {"prompt", t.prompt}};
    return {
        {"markers",
         {{"open", c.markers.open_marker},
          {"close", c.markers.close_marker},
          {"call_prefix", c.markers.call_prefix},
          {"arrows", c.markers.arrows},
          {"emit_arrow", c.markers.emit_arrow}}},
        {"sampling",
         {{"temperature", c.sampling.temperature},
          {"seed", c.sampling.seed},
          {"max_len", c.sampling.max_len},
          {"stop_sequences", c.sampling.stop_sequences}}},
        {"tool", c.tool},
        {"doc_corpus", c.doc_corpus},
        {"doc_index", c.doc_index},
        {"bm25", {{"k1", c.bm25.k1}, {"b", c.bm25.b}}},
        {"online",
         {{"sites", c.online.sites},
          {"endpoint", c.online.endpoint},
          {"pages_per_site", c.online.pages_per_site},
          {"timeout_ms", c.online.timeout.count()},
          {"vocab_patterns", c.online.vocab.patterns},
          {"allowlist", c.online.vocab.allowlist},
          {"allowlist_from_corpus", c.allowlist_from_corpus}}},
        {"cache",
         {{"path", c.cache_path},
          {"mode", c.cache_mode == CacheMode::Replay ? "replay" : "record"},
          {"miss", c.cache_miss == MissPolicy::Error ? "error" : "empty"}}},
        {"tool_timeout_ms", c.tool_timeout_ms},
        {"on_tool_failure", c.on_tool_failure == ToolFailurePolicy::Abort ? "abort" : "empty"},
        {"public_prefixes", c.public_prefixes},
        {"library_prefixes", c.library_prefixes},
        {"eval",
         {{"k_values", c.eval.k_values},
          {"n_samples", c.eval.n_samples},
          {"seeds", c.eval.seeds},
          {"timeout_s", c.eval.timeout_s},
          {"interpreter", c.eval.interpreter_cmd},
          {"workers", c.eval.workers},
          {"unbiased_estimator", c.eval.unbiased_estimator},
          {"program_template", c.eval.templ.program},
          {"prompt_template", c.eval.templ.prompt}}},
        {"benchmark_templates", templates},
        {"generator", {{"url", c.generator_url}, {"max_new", c.generator_max_new}, {"timeout_ms", c.generator_timeout_ms}}},
        {"annotator", {{"url", c.annotator_url}, {"timeout_ms", c.annotator_timeout_ms}}},
    };
}

/// Overlays `j` onto defaults. `base` resolves relative paths. Throws ConfigError.
inline GlobalConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {}) {
    using detail::take;
    GlobalConfig c;
    try {
        detail::check_keys(j,
                           {"markers", "sampling", "tool", "doc_corpus", "doc_index", "bm25", "online", "cache",
                            "tool_timeout_ms", "on_tool_failure", "public_prefixes", "library_prefixes", "eval",
                            "benchmark_templates", "generator", "annotator"},
                           "config");
        if (j.contains("markers")) {
            const auto& m = j["markers"];
            detail::check_keys(m, {"open", "close", "call_prefix", "arrows", "emit_arrow"}, "markers");
            take(m, "open", c.markers.open_marker);
            take(m, "close", c.markers.close_marker);
            take(m, "call_prefix", c.markers.call_prefix);
            take(m, "arrows", c.markers.arrows);
            take(m, "emit_arrow", c.markers.emit_arrow);
        }
        if (j.contains("sampling")) {
            const auto& s = j["sampling"];
            detail::check_keys(s, {"temperature", "seed", "max_len", "stop_sequences"}, "sampling");
            take(s, "temperature", c.sampling.temperature);
            take(s, "seed", c.sampling.seed);
            take(s, "max_len", c.sampling.max_len);
            take(s, "stop_sequences", c.sampling.stop_sequences);
        }
        take(j, "tool", c.tool);
        take(j, "doc_corpus", c.doc_corpus);
        take(j, "doc_index", c.doc_index);
        if (j.contains("bm25")) {
            detail::check_keys(j["bm25"], {"k1", "b"}, "bm25");
            take(j["bm25"], "k1", c.bm25.k1);
            take(j["bm25"], "b", c.bm25.b);
        }
        if (j.contains("online")) {
            const auto& o = j["online"];
            detail::check_keys(o, {"sites", "endpoint", "pages_per_site", "timeout_ms", "vocab_patterns", "allowlist",
                                   "allowlist_from_corpus"},
                               "online");
            take(o, "sites", c.online.sites);
            take(o, "endpoint", c.online.endpoint);
            take(o, "pages_per_site", c.online.pages_per_site);
            if (o.contains("timeout_ms")) c.online.timeout = std::chrono::milliseconds(o["timeout_ms"].get<long long>());
            take(o, "vocab_patterns", c.online.vocab.patterns);
            take(o, "allowlist", c.online.vocab.allowlist);
            take(o, "allowlist_from_corpus", c.allowlist_from_corpus);
        }
        if (j.contains("cache")) {
            const auto& k = j["cache"];
            detail::check_keys(k, {"path", "mode", "miss"}, "cache");
            take(k, "path", c.cache_path);
            if (k.contains("mode")) {
                const auto mode = k["mode"].get<std::string>();
                if (mode != "replay" && mode != "record") throw ConfigError("config: cache.mode must be replay or record");
                c.cache_mode = mode == "replay" ? CacheMode::Replay : CacheMode::Record;
            }
            if (k.contains("miss")) {
                const auto miss = k["miss"].get<std::string>();
                if (miss != "error" && miss != "empty") throw ConfigError("config: cache.miss must be error or empty");
                c.cache_miss = miss == "error" ? MissPolicy::Error : MissPolicy::Empty;
            }
        }
        take(j, "tool_timeout_ms", c.tool_timeout_ms);
        if (j.contains("on_tool_failure")) {
            const auto p = j["on_tool_failure"].get<std::string>();
            if (p != "empty" && p != "abort") throw ConfigError("config: on_tool_failure must be empty or abort");
            c.on_tool_failure = p == "abort" ? ToolFailurePolicy::Abort : ToolFailurePolicy::InjectEmpty;
        }
        take(j, "public_prefixes", c.public_prefixes);
        take(j, "library_prefixes", c.library_prefixes);
        if (j.contains("eval")) {
            const auto& e = j["eval"];
            detail::check_keys(e, {"k_values", "n_samples", "seeds", "timeout_s", "interpreter", "workers",
                                   "unbiased_estimator", "program_template", "prompt_template"},
                               "eval");
            take(e, "k_values", c.eval.k_values);
            take(e, "n_samples", c.eval.n_samples);
            take(e, "seeds", c.eval.seeds);
            take(e, "timeout_s", c.eval.timeout_s);
            take(e, "interpreter", c.eval.interpreter_cmd);
            take(e, "workers", c.eval.workers);
            take(e, "unbiased_estimator", c.eval.unbiased_estimator);
            take(e, "program_template", c.eval.templ.program);
            take(e, "prompt_template", c.eval.templ.prompt);
        }
        if (j.contains("benchmark_templates")) {
            for (const auto& [name, t] : j["benchmark_templates"].items()) {
                detail::check_keys(t, {"program", "prompt"}, "benchmark_templates." + name);
                BenchmarkTemplate bt = c.eval.templ;
                take(t, "program", bt.program);
                take(t, "prompt", bt.prompt);
                c.benchmark_templates[name] = bt;
            }
        }
        if (j.contains("generator")) {
            detail::check_keys(j["generator"], {"url", "max_new", "timeout_ms"}, "generator");
            take(j["generator"], "url", c.generator_url);
            take(j["generator"], "max_new", c.generator_max_new);
            take(j["generator"], "timeout_ms", c.generator_timeout_ms);
        }
        if (j.contains("annotator")) {
            detail::check_keys(j["annotator"], {"url", "timeout_ms"}, "annotator");
            take(j["annotator"], "url", c.annotator_url);
            take(j["annotator"], "timeout_ms", c.annotator_timeout_ms);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    for (auto& p : c.doc_corpus) p = detail::resolve_path(p, base);
    c.doc_index = detail::resolve_path(c.doc_index, base);
    c.cache_path = detail::resolve_path(c.cache_path, base);
    return c;
}

inline void apply_env_overrides(GlobalConfig& c) {
    if (const char* tool = std::getenv("TOOLCODER_TOOL"); tool && *tool) c.tool = tool;
    if (const char* interp = std::getenv("TOOLCODER_INTERPRETER"); interp && *interp) {
        std::istringstream words(interp);
        std::vector<std::string> cmd;
        for (std::string w; words >> w;) cmd.push_back(w);
        if (!cmd.empty()) c.eval.interpreter_cmd = cmd;
    }
}

/// Reads `path` (or $TOOLCODER_CONFIG when `path` is empty; defaults when
/// neither is set), then applies environment overrides. Does not validate.
inline GlobalConfig load_config(std::string path = {}) {
    if (path.empty())
        if (const char* env = std::getenv("TOOLCODER_CONFIG"); env) path = env;
    GlobalConfig c;
    if (!path.empty()) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_file(path));
        } catch (const std::exception& e) {
            throw ConfigError("config: cannot read " + path + ": " + e.what());
        }
        c = config_from_json(j, std::filesystem::path(path).parent_path());
    }
    apply_env_overrides(c);
    return c;
}

}  // namespace toolcoder

namespace toolcoder {

/// Builds the configured search backend; returns null for tool "none".
/// The transport is only used by the online backend.
inline std::shared_ptr<ApiSearchTool> make_search_tool(const GlobalConfig& c, std::shared_ptr<HttpTransport> transport) {
    auto corpus_entries = [&] {
        std::vector<DocEntry> all;
        for (const auto& p : c.doc_corpus) {
            auto part = load_doc_corpus(p);
            all.insert(all.end(), part.begin(), part.end());
        }
        return all;
    };
    if (c.tool == "none") return nullptr;
    if (c.tool == "doc") {
        auto index = c.doc_index.empty() ? std::make_shared<const DocIndex>(DocIndex::build(corpus_entries(), c.bm25))
                                         : std::make_shared<const DocIndex>(load_doc_index(c.doc_index));
        return std::make_shared<DocSearchTool>(std::move(index));
    }
    if (c.tool == "fixture") {
        auto cache = std::make_shared<SearchFixtureCache>(SearchFixtureCache::load(c.cache_path));
        return std::make_shared<CachedSearchTool>(std::move(cache), nullptr, CacheMode::Replay, c.cache_miss);
    }
    if (c.tool == "online") {
        OnlineSearchConfig oc = c.online;
        if (c.allowlist_from_corpus)
            for (const auto& e : corpus_entries()) oc.vocab.allowlist.push_back(e.api_name);
        auto online = std::make_shared<OnlineSearchTool>(std::move(transport), std::move(oc));
        if (c.cache_path.empty()) return online;
        auto cache = std::make_shared<SearchFixtureCache>(std::filesystem::exists(c.cache_path)
                                                              ? SearchFixtureCache::load(c.cache_path)
                                                              : SearchFixtureCache{});
        if (c.cache_mode == CacheMode::Replay)
            return std::make_shared<CachedSearchTool>(std::move(cache), nullptr, CacheMode::Replay, c.cache_miss);
        return std::make_shared<CachedSearchTool>(std::move(cache), std::move(online), CacheMode::Record, c.cache_miss,
                                                  c.cache_path);
    }
    throw ConfigError("config: unknown tool '" + c.tool + "'");
}

}  // namespace toolcoder
