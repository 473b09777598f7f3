#pragma once

#include <algorithm>
#include <chrono>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <mutex>
#include <regex>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "doc_index.hpp"
#include "grammar.hpp"
#include "http.hpp"
#include "text.hpp"

namespace toolcoder {

struct SearchResult {
    std::string answer;  // single API name, empty when nothing was found
    std::string source;  // doc id or page URL backing the answer
};

class SearchError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// query -> single suggested API. Implementations must tolerate concurrent calls.
class ApiSearchTool {
  public:
    virtual ~ApiSearchTool() = default;
    virtual SearchResult lookup(std::string_view query) = 0;
    std::string search(std::string_view query) { return lookup(query).answer; }
};

/// Answers may be injected into code: no whitespace, no markup.
inline bool is_valid_answer(std::string_view answer, const ToolCallMarkers& m = {}) {
    return !has_whitespace(answer) && !contains_marker(answer, m);
}

// ---------------------------------------------------------------------------
// Documentation search

/// Answers with the rank-1 entry of a BM25 search.
class DocSearchTool final : public ApiSearchTool {
  public:
    explicit DocSearchTool(std::shared_ptr<const DocIndex> index) : index_(std::move(index)) {
        if (!index_) throw std::invalid_argument("DocSearchTool: null index");
    }

    SearchResult lookup(std::string_view query) override {
        const auto top = index_->search(query, 1);
        if (top.empty()) return {};
        return {index_->entries()[top.front().entry_id].api_name, "doc:" + std::to_string(top.front().entry_id)};
    }

    const DocIndex& index() const { return *index_; }

  private:
    std::shared_ptr<const DocIndex> index_;
};

// ---------------------------------------------------------------------------
// Recording cache

struct CacheRecord {
    std::string answer;
    std::string source;
    double latency_ms = 0.0;
};

/// normalized query -> recorded answer. Concurrent reads, serialized writes.
class SearchFixtureCache {
  public:
    SearchFixtureCache() = default;
    SearchFixtureCache(SearchFixtureCache&& other) noexcept {
        std::unique_lock lock(other.mutex_);
        records_ = std::move(other.records_);
    }
    SearchFixtureCache& operator=(SearchFixtureCache&& other) noexcept {
        if (this != &other) {
            std::scoped_lock lock(mutex_, other.mutex_);
            records_ = std::move(other.records_);
        }
        return *this;
    }

    std::optional<CacheRecord> find(std::string_view query) const {
        std::shared_lock lock(mutex_);
        auto it = records_.find(normalize_query(query));
        if (it == records_.end()) return std::nullopt;
        return it->second;
    }

    void put(std::string_view query, CacheRecord record) {
        std::unique_lock lock(mutex_);
        records_[normalize_query(query)] = std::move(record);
    }

    std::size_t size() const {
        std::shared_lock lock(mutex_);
        return records_.size();
    }

    /// Cache file: one {query, answer, source, latency_ms} object per line.
    static SearchFixtureCache load(const std::string& path) {
        SearchFixtureCache cache;
        for_each_line(path, [&](const std::string& line, std::size_t number) {
            try {
                const auto j = nlohmann::json::parse(line);
                cache.put(j.at("query").get<std::string>(),
                          {j.at("answer").get<std::string>(), j.value("source", ""), j.value("latency_ms", 0.0)});
            } catch (const nlohmann::json::exception& e) {
                throw std::runtime_error(path + ":" + std::to_string(number) + ": " + e.what());
            }
        });
        return cache;
    }

    void save(const std::string& path) const {
        std::shared_lock lock(mutex_);
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + path);
        for (const auto& [query, r] : records_) out << record_line(query, r) << '\n';
    }

    static std::string record_line(std::string_view query, const CacheRecord& r) {
        return nlohmann::json{{"query", std::string(query)}, {"answer", r.answer}, {"source", r.source}, {"latency_ms", r.latency_ms}}
            .dump();
    }

  private:
    mutable std::shared_mutex mutex_;
    std::map<std::string, CacheRecord> records_;
};

enum class CacheMode { Replay, Record };
enum class MissPolicy { Error, Empty };

/// Cache-first wrapper. Replay never reaches the inner tool; Record forwards
/// misses and stores (and optionally appends) what the inner tool returned.
class CachedSearchTool final : public ApiSearchTool {
  public:
    CachedSearchTool(std::shared_ptr<SearchFixtureCache> cache, std::shared_ptr<ApiSearchTool> inner, CacheMode mode,
                     MissPolicy miss = MissPolicy::Empty, std::string append_path = {})
        : cache_(std::move(cache)), inner_(std::move(inner)), mode_(mode), miss_(miss), append_path_(std::move(append_path)) {
        if (!cache_) throw std::invalid_argument("CachedSearchTool: null cache");
        if (mode_ == CacheMode::Record && !inner_) throw std::invalid_argument("CachedSearchTool: record mode needs a backend");
    }

    SearchResult lookup(std::string_view query) override {
        if (auto hit = cache_->find(query)) return {hit->answer, hit->source};
        if (mode_ == CacheMode::Replay) {
            if (miss_ == MissPolicy::Error) throw SearchError("cache miss in replay mode: '" + std::string(query) + "'");
            return {};
        }
        const auto t0 = std::chrono::steady_clock::now();
        SearchResult result = inner_->lookup(query);
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        CacheRecord record{result.answer, result.source, ms};
        cache_->put(query, record);
        if (!append_path_.empty()) {
            std::lock_guard lock(append_mutex_);
            std::ofstream out(append_path_, std::ios::app | std::ios::binary);
            out << SearchFixtureCache::record_line(normalize_query(query), record) << '\n';
        }
        return result;
    }

  private:
    std::shared_ptr<SearchFixtureCache> cache_;
    std::shared_ptr<ApiSearchTool> inner_;
    CacheMode mode_;
    MissPolicy miss_;
    std::string append_path_;
    std::mutex append_mutex_;
};

// ---------------------------------------------------------------------------
// Online in-site search

/// Which strings in a page count as API mentions.
struct ApiVocabulary {
    /// ECMAScript patterns; each full match is one mention.
    std::vector<std::string> patterns = {
        R"(\b(?:np|numpy|pd|pandas|plt|matplotlib|torch|torchdata)(?:\.[A-Za-z_][A-Za-z0-9_]*)+)"};
    /// Exact names (e.g. loaded from a doc corpus), matched on identifier boundaries.
    std::vector<std::string> allowlist;
};

/// Mention counts of vocabulary APIs in `text`. Allowlist hits inside a
/// pattern match are not counted twice.
inline std::map<std::string, std::size_t> extract_api_mentions(std::string_view text, const ApiVocabulary& vocab) {
    std::map<std::string, std::size_t> counts;
    std::vector<std::pair<std::size_t, std::size_t>> covered;
    const std::string s(text);
    for (const auto& pattern : vocab.patterns) {
        const std::regex re(pattern);
        for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
            std::string name = it->str();
            while (!name.empty() && name.back() == '.') name.pop_back();
            if (name.empty()) continue;
            ++counts[name];
            const auto b = static_cast<std::size_t>(it->position());
            covered.emplace_back(b, b + static_cast<std::size_t>(it->length()));
        }
    }
    auto is_ident = [](char c) { return detail::is_ascii_alnum(c) || c == '_' || c == '.'; };
    auto inside = [&](std::size_t b, std::size_t e) {
        return std::any_of(covered.begin(), covered.end(), [&](const auto& r) { return b < r.second && r.first < e; });
    };
    for (const auto& name : vocab.allowlist) {
        if (name.empty()) continue;
        for (std::size_t pos = s.find(name); pos != std::string::npos; pos = s.find(name, pos + 1)) {
            const std::size_t end = pos + name.size();
            if (pos > 0 && is_ident(s[pos - 1])) continue;
            if (end < s.size() && (detail::is_ascii_alnum(s[end]) || s[end] == '_')) continue;
            if (inside(pos, end)) continue;
            ++counts[name];
        }
    }
    return counts;
}

/// Drops script/style blocks and tags, decodes the common entities.
inline std::string strip_html(std::string_view html) {
    std::string out;
    out.reserve(html.size());
    std::size_t i = 0;
    auto starts_ci = [&](std::size_t at, std::string_view word) {
        if (at + word.size() > html.size()) return false;
        for (std::size_t k = 0; k < word.size(); ++k)
            if (detail::lower(html[at + k]) != word[k]) return false;
        return true;
    };
    while (i < html.size()) {
        if (html[i] == '<') {
            for (std::string_view block : {"script", "style"}) {
                if (starts_ci(i + 1, block)) {
                    const std::string closing = "</" + std::string(block);
                    std::size_t j = i + 1;
                    while (j < html.size() && !starts_ci(j, closing)) ++j;
                    i = j;
                    break;
                }
            }
            const auto close = html.find('>', i);
            if (close == std::string_view::npos) break;
            out += ' ';
            i = close + 1;
            continue;
        }
        if (html[i] == '&') {
            static const std::pair<std::string_view, char> entities[] = {
                {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}, {"&#39;", '\''}, {"&#x27;", '\''}, {"&nbsp;", ' '}};
            bool matched = false;
            for (const auto& [entity, ch] : entities) {
                if (html.substr(i).starts_with(entity)) {
                    out += ch;
                    i += entity.size();
                    matched = true;
                    break;
                }
            }
            if (matched) continue;
        }
        out += html[i++];
    }
    return out;
}

/// Result URLs from a DuckDuckGo HTML results page, in rank order. Redirect
/// links (…/l/?uddg=<encoded>) are unwrapped.
inline std::vector<std::string> parse_result_links(std::string_view html) {
    std::vector<std::string> links;
    const std::string s(html);
    static const std::regex anchor(R"re(<a[^>]*class="[^"]*result__a[^"]*"[^>]*href="([^"]+)")re", std::regex::icase);
    static const std::regex anchor_rev(R"re(<a[^>]*href="([^"]+)"[^>]*class="[^"]*result__a[^"]*")re", std::regex::icase);
    std::vector<std::pair<long, std::string>> found;
    for (const auto* re : {&anchor, &anchor_rev})
        for (auto it = std::sregex_iterator(s.begin(), s.end(), *re); it != std::sregex_iterator(); ++it)
            found.emplace_back(it->position(), (*it)[1].str());
    std::sort(found.begin(), found.end());
    for (auto& [pos, href] : found) {
        std::string decoded = strip_html(href);  // &amp; inside attributes
        const auto u = decoded.find("uddg=");
        if (u != std::string::npos) {
            auto end = decoded.find('&', u);
            decoded = url_decode(decoded.substr(u + 5, end == std::string::npos ? std::string::npos : end - u - 5));
        }
        if (decoded.rfind("//", 0) == 0) decoded = "https:" + decoded;
        if (std::find(links.begin(), links.end(), decoded) == links.end()) links.push_back(std::move(decoded));
    }
    return links;
}

/// Picks the API with the highest rank-weighted mention count; weight of the
/// page at 0-based rank r is 1/(r+1). Ties break lexicographically.
inline std::string rank_api_candidates(const std::vector<std::map<std::string, std::size_t>>& page_mentions) {
    std::map<std::string, double> score;
    for (std::size_t r = 0; r < page_mentions.size(); ++r)
        for (const auto& [api, count] : page_mentions[r]) score[api] += static_cast<double>(count) / static_cast<double>(r + 1);
    std::string best;
    double best_score = 0.0;
    for (const auto& [api, s] : score) {  // std::map iterates in lexicographic order
        if (s > best_score) {
            best = api;
            best_score = s;
        }
    }
    return best;
}

struct OnlineSearchConfig {
    std::vector<std::string> sites = {"datagy.io", "numpy.org", "pandas.pydata.org", "pytorch.org"};
    std::string endpoint = "https://html.duckduckgo.com/html/?q=";
    std::size_t pages_per_site = 2;
    std::chrono::milliseconds timeout{600};
    ApiVocabulary vocab;
};

struct OnlineLookup {
    SearchResult result;
    std::vector<std::string> diagnostics;
    std::size_t pages_fetched = 0;
};

/// In-site web search: query each site, fetch the top result pages, extract
/// vocabulary API mentions, answer with the best-ranked mention. Network
/// failures and the overall deadline yield an empty answer plus diagnostics.
class OnlineSearchTool final : public ApiSearchTool {
  public:
    OnlineSearchTool(std::shared_ptr<HttpTransport> transport, OnlineSearchConfig config)
        : transport_(std::move(transport)), config_(std::move(config)) {
        if (!transport_) throw std::invalid_argument("OnlineSearchTool: null transport");
        if (config_.sites.empty()) throw std::invalid_argument("OnlineSearchTool: no sites configured");
    }

    std::function<void(const std::string&)> on_diagnostic;

    SearchResult lookup(std::string_view query) override {
        auto r = lookup_detailed(query);
        if (on_diagnostic)
            for (const auto& d : r.diagnostics) on_diagnostic(d);
        return r.result;
    }

    OnlineLookup lookup_detailed(std::string_view query) {
        OnlineLookup out;
        const auto deadline = std::chrono::steady_clock::now() + config_.timeout;
        auto remaining = [&] {
            return std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        };

        std::vector<std::map<std::string, std::size_t>> mentions;
        std::vector<std::string> urls;
        for (const auto& site : config_.sites) {
            if (remaining().count() <= 0) {
                out.diagnostics.push_back("deadline reached before searching " + site);
                break;
            }
            const std::string url = config_.endpoint + url_encode("site:" + site + " " + std::string(query));
            const auto res = request(site, url, remaining());
            if (!res.ok()) {
                out.diagnostics.push_back("search failed for " + site + ": " + describe(res));
                continue;
            }
            std::size_t taken = 0;
            for (const auto& link : parse_result_links(res.body)) {
                if (taken == config_.pages_per_site) break;
                const auto host = url_host(link);
                if (!(host == site || (host.size() > site.size() && host.ends_with("." + site)))) continue;
                ++taken;
                if (remaining().count() <= 0) {
                    out.diagnostics.push_back("deadline reached before fetching " + link);
                    break;
                }
                const auto page = request(site, link, remaining());
                if (!page.ok()) {
                    out.diagnostics.push_back("fetch failed for " + link + ": " + describe(page));
                    continue;
                }
                ++out.pages_fetched;
                mentions.push_back(extract_api_mentions(strip_html(page.body), config_.vocab));
                urls.push_back(link);
            }
        }
        out.result.answer = rank_api_candidates(mentions);
        if (!out.result.answer.empty()) {
            for (std::size_t i = 0; i < mentions.size(); ++i)
                if (mentions[i].count(out.result.answer)) {
                    out.result.source = urls[i];
                    break;
                }
        } else if (out.diagnostics.empty()) {
            out.diagnostics.push_back("no vocabulary API mentioned in " + std::to_string(out.pages_fetched) + " page(s)");
        }
        return out;
    }

    const OnlineSearchConfig& config() const { return config_; }

  private:
    static std::string describe(const HttpResponse& r) {
        return r.status == 0 ? (r.error.empty() ? "no response" : r.error) : "HTTP " + std::to_string(r.status);
    }

    HttpResponse request(const std::string& site, const std::string& url, std::chrono::milliseconds timeout) {
        std::mutex* gate = nullptr;
        {
            std::lock_guard lock(gates_mutex_);
            auto& slot = site_gates_[site];
            if (!slot) slot = std::make_unique<std::mutex>();
            gate = slot.get();
        }
        std::lock_guard one_in_flight(*gate);
        return transport_->get(url, timeout);
    }

    std::shared_ptr<HttpTransport> transport_;
    OnlineSearchConfig config_;
    std::mutex gates_mutex_;
    std::unordered_map<std::string, std::unique_ptr<std::mutex>> site_gates_;
};

/// Convenience wrapper matching the functional form: one-shot online search.
inline std::string online_search(const std::vector<std::string>& sites, std::string_view query, const ApiVocabulary& vocab,
                                 std::chrono::milliseconds timeout, std::shared_ptr<HttpTransport> transport,
                                 SearchFixtureCache* cache = nullptr) {
    if (cache)
        if (auto hit = cache->find(query)) return hit->answer;
    OnlineSearchConfig cfg;
    cfg.sites = sites;
    cfg.vocab = vocab;
    cfg.timeout = timeout;
    OnlineSearchTool tool(std::move(transport), std::move(cfg));
    const auto t0 = std::chrono::steady_clock::now();
    auto r = tool.lookup(query);
    if (cache)
        cache->put(query, {r.answer, r.source,
                           std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count()});
    return r.answer;
}

}  // namespace toolcoder
