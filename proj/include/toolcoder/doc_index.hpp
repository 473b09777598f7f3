#pragma once

// BM25 retrieval over (api_name, comment) documentation pairs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "text.hpp"

namespace toolcoder {

struct DocEntry {
    std::string api_name;
    std::string signature;
    std::string comment;

    friend bool operator==(const DocEntry&, const DocEntry&) = default;
};

struct Posting {
    std::uint32_t entry_id;
    std::uint32_t term_frequency;

    friend bool operator==(const Posting&, const Posting&) = default;
};

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct ScoredEntry {
    std::uint32_t entry_id;
    double score;
};

/// Text that is tokenized and scored for an entry: name terms plus the docstring.
inline std::string scoring_text(const DocEntry& e) { return e.api_name + " " + e.comment; }

/// Immutable after construction; safe for concurrent searches.
class DocIndex {
  public:
    /// Throws std::invalid_argument on an empty corpus, a duplicate or empty
    /// api_name, or out-of-range parameters.
    static DocIndex build(std::vector<DocEntry> corpus, Bm25Params params = {}) {
        check_params(params);
        if (corpus.empty()) throw std::invalid_argument("doc index: empty corpus");
        std::unordered_set<std::string> seen;
        for (const auto& e : corpus) {
            if (e.api_name.empty()) throw std::invalid_argument("doc index: entry with empty api_name");
            if (!seen.insert(e.api_name).second)
                throw std::invalid_argument("doc index: duplicate api_name '" + e.api_name + "'");
        }

        DocIndex idx;
        idx.params_ = params;
        idx.entries_ = std::move(corpus);
        idx.doc_lengths_.reserve(idx.entries_.size());
        std::uint64_t total = 0;
        for (std::uint32_t id = 0; id < idx.entries_.size(); ++id) {
            const auto tokens = tokenize(scoring_text(idx.entries_[id]));
            std::map<std::string, std::uint32_t> tf;
            for (const auto& t : tokens) ++tf[t];
            for (const auto& [term, count] : tf) idx.postings_[term].push_back({id, count});
            idx.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
            total += tokens.size();
        }
        idx.avg_doc_len_ = static_cast<double>(total) / static_cast<double>(idx.entries_.size());
        return idx;
    }

    const std::vector<DocEntry>& entries() const { return entries_; }
    const std::vector<std::uint32_t>& doc_lengths() const { return doc_lengths_; }
    double avg_doc_len() const { return avg_doc_len_; }
    const Bm25Params& params() const { return params_; }
    std::size_t size() const { return entries_.size(); }

    const std::vector<Posting>* postings(const std::string& term) const {
        auto it = postings_.find(term);
        return it == postings_.end() ? nullptr : &it->second;
    }
    const std::unordered_map<std::string, std::vector<Posting>>& all_postings() const { return postings_; }

    double idf(std::size_t df) const {
        const double n = static_cast<double>(entries_.size());
        const double d = static_cast<double>(df);
        return std::log((n - d + 0.5) / (d + 0.5) + 1.0);
    }

    /// Ranked by descending score, ties by ascending entry id. Each distinct
    /// query term contributes once. Entries matching no term are omitted.
    std::vector<ScoredEntry> search(std::string_view query, std::size_t top_k) const {
        std::vector<std::string> terms = tokenize(query);
        std::sort(terms.begin(), terms.end());
        terms.erase(std::unique(terms.begin(), terms.end()), terms.end());

        std::unordered_map<std::uint32_t, double> acc;
        const double k1 = params_.k1;
        const double b = params_.b;
        for (const auto& term : terms) {
            const auto* list = postings(term);
            if (!list) continue;
            const double w = idf(list->size());
            for (const auto& p : *list) {
                const double tf = p.term_frequency;
                const double norm = 1.0 - b + b * static_cast<double>(doc_lengths_[p.entry_id]) / avg_doc_len_;
                acc[p.entry_id] += w * (tf * (k1 + 1.0)) / (tf + k1 * norm);
            }
        }
        std::vector<ScoredEntry> ranked;
        ranked.reserve(acc.size());
        for (const auto& [id, score] : acc) ranked.push_back({id, score});
        auto better = [](const ScoredEntry& a, const ScoredEntry& b) {
            return a.score != b.score ? a.score > b.score : a.entry_id < b.entry_id;
        };
        if (top_k < ranked.size()) {
            std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(top_k), ranked.end(), better);
            ranked.resize(top_k);
        } else {
            std::sort(ranked.begin(), ranked.end(), better);
        }
        return ranked;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["format"] = "toolcoder-docindex/1";
        j["k1"] = params_.k1;
        j["b"] = params_.b;
        j["avg_doc_len"] = avg_doc_len_;
        j["doc_lengths"] = doc_lengths_;
        auto& es = j["entries"] = nlohmann::json::array();
        for (const auto& e : entries_) es.push_back({{"name", e.api_name}, {"signature", e.signature}, {"text", e.comment}});
        // Sorted so that two builds of the same corpus serialize identically.
        std::map<std::string, const std::vector<Posting>*> ordered;
        for (const auto& [term, list] : postings_) ordered.emplace(term, &list);
        auto& ps = j["postings"] = nlohmann::json::object();
        for (const auto& [term, list] : ordered) {
            auto& arr = ps[term] = nlohmann::json::array();
            for (const auto& p : *list) arr.push_back({p.entry_id, p.term_frequency});
        }
        return j;
    }

    /// Throws std::runtime_error when the stored index is inconsistent.
    static DocIndex from_json(const nlohmann::json& j) {
        if (j.value("format", "") != "toolcoder-docindex/1") throw std::runtime_error("doc index: unknown format");
        DocIndex idx;
        idx.params_ = {j.at("k1").get<double>(), j.at("b").get<double>()};
        check_params(idx.params_);
        for (const auto& e : j.at("entries"))
            idx.entries_.push_back({e.at("name").get<std::string>(), e.value("signature", ""), e.value("text", "")});
        idx.doc_lengths_ = j.at("doc_lengths").get<std::vector<std::uint32_t>>();
        idx.avg_doc_len_ = j.at("avg_doc_len").get<double>();
        if (idx.entries_.empty() || idx.doc_lengths_.size() != idx.entries_.size())
            throw std::runtime_error("doc index: entries and doc_lengths disagree");
        for (const auto& [term, arr] : j.at("postings").items()) {
            auto& list = idx.postings_[term];
            for (const auto& p : arr) {
                Posting posting{p.at(0).get<std::uint32_t>(), p.at(1).get<std::uint32_t>()};
                if (posting.entry_id >= idx.entries_.size()) throw std::runtime_error("doc index: posting out of range");
                list.push_back(posting);
            }
        }
        return idx;
    }

  private:
    static void check_params(const Bm25Params& p) {
        if (!(p.k1 > 0.0)) throw std::invalid_argument("doc index: k1 must be positive");
        if (!(p.b >= 0.0 && p.b <= 1.0)) throw std::invalid_argument("doc index: b must lie in [0, 1]");
    }

    std::vector<DocEntry> entries_;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    std::vector<std::uint32_t> doc_lengths_;
    double avg_doc_len_ = 0.0;
    Bm25Params params_;
};

inline DocIndex build_doc_index(std::vector<DocEntry> corpus, double k1 = 1.2, double b = 0.75) {
    return DocIndex::build(std::move(corpus), {k1, b});
}

struct RankedApi {
    DocEntry entry;
    double score;
};

inline std::vector<RankedApi> bm25_search(const DocIndex& index, std::string_view query, std::size_t top_k) {
    std::vector<RankedApi> out;
    for (const auto& s : index.search(query, top_k)) out.push_back({index.entries()[s.entry_id], s.score});
    return out;
}

/// Doc corpus JSONL: one {name, signature, text} object per line.
/// Throws std::runtime_error naming the offending line.
inline std::vector<DocEntry> load_doc_corpus(const std::string& path) {
    std::vector<DocEntry> corpus;
    for_each_line(path, [&](const std::string& line, std::size_t number) {
        try {
            const auto j = nlohmann::json::parse(line);
            corpus.push_back({j.at("name").get<std::string>(), j.value("signature", ""), j.value("text", "")});
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(number) + ": " + e.what());
        }
    });
    return corpus;
}

inline void save_doc_index(const DocIndex& index, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << index.to_json().dump() << '\n';
}

inline DocIndex load_doc_index(const std::string& path) {
    return DocIndex::from_json(nlohmann::json::parse(read_file(path)));
}

}  // namespace toolcoder
