#pragma once

// Building tool-augmented training data: pick base functions, have an
// annotator model insert API-search calls, keep only samples that pass the
// filter rules, and summarize the result.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "grammar.hpp"
#include "http.hpp"
#include "text.hpp"

namespace toolcoder {

struct CodeUnit {
    std::string id;
    std::string code;
};

/// Corpus JSONL: {id, code} per line.
inline std::vector<CodeUnit> load_code_units(const std::string& path) {
    std::vector<CodeUnit> units;
    for_each_line(path, [&](const std::string& line, std::size_t number) {
        try {
            const auto j = nlohmann::json::parse(line);
            const auto& id = j.at("id");
            units.push_back({id.is_string() ? id.get<std::string>() : id.dump(), j.at("code").get<std::string>()});
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(number) + ": " + e.what());
        }
    });
    return units;
}

// ---------------------------------------------------------------------------
// Base sample selection

struct Selection {
    std::vector<CodeUnit> units;  // in corpus order
    std::vector<std::string> diagnostics;
};

/// Uniform sample without replacement among units whose whitespace word count
/// lies in [min_words, max_words]. Deterministic per seed.
inline Selection select_base_samples(const std::vector<CodeUnit>& corpus, std::size_t min_words, std::size_t max_words,
                                     std::size_t sample_n, std::uint64_t seed) {
    if (min_words >= max_words) throw std::invalid_argument("select_base_samples: min_len must be < max_len");
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto wc = word_count(corpus[i].code);
        if (wc >= min_words && wc <= max_words) eligible.push_back(i);
    }
    Selection out;
    if (sample_n >= eligible.size()) {
        if (sample_n > eligible.size())
            out.diagnostics.push_back("requested " + std::to_string(sample_n) + " samples but only " +
                                      std::to_string(eligible.size()) + " are eligible; returning all");
        sample_n = eligible.size();
    }
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < sample_n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, eligible.size() - 1);
        std::swap(eligible[i], eligible[pick(rng)]);
    }
    eligible.resize(sample_n);
    std::sort(eligible.begin(), eligible.end());
    for (auto i : eligible) out.units.push_back(corpus[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Filtering

inline const std::vector<std::string>& default_public_prefixes() {
    static const std::vector<std::string> prefixes = {"np.", "numpy.", "pd.", "pandas.", "plt.", "matplotlib."};
    return prefixes;
}

inline const std::map<std::string, std::vector<std::string>>& default_library_prefixes() {
    static const std::map<std::string, std::vector<std::string>> libs = {
        {"numpy", {"np.", "numpy."}},
        {"pandas", {"pd.", "pandas."}},
        {"matplotlib", {"plt.", "matplotlib."}},
        {"torchdata", {"torchdata."}},
    };
    return libs;
}

inline constexpr std::size_t kMaxCallsPerSample = 5;  // accepted samples have fewer
inline constexpr std::size_t kFollowWindow = 200;

struct Verdict {
    bool accepted = false;
    std::string rule_id;  // R1..R5 or annotator_error when rejected

    static Verdict accept() { return {true, {}}; }
    static Verdict reject(std::string rule) { return {false, std::move(rule)}; }
    friend bool operator==(const Verdict&, const Verdict&) = default;
};

struct AnnotatedSample {
    std::string id;
    std::string original_code;
    std::string annotated_code;
    std::vector<ToolCall> calls;
    Verdict verdict;
};

inline bool has_prefix(std::string_view s, const std::vector<std::string>& prefixes) {
    return std::any_of(prefixes.begin(), prefixes.end(), [&](const std::string& p) { return s.starts_with(p); });
}

/// Applies the rules in order; the first failing rule is the verdict.
///   R1 no nested calls
///   R2 fewer than 5 calls
///   R3 some answer carries a public-library prefix
///   R4 removing the calls restores the original byte-exactly
///   R5 every answer occurs within 200 characters after its call (later calls removed)
inline AnnotatedSample filter_and_clean(std::string_view original, std::string_view annotated,
                                        const std::vector<std::string>& public_prefixes = default_public_prefixes(),
                                        const ToolCallMarkers& markers = {}) {
    AnnotatedSample s;
    s.original_code = std::string(original);
    s.annotated_code = std::string(annotated);
    auto parsed = parse_tool_calls(annotated, markers);
    s.calls = std::move(parsed.calls);

    if (parsed.has(DiagnosticKind::Nested)) {
        s.verdict = Verdict::reject("R1");
    } else if (s.calls.size() >= kMaxCallsPerSample) {
        s.verdict = Verdict::reject("R2");
    } else if (std::none_of(s.calls.begin(), s.calls.end(),
                            [&](const ToolCall& c) { return has_prefix(c.answer, public_prefixes); })) {
        s.verdict = Verdict::reject("R3");
    } else if (strip_tool_calls(annotated, markers) != original) {
        s.verdict = Verdict::reject("R4");
    } else {
        const bool followed = std::all_of(s.calls.begin(), s.calls.end(), [&](const ToolCall& c) {
            if (c.answer.empty()) return false;
            const std::string after = strip_tool_calls(annotated.substr(c.span.end), markers);
            return std::string_view(after).substr(0, kFollowWindow).find(c.answer) != std::string_view::npos;
        });
        s.verdict = followed ? Verdict::accept() : Verdict::reject("R5");
    }
    return s;
}

// ---------------------------------------------------------------------------
// Prompting

struct FewShotPair {
    std::string input_code;
    std::string annotated_code;
};

struct AnnotationPrompt {
    std::string system_instruction;
    std::vector<FewShotPair> few_shot_pairs;
    std::string target_code;

    /// Exactly three pairs, each accepted by the filter, each from a different library.
    void validate(const std::map<std::string, std::vector<std::string>>& libraries = default_library_prefixes(),
                  const ToolCallMarkers& markers = {}) const {
        if (few_shot_pairs.size() != 3) throw std::invalid_argument("annotation prompt: exactly 3 few-shot pairs required");
        std::vector<std::string> all_prefixes;
        for (const auto& [lib, prefixes] : libraries) all_prefixes.insert(all_prefixes.end(), prefixes.begin(), prefixes.end());
        std::set<std::string> used;
        for (std::size_t i = 0; i < few_shot_pairs.size(); ++i) {
            const auto& pair = few_shot_pairs[i];
            const auto s = filter_and_clean(pair.input_code, pair.annotated_code, all_prefixes, markers);
            if (!s.verdict.accepted)
                throw std::invalid_argument("annotation prompt: few-shot pair " + std::to_string(i + 1) + " fails " +
                                            s.verdict.rule_id);
            std::string library;
            for (const auto& call : s.calls)
                for (const auto& [lib, prefixes] : libraries)
                    if (library.empty() && has_prefix(call.answer, prefixes)) library = lib;
            if (!used.insert(library).second)
                throw std::invalid_argument("annotation prompt: few-shot pairs must cover three distinct libraries");
        }
    }

    /// Chat messages: alternating user/assistant demonstrations, then the target.
    nlohmann::json messages() const {
        auto msgs = nlohmann::json::array();
        for (const auto& p : few_shot_pairs) {
            msgs.push_back({{"role", "user"}, {"content", p.input_code}});
            msgs.push_back({{"role", "assistant"}, {"content", p.annotated_code}});
        }
        msgs.push_back({{"role", "user"}, {"content", target_code}});
        return msgs;
    }
};

inline AnnotationPrompt default_annotation_prompt(std::string target_code = {}) {
    AnnotationPrompt p;
    p.system_instruction =
        "You are a data annotator. Insert API search calls into the given Python code. A call has the form "
        "<API>APISearch(query)->answer</API>, where query is a short natural-language description of the "
        "functionality needed and answer is the API that provides it. Place each call directly before the code "
        "that uses the answered API. Do not change, add, or remove any other character of the code. Use at most "
        "four calls and prefer APIs from public libraries.";
    p.few_shot_pairs = {
        {"import numpy as np\n"
         "def squeeze_dims(arr):\n"
         "    return np.squeeze(arr)\n",
         "import numpy as np\n"
         "def squeeze_dims(arr):\n"
         "    return <API>APISearch(remove single-dimensional entries)->np.squeeze</API>np.squeeze(arr)\n"},
        {"import pandas as pd\n"
         "def load(path):\n"
         "    df = pd.read_csv(path)\n"
         "    return df.dropna()\n",
         "import pandas as pd\n"
         "def load(path):\n"
         "    df = <API>APISearch(read a comma-separated file into a dataframe)->pd.read_csv</API>pd.read_csv(path)\n"
         "    return df.dropna()\n"},
        {"import matplotlib.pyplot as plt\n"
         "def draw(xs, ys):\n"
         "    plt.plot(xs, ys)\n"
         "    plt.show()\n",
         "import matplotlib.pyplot as plt\n"
         "def draw(xs, ys):\n"
         "    <API>APISearch(plot y versus x as lines)->plt.plot</API>plt.plot(xs, ys)\n"
         "    <API>APISearch(display all open figures)->plt.show</API>plt.show()\n"},
    };
    p.target_code = std::move(target_code);
    return p;
}

class AnnotatorError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Returns the annotated code for one target, or throws AnnotatorError.
class AnnotatorClient {
  public:
    virtual ~AnnotatorClient() = default;
    virtual std::string complete(std::string_view sample_id, const AnnotationPrompt& prompt) = 0;
};

/// Plays recorded annotations: JSONL {id, text} or {id, error}. A record may
/// instead carry "code" to match on the target code.
class FixtureAnnotator final : public AnnotatorClient {
  public:
    static FixtureAnnotator load(const std::string& path) {
        FixtureAnnotator f;
        for_each_line(path, [&](const std::string& line, std::size_t number) {
            try {
                f.add(nlohmann::json::parse(line));
            } catch (const nlohmann::json::exception& e) {
                throw std::runtime_error(path + ":" + std::to_string(number) + ": " + e.what());
            }
        });
        return f;
    }

    void add(const nlohmann::json& record) {
        Record r;
        if (record.contains("text")) r.text = record["text"].get<std::string>();
        if (record.contains("error")) r.error = record["error"].get<std::string>();
        if (record.contains("id")) {
            const auto& id = record["id"];
            by_id_[id.is_string() ? id.get<std::string>() : id.dump()] = r;
        }
        if (record.contains("code")) by_code_[record["code"].get<std::string>()] = r;
    }

    std::string complete(std::string_view sample_id, const AnnotationPrompt& prompt) override {
        const Record* r = nullptr;
        if (auto it = by_id_.find(std::string(sample_id)); it != by_id_.end()) r = &it->second;
        else if (auto it2 = by_code_.find(prompt.target_code); it2 != by_code_.end()) r = &it2->second;
        if (!r) throw AnnotatorError("no recorded annotation for '" + std::string(sample_id) + "'");
        if (!r->error.empty()) throw AnnotatorError(r->error);
        return r->text;
    }

  private:
    struct Record {
        std::string text;
        std::string error;
    };
    std::map<std::string, Record> by_id_;
    std::map<std::string, Record> by_code_;
};

/// Chat-completion style service: POST {system, messages} -> {text}.
class HttpAnnotator final : public AnnotatorClient {
  public:
    HttpAnnotator(std::shared_ptr<HttpTransport> transport, std::string url,
                  std::chrono::milliseconds timeout = std::chrono::milliseconds(60000))
        : transport_(std::move(transport)), url_(std::move(url)), timeout_(timeout) {
        if (!transport_) throw std::invalid_argument("HttpAnnotator: null transport");
    }

    std::string complete(std::string_view, const AnnotationPrompt& prompt) override {
        const nlohmann::json body = {{"system", prompt.system_instruction}, {"messages", prompt.messages()}};
        const auto res = transport_->post(url_, body.dump(), "application/json", timeout_);
        if (!res.ok())
            throw AnnotatorError(res.status == 0 ? "annotator unreachable: " + res.error
                                                 : "annotator returned HTTP " + std::to_string(res.status));
        try {
            return nlohmann::json::parse(res.body).at("text").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw AnnotatorError(std::string("malformed annotator response: ") + e.what());
        }
    }

  private:
    std::shared_ptr<HttpTransport> transport_;
    std::string url_;
    std::chrono::milliseconds timeout_;
};

/// The annotator's output, verbatim.
inline std::string annotate(const CodeUnit& sample, AnnotationPrompt prompt, AnnotatorClient& annotator) {
    prompt.target_code = sample.code;
    return annotator.complete(sample.id, prompt);
}

/// annotate + filter_and_clean; annotator failures become Rejected(annotator_error).
inline AnnotatedSample annotate_sample(const CodeUnit& sample, const AnnotationPrompt& prompt, AnnotatorClient& annotator,
                                       const std::vector<std::string>& public_prefixes = default_public_prefixes(),
                                       const ToolCallMarkers& markers = {}) {
    AnnotatedSample out;
    try {
        out = filter_and_clean(sample.code, annotate(sample, prompt, annotator), public_prefixes, markers);
    } catch (const AnnotatorError&) {
        out.original_code = sample.code;
        out.verdict = Verdict::reject("annotator_error");
    }
    out.id = sample.id;
    return out;
}

// ---------------------------------------------------------------------------
// Dataset I/O

inline nlohmann::json to_json(const AnnotatedSample& s) {
    nlohmann::json j = {{"id", s.id},
                        {"original_code", s.original_code},
                        {"annotated_code", s.annotated_code},
                        {"verdict", s.verdict.accepted ? "accepted" : "rejected"}};
    if (!s.verdict.accepted) j["rule_id"] = s.verdict.rule_id;
    return j;
}

/// Dataset JSONL {id, original_code, annotated_code, verdict?, rule_id?}.
/// When `refilter` is set (or no verdict is stored) the rules are re-applied.
inline std::vector<AnnotatedSample> load_dataset(const std::string& path, bool refilter,
                                                 const std::vector<std::string>& public_prefixes = default_public_prefixes(),
                                                 const ToolCallMarkers& markers = {}) {
    std::vector<AnnotatedSample> out;
    for_each_line(path, [&](const std::string& line, std::size_t number) {
        try {
            const auto j = nlohmann::json::parse(line);
            const auto original = j.at("original_code").get<std::string>();
            const auto annotated = j.value("annotated_code", std::string());
            AnnotatedSample s = filter_and_clean(original, annotated, public_prefixes, markers);
            if (!refilter && j.contains("verdict")) {
                const bool accepted = j["verdict"].get<std::string>() == "accepted";
                s.verdict = accepted ? Verdict::accept() : Verdict::reject(j.value("rule_id", "unknown"));
            }
            const auto& id = j.value("id", nlohmann::json(std::to_string(number)));
            s.id = id.is_string() ? id.get<std::string>() : id.dump();
            out.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(number) + ": " + e.what());
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Statistics

struct DatasetStats {
    std::size_t size = 0;  // accepted samples
    double avg_calls_per_sample = 0.0;
    double avg_distinct_apis_per_sample = 0.0;
    double avg_len_words_before = 0.0;
    double avg_len_words_after = 0.0;
    std::map<std::string, double> library_proportions;
    std::map<std::string, std::size_t> rejections_by_rule;
    std::vector<std::string> diagnostics;
};

/// Averages over accepted samples only. A library's proportion is the fraction
/// of accepted samples with at least one call answered from that library.
inline DatasetStats compute_stats(const std::vector<AnnotatedSample>& samples,
                                  const std::map<std::string, std::vector<std::string>>& library_prefixes =
                                      default_library_prefixes()) {
    DatasetStats st;
    std::size_t calls = 0;
    std::size_t distinct = 0;
    std::size_t words_before = 0;
    std::size_t words_after = 0;
    std::map<std::string, std::size_t> lib_hits;
    for (const auto& [lib, _] : library_prefixes) lib_hits[lib] = 0;
    for (const auto& s : samples) {
        if (!s.verdict.accepted) {
            ++st.rejections_by_rule[s.verdict.rule_id];
            continue;
        }
        ++st.size;
        calls += s.calls.size();
        std::set<std::string> apis;
        for (const auto& c : s.calls) apis.insert(c.answer);
        distinct += apis.size();
        words_before += word_count(s.original_code);
        words_after += word_count(s.annotated_code);
        for (const auto& [lib, prefixes] : library_prefixes)
            if (std::any_of(s.calls.begin(), s.calls.end(), [&](const ToolCall& c) { return has_prefix(c.answer, prefixes); }))
                ++lib_hits[lib];
    }
    for (const auto& [lib, hits] : lib_hits) st.library_proportions[lib] = 0.0;
    if (st.size == 0) {
        st.diagnostics.push_back("no accepted samples; statistics are zero");
        return st;
    }
    const double n = static_cast<double>(st.size);
    st.avg_calls_per_sample = static_cast<double>(calls) / n;
    st.avg_distinct_apis_per_sample = static_cast<double>(distinct) / n;
    st.avg_len_words_before = static_cast<double>(words_before) / n;
    st.avg_len_words_after = static_cast<double>(words_after) / n;
    for (const auto& [lib, hits] : lib_hits) st.library_proportions[lib] = static_cast<double>(hits) / n;
    return st;
}

inline nlohmann::json to_json(const DatasetStats& st) {
    return {{"size", st.size},
            {"avg_calls_per_sample", st.avg_calls_per_sample},
            {"avg_distinct_apis_per_sample", st.avg_distinct_apis_per_sample},
            {"avg_len_words_before", st.avg_len_words_before},
            {"avg_len_words_after", st.avg_len_words_after},
            {"library_proportions", st.library_proportions},
            {"rejections_by_rule", st.rejections_by_rule},
            {"diagnostics", st.diagnostics}};
}

}  // namespace toolcoder
