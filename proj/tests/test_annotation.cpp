#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <toolcoder/annotation.hpp>

using namespace toolcoder;

namespace {

struct LabeledCase {
    std::string id, original, annotated, expected;
};

std::vector<LabeledCase> labeled_cases() {
    std::vector<LabeledCase> out;
    for_each_line(TOOLCODER_FIXTURE_DIR "/filter_cases.jsonl", [&](const std::string& line, std::size_t) {
        const auto j = nlohmann::json::parse(line);
        out.push_back({j["id"], j["original_code"], j["annotated_code"], j["expected"]});
    });
    return out;
}

}  // namespace

TEST(Filter, HandLabeledFixture) {
    const auto cases = labeled_cases();
    ASSERT_EQ(cases.size(), 20u);
    for (const auto& c : cases) {
        const auto s = filter_and_clean(c.original, c.annotated);
        const std::string got = s.verdict.accepted ? "accepted" : s.verdict.rule_id;
        EXPECT_EQ(got, c.expected) << c.id;
    }
}

TEST(Filter, SingleCallFollowedByUse) {
    const auto s = filter_and_clean("y = np.sum(a)", "y = <API>APISearch(sum)->np.sum</API>np.sum(a)");
    EXPECT_TRUE(s.verdict.accepted);
    ASSERT_EQ(s.calls.size(), 1u);
}

TEST(Filter, CallCountBoundary) {
    std::string original, annotated;
    for (int i = 0; i < 4; ++i) {
        original += "np.f(x)\n";
        annotated += "<API>APISearch(q)->np.f</API>np.f(x)\n";
    }
    EXPECT_TRUE(filter_and_clean(original, annotated).verdict.accepted);
    original += "np.f(x)\n";
    annotated += "<API>APISearch(q)->np.f</API>np.f(x)\n";
    EXPECT_EQ(filter_and_clean(original, annotated).verdict, Verdict::reject("R2"));
}

TEST(Filter, FollowWindowBoundary) {
    // answer starts at offset 194 and ends at 200: inside; one more char pushes it out
    const std::string pad(194, 'x');
    const std::string inside = "<API>APISearch(q)->np.sum</API>" + pad + "np.sum";
    EXPECT_TRUE(filter_and_clean(pad + "np.sum", inside).verdict.accepted);
    const std::string outside = "<API>APISearch(q)->np.sum</API>" + pad + "xnp.sum";
    EXPECT_EQ(filter_and_clean(pad + "xnp.sum", outside).verdict, Verdict::reject("R5"));
}

TEST(Filter, CustomPublicPrefixes) {
    const auto s = filter_and_clean("mylib.f()", "<API>APISearch(q)->mylib.f</API>mylib.f()", {"mylib."});
    EXPECT_TRUE(s.verdict.accepted);
}

TEST(Stats, HandCountsOnFixture) {
    std::vector<AnnotatedSample> samples;
    for (const auto& c : labeled_cases()) samples.push_back(filter_and_clean(c.original, c.annotated));
    const auto st = compute_stats(samples);
    EXPECT_EQ(st.size, 7u);
    EXPECT_DOUBLE_EQ(st.avg_calls_per_sample, 13.0 / 7.0);
    EXPECT_DOUBLE_EQ(st.avg_distinct_apis_per_sample, 13.0 / 7.0);
    EXPECT_DOUBLE_EQ(st.avg_len_words_before, 72.0 / 7.0);
    EXPECT_DOUBLE_EQ(st.avg_len_words_after, 90.0 / 7.0);
    EXPECT_DOUBLE_EQ(st.library_proportions.at("numpy"), 6.0 / 7.0);
    EXPECT_DOUBLE_EQ(st.library_proportions.at("pandas"), 1.0 / 7.0);
    EXPECT_DOUBLE_EQ(st.library_proportions.at("matplotlib"), 1.0 / 7.0);
    EXPECT_DOUBLE_EQ(st.library_proportions.at("torchdata"), 0.0);
    EXPECT_EQ(st.rejections_by_rule.at("R1"), 2u);
    EXPECT_EQ(st.rejections_by_rule.at("R2"), 2u);
    EXPECT_EQ(st.rejections_by_rule.at("R3"), 3u);
    EXPECT_EQ(st.rejections_by_rule.at("R4"), 3u);
    EXPECT_EQ(st.rejections_by_rule.at("R5"), 3u);
    EXPECT_GE(st.avg_len_words_after, st.avg_len_words_before);
}

TEST(Stats, AverageOfThreeAndFourCalls) {
    std::vector<AnnotatedSample> samples(2);
    samples[0].verdict = samples[1].verdict = Verdict::accept();
    samples[0].calls.resize(3);
    samples[1].calls.resize(4);
    EXPECT_DOUBLE_EQ(compute_stats(samples).avg_calls_per_sample, 3.5);
}

TEST(Stats, EmptyAcceptedSet) {
    std::vector<AnnotatedSample> samples(1);
    samples[0].verdict = Verdict::reject("R3");
    const auto st = compute_stats(samples);
    EXPECT_EQ(st.size, 0u);
    EXPECT_EQ(st.avg_calls_per_sample, 0.0);
    EXPECT_EQ(st.diagnostics.size(), 1u);
    EXPECT_EQ(st.rejections_by_rule.at("R3"), 1u);
}

TEST(Select, WordRangeAndDeterminism) {
    std::vector<CodeUnit> corpus;
    for (int i = 0; i < 50; ++i) {
        std::string code;
        for (int w = 0; w < i; ++w) code += "w ";
        corpus.push_back({std::to_string(i), code});
    }
    const auto a = select_base_samples(corpus, 10, 20, 5, 3);
    const auto b = select_base_samples(corpus, 10, 20, 5, 3);
    ASSERT_EQ(a.units.size(), 5u);
    std::set<std::string> ids;
    int prev = -1;
    for (std::size_t i = 0; i < a.units.size(); ++i) {
        EXPECT_EQ(a.units[i].id, b.units[i].id);
        const int n = std::stoi(a.units[i].id);
        EXPECT_GE(n, 10);
        EXPECT_LE(n, 20);
        EXPECT_GT(n, prev);  // corpus order kept
        prev = n;
        ids.insert(a.units[i].id);
    }
    EXPECT_EQ(ids.size(), 5u);
    EXPECT_TRUE(a.diagnostics.empty());

    const auto all = select_base_samples(corpus, 10, 20, 100, 3);
    EXPECT_EQ(all.units.size(), 11u);
    EXPECT_EQ(all.diagnostics.size(), 1u);
    EXPECT_THROW(select_base_samples(corpus, 20, 20, 1, 0), std::invalid_argument);
}

TEST(Select, UniformOverEligible) {
    std::vector<CodeUnit> corpus;
    for (int i = 0; i < 10; ++i) corpus.push_back({std::to_string(i), "a b c"});
    std::vector<int> hits(10, 0);
    for (std::uint64_t seed = 0; seed < 2000; ++seed)
        for (const auto& u : select_base_samples(corpus, 1, 5, 3, seed).units) ++hits[std::stoi(u.id)];
    // each unit expected 600 times; allow five standard deviations
    for (int h : hits) EXPECT_NEAR(h, 600, 5 * std::sqrt(600 * 0.7));
}

TEST(Prompt, DefaultIsValid) {
    const auto p = default_annotation_prompt("def f(): pass\n");
    EXPECT_NO_THROW(p.validate());
    const auto msgs = p.messages();
    ASSERT_EQ(msgs.size(), 7u);
    EXPECT_EQ(msgs[0]["role"], "user");
    EXPECT_EQ(msgs[1]["role"], "assistant");
    EXPECT_EQ(msgs[6]["content"], "def f(): pass\n");
}

TEST(Prompt, RejectsBadPairs) {
    auto p = default_annotation_prompt();
    p.few_shot_pairs.pop_back();
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p = default_annotation_prompt();
    p.few_shot_pairs[2] = p.few_shot_pairs[0];
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p = default_annotation_prompt();
    p.few_shot_pairs[0].annotated_code += "extra";
    EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(Annotate, FixtureAnnotatorAndErrors) {
    auto annotator = FixtureAnnotator::load(TOOLCODER_DATA_DIR "/annotations.jsonl");
    const auto corpus = load_code_units(TOOLCODER_DATA_DIR "/base_corpus.jsonl");
    const auto prompt = default_annotation_prompt();
    std::vector<std::string> verdicts;
    for (const auto& u : corpus) {
        const auto s = annotate_sample(u, prompt, annotator);
        verdicts.push_back(s.verdict.accepted ? "accepted" : s.verdict.rule_id);
        EXPECT_EQ(s.id, u.id);
    }
    // b1 answers pd.DataFrame.head but the code calls df.head, b3 times out
    EXPECT_EQ(verdicts, (std::vector<std::string>{"accepted", "R5", "accepted", "annotator_error"}));
    CodeUnit missing{"nope", "x"};
    EXPECT_EQ(annotate_sample(missing, prompt, annotator).verdict.rule_id, "annotator_error");
}

namespace {

class EchoTransport : public HttpTransport {
  public:
    std::string last_body;
    HttpResponse reply{200, R"({"text": "ok"})", ""};
    HttpResponse get(const std::string&, std::chrono::milliseconds) override { return {500, "", ""}; }
    HttpResponse post(const std::string&, const std::string& body, const std::string&, std::chrono::milliseconds) override {
        last_body = body;
        return reply;
    }
};

}  // namespace

TEST(Annotate, HttpAnnotatorPayload) {
    auto t = std::make_shared<EchoTransport>();
    HttpAnnotator a(t, "http://annotator/complete");
    const auto text = annotate({"1", "x = 1\n"}, default_annotation_prompt(), a);
    EXPECT_EQ(text, "ok");
    const auto body = nlohmann::json::parse(t->last_body);
    EXPECT_EQ(body["messages"].size(), 7u);
    EXPECT_EQ(body["messages"][6]["content"], "x = 1\n");
    t->reply = {503, "", ""};
    EXPECT_THROW(annotate({"1", "x"}, default_annotation_prompt(), a), AnnotatorError);
}

TEST(Dataset, RoundTripThroughJsonl) {
    const auto path = std::filesystem::temp_directory_path() / "toolcoder_dataset.jsonl";
    {
        std::ofstream out(path);
        for (const auto& c : labeled_cases()) {
            auto s = filter_and_clean(c.original, c.annotated);
            s.id = c.id;
            out << to_json(s).dump() << '\n';
        }
    }
    const auto stored = load_dataset(path.string(), false);
    const auto recomputed = load_dataset(path.string(), true);
    std::filesystem::remove(path);
    ASSERT_EQ(stored.size(), 20u);
    for (std::size_t i = 0; i < stored.size(); ++i) EXPECT_EQ(stored[i].verdict, recomputed[i].verdict);
    EXPECT_EQ(stored[0].id, "f01");
}
