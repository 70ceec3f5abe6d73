#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <set>

#include "dacesr/fixtures.hpp"
#include "dacesr/imgproc.hpp"
#include "dacesr/tagging.hpp"

using namespace dacesr;
using namespace dacesr::tagging;

namespace {

TagSet make_set(std::initializer_list<const char*> toks) {
    TagSet s;
    for (const char* t : toks) s.insert(t);
    return s;
}

int count_prefix(const TagSet& s, const std::string& prefix) {
    int n = 0;
    for (const auto& t : s.tags)
        if (t.rfind(prefix, 0) == 0) ++n;
    return n;
}

}  // namespace

TEST_CASE("tag sets deduplicate and lower-case") {
    TagSet s;
    s.insert("Edge_3");
    s.insert("edge_3");
    s.insert("EDGE_3");
    CHECK(s.size() == 1);
    CHECK(s.contains("edge_3"));
}

TEST_CASE("jaccard basics") {
    auto a = make_set({"x", "y", "z"});
    auto b = make_set({"y", "z", "w"});
    CHECK(jaccard(a, a) == 1.0);
    CHECK(jaccard(a, b) == doctest::Approx(0.5));
    CHECK(jaccard(b, a) == doctest::Approx(0.5));
    CHECK(jaccard(a, make_set({"p", "q"})) == 0.0);
    CHECK(jaccard(TagSet{}, TagSet{}) == 1.0);
    CHECK(jaccard(a, TagSet{}) == 0.0);
}

TEST_CASE("jaccard is symmetric and bounded on random sets") {
    Rng rng(61);
    for (int trial = 0; trial < 50; ++trial) {
        TagSet a, b;
        for (int i = 0; i < 12; ++i) {
            if (rng.next_double() < 0.5) a.insert("t" + std::to_string(rng.uniform_int(0, 9)));
            if (rng.next_double() < 0.5) b.insert("t" + std::to_string(rng.uniform_int(0, 9)));
        }
        double ab = jaccard(a, b);
        CHECK(ab == jaccard(b, a));
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0);
        CHECK(jaccard(a, a) == 1.0);
    }
}

TEST_CASE("surrogate tagger is deterministic") {
    auto img = fixtures::make_fixture_corpus(62, 1, 64)[0];
    SurrogateTagger tagger;
    auto a = tagger.tag(img);
    auto b = tagger.tag(img);
    CHECK(a.tags == b.tags);
}

TEST_CASE("surrogate tagger on constant gray") {
    ImageTensor img(64, 64, 3, 0.5);
    SurrogateTagger tagger;
    auto tags = tagger.tag(img);
    CHECK(tags.contains("edge_0"));
    CHECK(count_prefix(tags, "lum_") == 1);
    CHECK(count_prefix(tags, "hue_") == 1);  // only the achromatic bin
    CHECK(tags.contains("hue_achroma"));
    CHECK(count_prefix(tags, "orient_") == 0);
}

TEST_CASE("surrogate tagger rejects bad inputs") {
    SurrogateTagger tagger;
    CHECK_THROWS(tagger.tag(ImageTensor(64, 64, 1, 0.5)));
    CHECK_THROWS(tagger.tag(ImageTensor(16, 64, 3, 0.5)));
}

TEST_CASE("heavy blur lowers the edge level and moves the tag set") {
    auto corpus = fixtures::make_fixture_corpus(63, 4, 128);
    SurrogateTagger tagger;
    double mean_sim = 0.0;
    for (const auto& img : corpus) {
        auto clean = tagger.tag(img);
        imgproc::DegradationSpec spec;
        spec.steps = {imgproc::BlurStep{3.0}};
        auto blurred = tagger.tag(imgproc::apply_chain(img, spec));
        mean_sim += jaccard(clean, blurred) / corpus.size();

        // edge_k levels drop (or stay) under blur
        auto level = [](const TagSet& s) {
            for (const auto& t : s.tags)
                if (t.rfind("edge_", 0) == 0) return std::stoi(t.substr(5));
            return -1;
        };
        CHECK(level(blurred) <= level(clean));
    }
    CHECK(mean_sim < 1.0);
}

TEST_CASE("severity_profile: identity chain scores exactly 1") {
    auto corpus = fixtures::make_fixture_corpus(64, 3, 64);
    std::vector<imgproc::DegradationSpec> specs(1);
    SurrogateTagger tagger;
    auto report = severity_profile(corpus, specs, tagger);
    REQUIRE(report.records.size() == 1);
    CHECK(report.records[0].mean_similarity == 1.0);
    CHECK(report.records[0].n_images == 3);
}

TEST_CASE("severity_profile: single image single spec equals direct jaccard") {
    auto corpus = fixtures::make_fixture_corpus(65, 1, 64);
    imgproc::DegradationSpec spec;
    spec.seed = 5;
    spec.steps = {imgproc::BlurStep{1.5}, imgproc::GaussianNoiseStep{10.0}};
    SurrogateTagger tagger;
    auto report = severity_profile(corpus, {spec}, tagger);
    double direct = jaccard(tagger.tag(corpus[0]), tagger.tag(imgproc::apply_chain(corpus[0], spec)));
    CHECK(report.records[0].mean_similarity == doctest::Approx(direct).epsilon(1e-15));
}

TEST_CASE("severity_profile: similarity non-increasing in blur sigma") {
    auto corpus = fixtures::make_fixture_corpus(66, 20, 64);
    std::vector<imgproc::DegradationSpec> specs;
    for (double s : {0.5, 1.5, 2.5}) {
        imgproc::DegradationSpec spec;
        spec.steps = {imgproc::BlurStep{s}};
        specs.push_back(spec);
    }
    SurrogateTagger tagger;
    auto report = severity_profile(corpus, specs, tagger);
    CHECK(report.records[0].mean_similarity >= report.records[1].mean_similarity);
    CHECK(report.records[1].mean_similarity >= report.records[2].mean_similarity);
    CHECK(report.records[0].mean_similarity > report.records[2].mean_similarity);
}

TEST_CASE("severity_profile: invariant to image permutation") {
    auto corpus = fixtures::make_fixture_corpus(67, 6, 64);
    imgproc::DegradationSpec spec;
    spec.seed = 3;
    spec.steps = {imgproc::GaussianNoiseStep{15.0}};
    SurrogateTagger tagger;
    auto r1 = severity_profile(corpus, {spec}, tagger);
    std::reverse(corpus.begin(), corpus.end());
    auto r2 = severity_profile(corpus, {spec}, tagger);
    CHECK(r1.records[0].mean_similarity ==
          doctest::Approx(r2.records[0].mean_similarity).epsilon(1e-12));
}

TEST_CASE("severity_profile: multi-threaded run matches single-threaded") {
    auto corpus = fixtures::make_fixture_corpus(68, 4, 128);
    Rng rng(68);
    std::vector<imgproc::DegradationSpec> specs;
    for (int i = 0; i < 6; ++i) specs.push_back(imgproc::sample_degradation(rng));
    SurrogateTagger tagger;
    auto r1 = severity_profile(corpus, specs, tagger, 1);
    auto r4 = severity_profile(corpus, specs, tagger, 4);
    REQUIRE(r1.records.size() == r4.records.size());
    for (size_t i = 0; i < r1.records.size(); ++i)
        CHECK(r1.records[i].mean_similarity == r4.records[i].mean_similarity);
}

TEST_CASE("classify_four: descending split with remainders to earlier classes") {
    SimilarityReport report;
    for (int i = 0; i < 8; ++i)
        report.records.push_back({i, 0.8 - 0.1 * i, 1});
    auto cls = classify_four(report);
    CHECK(cls.class_ids[0] == std::vector<int>{0, 1});
    CHECK(cls.class_ids[1] == std::vector<int>{2, 3});
    CHECK(cls.class_ids[2] == std::vector<int>{4, 5});
    CHECK(cls.class_ids[3] == std::vector<int>{6, 7});

    report.records.push_back({8, -0.1, 1});
    report.records.push_back({9, -0.2, 1});
    auto cls10 = classify_four(report);
    CHECK(cls10.class_ids[0].size() == 3);
    CHECK(cls10.class_ids[1].size() == 3);
    CHECK(cls10.class_ids[2].size() == 2);
    CHECK(cls10.class_ids[3].size() == 2);
}

TEST_CASE("classify_four: all-equal similarities fall back to spec_id order") {
    SimilarityReport report;
    for (int i = 0; i < 4; ++i) report.records.push_back({3 - i, 0.5, 1});
    auto cls = classify_four(report);
    CHECK(cls.class_ids[0] == std::vector<int>{0});
    CHECK(cls.class_ids[1] == std::vector<int>{1});
    CHECK(cls.class_ids[2] == std::vector<int>{2});
    CHECK(cls.class_ids[3] == std::vector<int>{3});
}

TEST_CASE("classify_four: requires at least 4 records and partitions the input") {
    SimilarityReport small;
    small.records = {{0, 0.5, 1}, {1, 0.4, 1}, {2, 0.3, 1}};
    CHECK_THROWS(classify_four(small));

    SimilarityReport report;
    Rng rng(69);
    for (int i = 0; i < 37; ++i) report.records.push_back({i, rng.next_double(), 1});
    auto cls = classify_four(report);
    std::set<int> all;
    size_t total = 0;
    for (int k = 0; k < 4; ++k) {
        total += cls.class_ids[k].size();
        for (int id : cls.class_ids[k]) all.insert(id);
    }
    CHECK(total == 37);
    CHECK(all.size() == 37);
    // sizes differ by at most one, earlier classes take the remainder
    CHECK(cls.class_ids[0].size() == 10);
    CHECK(cls.class_ids[3].size() == 9);
}

TEST_CASE("classify_four: rank-invariant under constant shifts") {
    SimilarityReport a, b;
    Rng rng(70);
    for (int i = 0; i < 16; ++i) {
        double s = rng.next_double();
        a.records.push_back({i, s, 1});
        b.records.push_back({i, s + 5.0, 1});
    }
    auto ca = classify_four(a);
    auto cb = classify_four(b);
    for (int k = 0; k < 4; ++k) CHECK(ca.class_ids[k] == cb.class_ids[k]);
}

TEST_CASE("select_by_threshold: strict inequalities and validation") {
    SimilarityReport report;
    report.records = {{0, 0.9, 1}, {1, 0.5, 1}, {2, 0.1, 1}};
    auto sel = select_by_threshold(report, 0.7, 0.3);
    CHECK(sel.mild == std::set<int>{0});
    CHECK(sel.severe == std::set<int>{2});

    auto none = select_by_threshold(report, 1.0, 0.0);
    CHECK(none.mild.empty());
    CHECK(none.severe.empty());

    // boundary values are excluded from both sets
    SimilarityReport edge;
    edge.records = {{0, 0.7, 1}, {1, 0.3, 1}};
    auto sel2 = select_by_threshold(edge, 0.7, 0.3);
    CHECK(sel2.mild.empty());
    CHECK(sel2.severe.empty());

    CHECK_THROWS(select_by_threshold(report, 0.3, 0.7));
    CHECK_THROWS(select_by_threshold(report, 0.5, 0.5));
}

TEST_CASE("report jsonl round-trip and csv header") {
    SimilarityReport report;
    report.records = {{0, 0.75, 4}, {1, 0.25, 4}};
    auto text = report.to_jsonl();
    auto back = SimilarityReport::from_jsonl(text);
    REQUIRE(back.records.size() == 2);
    CHECK(back.records[0].spec_id == 0);
    CHECK(back.records[0].mean_similarity == doctest::Approx(0.75));
    CHECK(back.records[1].n_images == 4);
    CHECK(report.to_csv().rfind("spec_id", 0) == 0);
}

TEST_CASE("make_tagger") {
    auto t = make_tagger("surrogate");
    CHECK(t->name() == "surrogate");
    CHECK_THROWS(make_tagger("ram"));
}
