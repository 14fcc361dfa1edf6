#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "sqm/baselines.hpp"
#include "sqm/error.hpp"

namespace sqm {
namespace {

using Doc = std::vector<std::string>;

TEST(CorpusStats, DocumentFrequencies) {
    const std::vector<Doc> docs = {tokenize("a b a"), tokenize("a")};
    const auto s = build_stats(docs);
    EXPECT_EQ(s.documents, 2u);
    EXPECT_EQ(s.df_of("a"), 2u);
    EXPECT_EQ(s.df_of("b"), 1u);
    EXPECT_EQ(s.df_of("z"), 0u);
    EXPECT_DOUBLE_EQ(s.avgdl, 2.0);
}

TEST(Jaccard, SetOverlap) {
    const Doc a = {"a", "b", "c"}, b = {"b", "c", "d"};
    EXPECT_DOUBLE_EQ(jaccard(a, b), 0.5);
    const Doc dup = {"a", "a", "b", "c"};
    EXPECT_DOUBLE_EQ(jaccard(dup, b), 0.5);
    EXPECT_DOUBLE_EQ(jaccard(a, a), 1.0);
    EXPECT_EQ(jaccard(Doc{}, Doc{}), 0.0);
    EXPECT_EQ(jaccard(a, Doc{}), 0.0);
}

TEST(Tfidf, TwoDocumentOracle) {
    const std::vector<Doc> docs = {{"a", "b"}, {"a", "c"}};
    const auto s = build_stats(docs);
    EXPECT_DOUBLE_EQ(tfidf_idf(s, "a"), 1.0);
    const double ib = std::log(3.0 / 2.0) + 1.0;
    EXPECT_DOUBLE_EQ(tfidf_idf(s, "b"), ib);
    // Vectors [1, ib, 0] and [1, 0, ib].
    EXPECT_NEAR(tfidf_cosine(docs[0], docs[1], s), 1.0 / (1.0 + ib * ib), 1e-15);
    EXPECT_NEAR(tfidf_cosine(docs[0], docs[0], s), 1.0, 1e-15);
    // Term frequency counts: [2, ib] against [1, ib].
    const Doc twice = {"a", "a", "b"};
    EXPECT_NEAR(tfidf_cosine(twice, docs[0], s),
                (2 + ib * ib) / (std::sqrt(4 + ib * ib) * std::sqrt(1 + ib * ib)), 1e-15);
    EXPECT_EQ(tfidf_cosine(Doc{}, docs[0], s), 0.0);
}

TEST(Bm25, SingleDocumentOracle) {
    const std::vector<Doc> docs = {{"a", "b"}};
    const auto s = build_stats(docs);
    EXPECT_NEAR(bm25_idf(s, "a"), std::log(4.0 / 3.0), 1e-15);
    // tf = 1 and |doc| = avgdl, so the saturation factor is 1.
    EXPECT_NEAR(bm25(Doc{"a"}, docs[0], s), std::log(4.0 / 3.0), 1e-15);
    // Distinct query terms only; unseen terms add nothing.
    EXPECT_NEAR(bm25(Doc{"a", "a", "zzz"}, docs[0], s), std::log(4.0 / 3.0), 1e-15);
    EXPECT_EQ(bm25(Doc{"zzz"}, docs[0], s), 0.0);
}

TEST(Bm25, LengthNormalization) {
    const std::vector<Doc> docs = {{"a", "b", "c", "d"}, {"a", "a"}};
    const auto s = build_stats(docs);
    const double k1 = 1.2, b = 0.75, avgdl = 3.0;
    const double idf = std::log(1 + (2 - 2 + 0.5) / (2 + 0.5));
    const double expected = idf * 2 * (k1 + 1) / (2 + k1 * (1 - b + b * 2 / avgdl));
    EXPECT_NEAR(bm25(Doc{"a"}, docs[1], s), expected, 1e-15);
    Bm25Params p{2.0, 0.0};
    EXPECT_NEAR(bm25(Doc{"a"}, docs[1], s, p), idf * 2 * 3.0 / (2 + 2.0), 1e-15);
}

TEST(Baseline, MethodDispatch) {
    const std::vector<Doc> docs = {{"a", "b"}, {"a", "c"}};
    const auto s = build_stats(docs);
    EXPECT_EQ(baseline_score(BaselineMethod::jaccard, docs[0], docs[1], s), jaccard(docs[0], docs[1]));
    EXPECT_EQ(baseline_score(BaselineMethod::tfidf, docs[0], docs[1], s), tfidf_cosine(docs[0], docs[1], s));
    EXPECT_EQ(baseline_score(BaselineMethod::bm25, docs[0], docs[1], s), bm25(docs[0], docs[1], s));
    EXPECT_EQ(parse_baseline_method("bm25"), BaselineMethod::bm25);
    EXPECT_THROW(parse_baseline_method("lsi"), ArgumentError);
}

TEST(Thresholds, DefaultTableBoundaries) {
    const auto t = load_thresholds(default_thresholds_path());
    EXPECT_EQ(threshold_classify(0.72, BaselineMethod::tfidf, "squad", t), PairLabel::match);
    EXPECT_EQ(threshold_classify(0.7199, BaselineMethod::tfidf, "squad", t), PairLabel::no_match);
    EXPECT_EQ(threshold_classify(13.0, BaselineMethod::bm25, "quora", t), PairLabel::no_match);
    EXPECT_EQ(threshold_classify(0.29, BaselineMethod::jaccard, "squad", t), PairLabel::match);
    EXPECT_DOUBLE_EQ(t.threshold("quora", BaselineMethod::jaccard), 0.56);
    EXPECT_THROW(t.threshold("trec", BaselineMethod::tfidf), ConfigError);
}

TEST(Thresholds, ParsingErrors) {
    std::istringstream ok("# c\nd\tjaccard\t0.5\n");
    EXPECT_EQ(read_thresholds(ok, "t").entries().size(), 1u);
    std::istringstream bad_method("d\tlsi\t0.5\n");
    EXPECT_THROW(read_thresholds(bad_method, "t"), FormatError);
    std::istringstream bad_value("d\tbm25\tx\n");
    EXPECT_THROW(read_thresholds(bad_value, "t"), FormatError);
}

}  // namespace
}  // namespace sqm
