#include <algorithm>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "sqm/corpus.hpp"
#include "sqm/embeddings.hpp"
#include "sqm/error.hpp"
#include "support.hpp"

namespace sqm {
namespace {

using Tokens = std::vector<std::string>;

EmbeddingLoad read_vectors(const std::string& text, OovPolicy policy = OovPolicy::zero) {
    std::istringstream in(text);
    return read_text_embeddings(in, "inline", policy);
}

TEST(Embeddings, ReadsTwoRows) {
    auto load = read_vectors("a 1 0\nb 0 1\n");
    EXPECT_EQ(load.table.dim(), 2u);
    EXPECT_EQ(load.table.vocab_size(), 2u);
    EXPECT_EQ(load.table.lookup("b"), Tensor::vector({0, 1}));
}

TEST(Embeddings, SkipsHeaderLine) {
    auto load = read_vectors("2 3\na 1 2 3\nb 4 5 6\n");
    EXPECT_EQ(load.table.dim(), 3u);
    EXPECT_EQ(load.table.vocab_size(), 2u);
}

TEST(Embeddings, InconsistentWidthReportsLine) {
    try {
        read_vectors("a 1 0\nb 0 1\nc 1 2 3\n");
        FAIL() << "expected a format error";
    } catch (const FormatError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
    EXPECT_THROW(read_vectors(""), FormatError);
}

TEST(Embeddings, DuplicateKeepsFirstAndWarns) {
    auto load = read_vectors("a 1 0\nb 0 1\na 5 5\n");
    EXPECT_EQ(load.table.vocab_size(), 2u);
    EXPECT_EQ(load.table.lookup("a"), Tensor::vector({1, 0}));
    EXPECT_EQ(load.warnings.size(), 1u);
}

TEST(Embeddings, UnknownTokens) {
    auto zero = read_vectors("a 1 2\n");
    EXPECT_EQ(zero.table.lookup("zzz"), Tensor::vector({0, 0}));
    auto learned = read_vectors("a 1 2\n", OovPolicy::learned_unk);
    learned.table.set_unk(Tensor::vector({0.25, -0.5}));
    EXPECT_EQ(learned.table.lookup("x"), learned.table.lookup("y"));
    EXPECT_EQ(learned.table.lookup("x"), Tensor::vector({0.25, -0.5}));
}

TEST(Embeddings, ComposeAverage) {
    auto load = read_vectors("a 1 0\nb 0 1\n");
    const auto& t = load.table;
    EXPECT_EQ(t.compose_average(Tokens{"a"}), Tensor::vector({1, 0}));
    EXPECT_EQ(t.compose_average(Tokens{"a", "a"}), Tensor::vector({1, 0}));
    EXPECT_EQ(t.compose_average(Tokens{"a", "b"}), Tensor::vector({0.5, 0.5}));
    EXPECT_EQ(t.compose_average(Tokens{}), Tensor::vector({0, 0}));
}

TEST(Embeddings, TextRoundTripWithinFloatPrecision) {
    auto table = test::make_table({"x", "y", "z"}, 4, 11);
    std::stringstream s;
    write_text_embeddings(s, *table);
    auto back = read_text_embeddings(s, "roundtrip");
    ASSERT_EQ(back.table.vocab_size(), 3u);
    for (const auto& tok : table->tokens()) {
        const Tensor a = table->lookup(tok);
        const Tensor b = back.table.lookup(tok);
        for (std::size_t i = 0; i < a.size(); ++i) {
            EXPECT_NEAR(a[i], b[i], 1e-6 * std::max(1.0, std::abs(a[i])));
        }
    }
}

TEST(Tokenize, Rules) {
    EXPECT_EQ(tokenize("How magnets are made?"), (Tokens{"how", "magnets", "are", "made", "?"}));
    EXPECT_EQ(tokenize(""), Tokens{});
    EXPECT_EQ(tokenize("What's AI?"), (Tokens{"what", "'s", "ai", "?"}));
    EXPECT_EQ(tokenize("(a, b): \"c\"; d!"),
              (Tokens{"(", "a", ",", "b", ")", ":", "\"", "c", "\"", ";", "d", "!"}));
}

TEST(Pairs, CountsLabels) {
    std::istringstream in("1\t2\tq one\tq two\t1\n3\t4\tq three\tq four\t0\n");
    auto pairs = read_pairs(in, "inline");
    ASSERT_EQ(pairs.records.size(), 2u);
    auto counts = count_labels(pairs.records);
    EXPECT_EQ(counts.match, 1u);
    EXPECT_EQ(counts.no_match, 1u);
    EXPECT_EQ(pairs.records[0].q1.tokens, (Tokens{"q", "one"}));
}

TEST(Pairs, BadLabelOrColumnsIsFormatError) {
    std::istringstream bad_label("1\t2\ta\tb\t2\n");
    EXPECT_THROW(read_pairs(bad_label, "inline"), FormatError);
    std::istringstream bad_cols("1\t2\ta\tb\n1\t2\ta\n");
    try {
        read_pairs(bad_cols, "inline");
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.line(), 1u);
    }
}

TEST(Pairs, DuplicatesKeptWithWarning) {
    std::istringstream in("1\t2\ta\tb\t1\n1\t2\ta\tb\t1\n3\t4\tc\td\t0\n");
    auto pairs = read_pairs(in, "inline");
    EXPECT_EQ(pairs.records.size(), 3u);
    EXPECT_EQ(pairs.warnings.size(), 1u);
}

TEST(RankingGroups, NegativesAreCandidatesMinusPositives) {
    std::istringstream in(
        R"({"query": {"id": "q", "text": "how old is it"}, "positives": ["a"], "candidates": ["a", "b", "c"]})"
        "\n");
    auto groups = read_ranking_groups(in, "inline");
    ASSERT_EQ(groups.records.size(), 1u);
    EXPECT_EQ(groups.records[0].positives.size(), 1u);
    EXPECT_EQ(groups.records[0].negatives.size(), 2u);
}

TEST(RankingGroups, PositiveOutsideCandidatesWarns) {
    std::istringstream in(R"({"query": "q", "positives": ["z"], "candidates": ["a", "b"]})"
                          "\n");
    auto groups = read_ranking_groups(in, "inline");
    EXPECT_EQ(groups.records[0].positives.size(), 1u);
    EXPECT_EQ(groups.records[0].negatives.size(), 2u);
    EXPECT_EQ(groups.warnings.size(), 1u);
}

TEST(RankingGroups, EmptyPositivesAccepted) {
    std::istringstream in(R"({"query": "q", "positives": [], "candidates": ["a", "b"]})"
                          "\n");
    auto groups = read_ranking_groups(in, "inline");
    EXPECT_TRUE(groups.records[0].positives.empty());
}

TEST(RankingGroups, MalformedJsonReportsLine) {
    std::istringstream in(R"({"query": "q", "positives": [], "candidates": []})"
                          "\n{oops\n");
    try {
        read_ranking_groups(in, "inline");
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}

PoqrGroup poqr_group(std::size_t p, std::size_t u, std::size_t n, const std::string& tag = "g") {
    PoqrGroup g;
    g.ref = make_question(tag + "r", "reference");
    for (std::size_t i = 0; i < p; ++i) {
        g.paraphrases.push_back(make_question(tag + "p" + std::to_string(i), "p"));
    }
    for (std::size_t i = 0; i < u; ++i) {
        g.useful.push_back(make_question(tag + "u" + std::to_string(i), "u"));
    }
    for (std::size_t i = 0; i < n; ++i) {
        g.neutral.push_back(make_question(tag + "n" + std::to_string(i), "n"));
    }
    return g;
}

TEST(Poqr, ExpandCounts) {
    std::vector<PoqrGroup> one = {poqr_group(1, 2, 1)};
    EXPECT_EQ(expand_poqr(one).size(), 5u);
    std::vector<PoqrGroup> no_p = {poqr_group(0, 2, 3)};
    const auto pairs = expand_poqr(no_p);
    EXPECT_EQ(pairs.size(), 6u);
    for (const auto& pr : pairs) {
        EXPECT_EQ(pr.relation, PoqrRelation::useful_over_neutral);
    }
}

TEST(Poqr, ReadsGroupsAndDeclaredStats) {
    auto groups = load_poqr_groups(test::data_path("cli/poqr.jsonl"));
    EXPECT_EQ(groups.records.size(), 4u);
    EXPECT_EQ(expand_poqr(groups.records).size(), 12u);

    const auto stats = load_poqr_stats(std::filesystem::path(SQM_DATA_DIR) / "poqr_stats.tsv");
    ASSERT_EQ(stats.size(), 4u);
    EXPECT_EQ(stats[0].dataset, "Simple-1");
    EXPECT_EQ(stats[0].paraphrases, 164u);
    EXPECT_EQ(stats[0].pairs, 11015u);
}

TEST(LabeledQuestions, IdsFollowLines) {
    std::istringstream in("What is a solar cell?\tDefinition\tEntity\n\nWhy?\tDescription\tReason\n");
    auto qs = read_labeled_questions(in, "inline");
    ASSERT_EQ(qs.records.size(), 2u);
    EXPECT_EQ(qs.records[0].id, "q1");
    EXPECT_EQ(qs.records[1].id, "q3");
    EXPECT_EQ(qs.records[1].coarse, "Description");
    EXPECT_EQ(qs.records[1].fine, "Reason");
}

void expect_partition(const std::vector<Fold>& folds, std::size_t n) {
    std::vector<int> seen(n, 0);
    for (const auto& f : folds) {
        EXPECT_EQ(f.train.size() + f.test.size(), n);
        for (auto i : f.test) {
            ++seen[i];
        }
        std::set<std::size_t> train(f.train.begin(), f.train.end());
        for (auto i : f.test) {
            EXPECT_EQ(train.count(i), 0u);
        }
    }
    for (int c : seen) {
        EXPECT_EQ(c, 1);
    }
}

TEST(Folds, TenByFive) {
    const auto folds = kfold_split(10, 5, 3);
    ASSERT_EQ(folds.size(), 5u);
    for (const auto& f : folds) {
        EXPECT_EQ(f.test.size(), 2u);
    }
    expect_partition(folds, 10);
}

TEST(Folds, SevenByThree) {
    const auto folds = kfold_split(7, 3, 3);
    std::multiset<std::size_t> sizes;
    for (const auto& f : folds) {
        sizes.insert(f.test.size());
    }
    EXPECT_EQ(sizes, (std::multiset<std::size_t>{3, 2, 2}));
    expect_partition(folds, 7);
}

TEST(Folds, DeterministicAndRangeChecked) {
    const auto a = kfold_split(23, 4, 9);
    const auto b = kfold_split(23, 4, 9);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].test, b[i].test);
    }
    EXPECT_THROW(kfold_split(5, 0, 1), ArgumentError);
    EXPECT_THROW(kfold_split(5, 6, 1), ArgumentError);
    EXPECT_THROW(kfold_split(5, 1, 1), ArgumentError);
}

TEST(Folds, StratifiedSpreadsEachClass) {
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < 30; ++i) {
        labels.push_back(i < 10 ? 1 : 0);
    }
    const auto folds = stratified_kfold_split(labels, 5, 4);
    expect_partition(folds, labels.size());
    for (const auto& f : folds) {
        const auto ones = std::count_if(f.test.begin(), f.test.end(), [&](auto i) { return labels[i] == 1; });
        EXPECT_EQ(ones, 2);
    }
}

TEST(Negatives, DifferentCoarseAndDistinct) {
    std::vector<Question> qs;
    const char* coarse[] = {"Entity", "Quantification", "Description"};
    for (int i = 0; i < 12; ++i) {
        Question q = make_question("q" + std::to_string(i), "question " + std::to_string(i));
        q.coarse = coarse[i % 3];
        qs.push_back(q);
    }
    const auto negs = generate_negatives(qs, 20, 5);
    ASSERT_EQ(negs.size(), 20u);
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& p : negs) {
        EXPECT_EQ(p.label, PairLabel::no_match);
        EXPECT_NE(p.q1.coarse, p.q2.coarse);
        auto key = std::minmax(p.q1.id, p.q2.id);
        EXPECT_TRUE(seen.insert({key.first, key.second}).second);
    }
}

}  // namespace
}  // namespace sqm
