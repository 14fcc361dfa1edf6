#include <numeric>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "sqm/error.hpp"
#include "sqm/taxonomy.hpp"
#include "sqm/verify.hpp"
#include "support.hpp"

namespace sqm {
namespace {

LabelSet synthetic_labelset(std::size_t coarse, std::size_t fine_per_coarse) {
    std::vector<FineLabel> fine;
    for (std::size_t c = 0; c < coarse; ++c) {
        for (std::size_t f = 0; f < fine_per_coarse; ++f) {
            fine.push_back({"C" + std::to_string(c), "F" + std::to_string(f)});
        }
    }
    return LabelSet(fine);
}

Question labeled(const std::string& id, const std::string& text, const std::string& coarse,
                 const std::string& fine) {
    Question q = make_question(id, text);
    q.coarse = coarse;
    q.fine = fine;
    return q;
}

TaxonomyConfig tiny_config() {
    TaxonomyConfig c;
    c.filters = 6;
    c.hidden = 5;
    c.ff_hidden = 7;
    c.dropout_keep = 1.0;
    c.init_scale = 0.3;
    return c;
}

TEST(LabelSet, DefaultFileHasSixCoarseClasses) {
    const auto set = load_labelset(default_labelset_path());
    EXPECT_EQ(set.coarse().size(), 6u);
    EXPECT_EQ(set.fine().size(), 84u);
    EXPECT_TRUE(set.find_fine("Quantification", "Temperature"));
    // List reuses fine names of other coarse classes.
    EXPECT_TRUE(set.find_fine("List", "Person"));
    EXPECT_TRUE(set.find_fine("Entity", "Person"));
    EXPECT_NE(*set.find_fine("List", "Person"), *set.find_fine("Entity", "Person"));
}

TEST(LabelSet, CoarseOrderFollowsFirstAppearance) {
    std::istringstream in("# comment\nB\tx\nA\ty\nB\tz\n");
    const auto set = read_labelset(in, "labels");
    EXPECT_EQ(set.coarse(), (std::vector<std::string>{"B", "A"}));
    EXPECT_EQ(set.coarse_of(2), 0u);
    EXPECT_EQ(set.fine_count("B"), 2u);
    EXPECT_EQ(set.labels(TaxonomyHead::fine), (std::vector<std::string>{"B:x", "A:y", "B:z"}));
}

TEST(LabelSet, DuplicateAndMalformedRowsRejected) {
    std::istringstream dup("A\tx\nA\tx\n");
    EXPECT_THROW(read_labelset(dup, "labels"), FormatError);
    std::istringstream one_col("A\n");
    EXPECT_THROW(read_labelset(one_col, "labels"), FormatError);
    std::istringstream empty("# nothing\n");
    EXPECT_THROW(read_labelset(empty, "labels"), FormatError);
}

TEST(LabelSet, GoldIndexNamesOffendingQuestion) {
    const auto set = synthetic_labelset(2, 2);
    EXPECT_EQ(set.gold_index(labeled("q1", "a", "C1", "F0"), TaxonomyHead::fine), 2u);
    EXPECT_EQ(set.gold_index(labeled("q1", "a", "C1", "F0"), TaxonomyHead::coarse), 1u);
    try {
        set.gold_index(labeled("q9", "a", "C7", "F0"), TaxonomyHead::coarse);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("q9"), std::string::npos);
    }
    EXPECT_THROW(set.gold_index(make_question("q2", "a"), TaxonomyHead::fine), DataError);
}

TEST(TaxonomyModel, WindowStart) {
    EXPECT_EQ(window_start(0, 2), -1);
    EXPECT_EQ(window_start(5, 2), 4);
    EXPECT_EQ(window_start(5, 3), 4);
    EXPECT_EQ(window_start(5, 1), 5);
    EXPECT_EQ(window_start(5, 4), 3);
}

TEST(TaxonomyModel, ZeroOutputLayerIsUniform) {
    auto table = random_table(10, 4, 3);
    TaxonomyModel model(tiny_config(), table, TaxonomyHead::coarse, {"a", "b", "c", "d"});
    model.init(4);
    model.output_weights().value.fill(0.0);
    model.output_bias().value.fill(0.0);
    const auto pred = model.classify(std::vector<std::string>{"w1", "w2", "w3"});
    ASSERT_EQ(pred.distribution.size(), 4u);
    for (double p : pred.distribution) {
        EXPECT_DOUBLE_EQ(p, 0.25);
    }
}

TEST(TaxonomyModel, DistributionSumsToOne) {
    auto table = random_table(10, 4, 3);
    TaxonomyModel model(tiny_config(), table, TaxonomyHead::fine, {"a", "b", "c"});
    model.init(9);
    for (const auto& toks : {std::vector<std::string>{"w1"}, std::vector<std::string>{"w2", "w3", "w9", "w0"}}) {
        const auto pred = model.classify(toks);
        const double sum = std::accumulate(pred.distribution.begin(), pred.distribution.end(), 0.0);
        EXPECT_NEAR(sum, 1.0, 1e-12);
        EXPECT_EQ(pred.label, model.labels()[pred.index]);
        EXPECT_EQ(pred.probability, pred.distribution[pred.index]);
    }
}

TEST(TaxonomyModel, TrailingPadIgnored) {
    auto table = random_table(10, 4, 3);
    TaxonomyModel model(tiny_config(), table, TaxonomyHead::coarse, {"a", "b"});
    model.init(2);
    const auto plain = model.classify(std::vector<std::string>{"w1", "w2"});
    const auto padded = model.classify(std::vector<std::string>{"w1", "w2", "<pad>", "<pad>"});
    EXPECT_EQ(plain.distribution, padded.distribution);
}

TEST(TaxonomyModel, EmptyQuestionRejected) {
    auto table = random_table(10, 4, 3);
    TaxonomyModel model(tiny_config(), table, TaxonomyHead::coarse, {"a", "b"});
    EXPECT_THROW(model.classify(std::vector<std::string>{}), ArgumentError);
}

TEST(TaxonomyModel, EveryParameterReceivesGradient) {
    auto table = random_table(10, 4, 3);
    TaxonomyModel model(tiny_config(), table, TaxonomyHead::coarse, {"a", "b", "c"});
    model.init(5);
    Tape tape;
    Var logits = model.logits(tape, std::vector<std::string>{"w1", "w2", "w3", "w4"}, nullptr);
    Var loss = ad::softmax_cross_entropy(logits, 1);
    auto params = model.parameters();
    zero_grads(params);
    tape.backward(loss);
    for (auto* p : params) {
        EXPECT_GT(norm(p->grad), 0.0) << p->name;
    }
}

std::vector<Question> tiny_dataset() {
    return {labeled("q1", "w1 w2", "C0", "F0"), labeled("q2", "w3 w4", "C1", "F1"),
            labeled("q3", "w1 w5", "C0", "F1"), labeled("q4", "w3 w6", "C1", "F0")};
}

TEST(Training, EmptyDatasetRejected) {
    auto table = random_table(10, 4, 3);
    EXPECT_THROW(train_classifier(tiny_config(), {}, table, synthetic_labelset(2, 2), TaxonomyHead::coarse),
                 ArgumentError);
}

TEST(Training, LabelOutsideSetNamesQuestion) {
    auto table = random_table(10, 4, 3);
    auto data = tiny_dataset();
    data[2].coarse = "Nowhere";
    try {
        train_classifier(tiny_config(), data, table, synthetic_labelset(2, 2), TaxonomyHead::coarse);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("q3"), std::string::npos);
    }
}

TEST(Training, FitsTinyDatasetDeterministically) {
    auto table = random_table(10, 4, 3);
    auto cfg = tiny_config();
    cfg.epochs = 60;
    cfg.batch = 2;
    cfg.lr = 0.05;
    const auto set = synthetic_labelset(2, 2);
    auto a = train_classifier(cfg, tiny_dataset(), table, set, TaxonomyHead::coarse);
    auto b = train_classifier(cfg, tiny_dataset(), table, set, TaxonomyHead::coarse);
    EXPECT_EQ(a.report.to_json(), b.report.to_json());
    EXPECT_EQ(a.report.epochs.back().train_accuracy, 1.0);
    const auto eval = evaluate_classifier(a.model, tiny_dataset(), set);
    EXPECT_EQ(eval.accuracy, 1.0);
}

TEST(Training, CallbackCanStopEarly) {
    auto table = random_table(10, 4, 3);
    auto cfg = tiny_config();
    cfg.epochs = 10;
    std::size_t seen = 0;
    auto r = train_classifier(cfg, tiny_dataset(), table, synthetic_labelset(2, 2), TaxonomyHead::fine, {},
                              [&](const TaxonomyModel&, const TaxonomyEpoch& e) {
                                  seen = e.epoch;
                                  return e.epoch < 3;
                              });
    EXPECT_EQ(seen, 3u);
    EXPECT_EQ(r.report.epochs.size(), 3u);
}

TEST(Persistence, SaveLoadKeepsPredictions) {
    test::TempDir dir("taxonomy");
    auto table = random_table(10, 4, 3);
    TaxonomyModel model(tiny_config(), table, TaxonomyHead::fine, {"C0:F0", "C0:F1", "C1:F0"});
    model.init(6);
    save_taxonomy(dir / "t", model);
    auto loaded = load_taxonomy(dir / "t", table);
    EXPECT_EQ(loaded.labels(), model.labels());
    EXPECT_EQ(loaded.head(), TaxonomyHead::fine);
    const std::vector<std::string> toks = {"w1", "w7", "w2"};
    const auto a = model.classify(toks), b = loaded.classify(toks);
    for (std::size_t i = 0; i < a.distribution.size(); ++i) {
        EXPECT_NEAR(a.distribution[i], b.distribution[i], 1e-5);
    }
}

TEST(Features, LengthAndLayout) {
    const auto set = synthetic_labelset(6, 12);
    ASSERT_EQ(set.fine().size(), 72u);
    EXPECT_EQ(taxonomy_feature_length(set), 158u);

    const TaxonomyLabels p{1, 14}, q{1, 20};
    const auto f = taxonomy_features(p, q, set);
    ASSERT_EQ(f.size(), 158u);
    std::vector<double> expected(158, 0.0);
    expected[1] = 1;             // coarse p
    expected[6 + 14] = 1;        // fine p
    expected[78 + 1] = 1;        // coarse q
    expected[78 + 6 + 20] = 1;   // fine q
    expected[156] = 1;           // coarse match
    expected[157] = 0;           // fine mismatch
    EXPECT_EQ(f, expected);
}

TEST(Features, MatchFlags) {
    const auto set = synthetic_labelset(2, 2);
    const auto same = taxonomy_features({0, 1}, {0, 1}, set);
    EXPECT_EQ(same[same.size() - 2], 1.0);
    EXPECT_EQ(same.back(), 1.0);
    const auto differ = taxonomy_features({0, 1}, {1, 2}, set);
    EXPECT_EQ(differ[differ.size() - 2], 0.0);
    EXPECT_EQ(differ.back(), 0.0);
    EXPECT_THROW(taxonomy_features({0, 9}, {0, 0}, set), ArgumentError);
}

}  // namespace
}  // namespace sqm
