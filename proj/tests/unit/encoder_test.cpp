#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "sqm/autodiff.hpp"
#include "sqm/encoder.hpp"
#include "sqm/error.hpp"
#include "sqm/rng.hpp"
#include "sqm/verify.hpp"
#include "support.hpp"

namespace sqm {
namespace {

using Tokens = std::vector<std::string>;

EncoderConfig small_config(EncoderKind kind, bool attention, std::size_t d = 4) {
    EncoderConfig c;
    c.kind = kind;
    c.attention = attention;
    c.d = d;
    c.dropout_keep = 1.0;
    c.init_scale = 0.5;
    return c;
}

void zero_all(ParameterList params) {
    for (auto* p : params) {
        p->value.fill(0.0);
    }
}

TEST(Encoder, ZeroGruWeightsGiveZeroStates) {
    auto table = random_table(10, 4, 1);
    EncoderModel model(small_config(EncoderKind::gru, false), table);
    zero_all(model.parameters());
    const auto e = model.encode(Tokens{"w1", "w2", "w3"});
    for (double v : e.states.values()) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(Encoder, SingleTokenPoolsToItsState) {
    auto table = random_table(10, 4, 1);
    for (auto kind : {EncoderKind::gru, EncoderKind::rcnn}) {
        EncoderModel model(small_config(kind, false), table);
        model.init(3);
        const auto e = model.encode(Tokens{"w4"});
        EXPECT_EQ(e.pooled, column(e.states, 0));
    }
}

TEST(Encoder, EmptyQuestionIsArgumentError) {
    auto table = random_table(10, 4, 1);
    EncoderModel model(small_config(EncoderKind::gru, false), table);
    EXPECT_THROW(model.encode(Tokens{}), ArgumentError);
}

TEST(Encoder, HiddenSizeMustMatchEmbeddings) {
    auto table = random_table(10, 4, 1);
    EXPECT_THROW(EncoderModel(small_config(EncoderKind::gru, true, 6), table), DimensionError);
}

TEST(Encoder, GruStepMatchesHandRecurrence) {
    // One-dimensional GRU with chosen weights, checked against the recurrence
    // written out by hand for two steps.
    auto table = std::make_shared<EmbeddingTable>(Tokens{"a", "b"}, Tensor::matrix(2, 1, {0.5, -1.0}));
    EncoderConfig c = small_config(EncoderKind::gru, false, 1);
    EncoderModel model(c, table);
    const double wz = 0.3, uz = -0.2, bz = 0.1, wr = 0.7, ur = 0.4, br = -0.3, wh = 1.1, uh = 0.6, bh = 0.05;
    const double values[] = {wz, uz, bz, wr, ur, br, wh, uh, bh};
    auto params = model.gru()->parameters();
    ASSERT_EQ(params.size(), 9u);
    for (std::size_t i = 0; i < 9; ++i) {
        params[i]->value.fill(values[i]);
    }
    auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    double h = 0.0;
    std::vector<double> expected;
    for (double x : {0.5, -1.0}) {
        const double z = sig(wz * x + uz * h + bz);
        const double r = sig(wr * x + ur * h + br);
        const double cand = std::tanh(wh * x + uh * (r * h) + bh);
        h = (1 - z) * h + z * cand;
        expected.push_back(h);
    }
    const auto e = model.encode(Tokens{"a", "b"});
    EXPECT_NEAR(e.states[0], expected[0], 1e-15);
    EXPECT_NEAR(e.states[1], expected[1], 1e-15);
}

TEST(Encoder, RcnnStepMatchesHandRecurrence) {
    auto table = std::make_shared<EmbeddingTable>(Tokens{"a", "b", "c"}, Tensor::matrix(3, 1, {0.5, -1.0, 2.0}));
    EncoderModel model(small_config(EncoderKind::rcnn, false, 1), table);
    const double wl = 0.4, ul = -0.5, bl = 0.2, w1 = 0.9, w2 = -0.7, b = 0.1;
    const double values[] = {wl, ul, bl, w1, w2, b};
    auto params = model.rcnn()->parameters();
    ASSERT_EQ(params.size(), 6u);
    for (std::size_t i = 0; i < 6; ++i) {
        params[i]->value.fill(values[i]);
    }
    auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    double h = 0.0, c1 = 0.0, c2 = 0.0;
    std::vector<double> expected;
    for (double x : {0.5, -1.0, 2.0}) {
        const double lambda = sig(wl * x + ul * h + bl);
        const double c1_prev = c1;
        c1 = lambda * c1 + (1 - lambda) * (w1 * x);
        c2 = lambda * c2 + (1 - lambda) * (c1_prev + w2 * x);
        h = std::tanh(c2 + b);
        expected.push_back(h);
    }
    const auto e = model.encode(Tokens{"a", "b", "c"});
    for (std::size_t t = 0; t < 3; ++t) {
        EXPECT_NEAR(e.states[t], expected[t], 1e-15);
    }
}

TEST(Attention, SingleStateGetsAllWeight) {
    AttentionLayer att("att", 2);
    Rng rng(2);
    for (auto* p : att.parameters()) {
        for (auto& v : p->value.values()) {
            v = rng.uniform(-1, 1);
        }
    }
    Tape tape(false);
    const Tensor h = Tensor::matrix(2, 1, {0.3, -0.8});
    auto res = att.attend(tape, tape.constant(h), tape.constant(Tensor::vector({1.0, 2.0})));
    EXPECT_EQ(res.alpha.value(), Tensor::vector({1.0}));
    EXPECT_EQ(res.r.value(), Tensor::vector({0.3, -0.8}));
}

TEST(Attention, ZeroScoringVectorIsUniform) {
    AttentionLayer att("att", 2);
    att.w_h().value = Tensor::matrix(2, 2, {1, 2, 3, 4});
    att.w_v().value = Tensor::matrix(2, 2, {1, 0, 0, 1});
    Tape tape(false);
    const Tensor h = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    auto res = att.attend(tape, tape.constant(h), tape.constant(Tensor::vector({0.5, 0.5})));
    for (double a : res.alpha.value().values()) {
        EXPECT_DOUBLE_EQ(a, 1.0 / 3.0);
    }
}

TEST(Attention, HandComputedDistribution) {
    // W_H = W_v = I, v = 0, w = [1, 0]: scores are tanh of H's first row.
    AttentionLayer att("att", 2);
    att.w_h().value = Tensor::matrix(2, 2, {1, 0, 0, 1});
    att.w_v().value = Tensor::matrix(2, 2, {1, 0, 0, 1});
    att.w().value = Tensor::vector({1, 0});
    const Tensor h = Tensor::matrix(2, 2, {0.5, -1.0, 2.0, 0.25});
    Tape tape(false);
    auto res = att.attend(tape, tape.constant(h), tape.constant(Tensor::vector({0, 0})));
    const double s0 = std::tanh(0.5), s1 = std::tanh(-1.0);
    const double a0 = std::exp(s0) / (std::exp(s0) + std::exp(s1));
    EXPECT_NEAR(res.alpha.value()[0], a0, 1e-15);
    EXPECT_NEAR(res.alpha.value()[1], 1 - a0, 1e-15);
    EXPECT_NEAR(res.r.value()[0], a0 * 0.5 + (1 - a0) * -1.0, 1e-15);
    EXPECT_NEAR(res.r.value()[1], a0 * 2.0 + (1 - a0) * 0.25, 1e-15);
}

TEST(Attention, DimensionMismatch) {
    AttentionLayer att("att", 2);
    Tape tape(false);
    EXPECT_THROW(att.attend(tape, tape.constant(Tensor({3, 2})), tape.constant(Tensor::vector({0, 0}))),
                 DimensionError);
}

TEST(PairEncoding, IdenticalQuestionsGiveIdenticalVectors) {
    auto table = random_table(10, 4, 5);
    EncoderModel model(small_config(EncoderKind::gru, true), table);
    model.init(8);
    const Tokens q = {"w1", "w5", "w2"};
    const auto pe = model.encode_pair(q, q);
    EXPECT_EQ(pe.vec_p, pe.vec_q);
    EXPECT_NEAR(model.similarity(q, q), 1.0, 1e-12);
}

TEST(PairEncoding, SingleTokensReduceToStates) {
    auto table = random_table(10, 4, 5);
    EncoderModel model(small_config(EncoderKind::rcnn, true), table);
    model.init(8);
    const Tokens p = {"w3"}, q = {"w7"};
    const auto pe = model.encode_pair(p, q);
    EXPECT_EQ(pe.vec_q, model.encode(q).pooled);
    EXPECT_EQ(pe.vec_p, model.encode(p).pooled);
}

TEST(PairEncoding, AttentionRowsAreDistributions) {
    auto table = random_table(10, 4, 5);
    EncoderModel model(small_config(EncoderKind::gru, true), table);
    model.init(9);
    const auto pe = model.encode_pair(Tokens{"w1", "w2", "w3"}, Tokens{"w4", "w5"});
    ASSERT_EQ(pe.alpha_pq.rows(), 3u);
    ASSERT_EQ(pe.alpha_pq.cols(), 2u);
    for (std::size_t t = 0; t < 3; ++t) {
        EXPECT_NEAR(pe.alpha_pq.at(t, 0) + pe.alpha_pq.at(t, 1), 1.0, 1e-12);
    }
    EXPECT_EQ(pe.alpha_qp.rows(), 2u);
}

TEST(PairEncoding, RequiresAttention) {
    auto table = random_table(10, 4, 5);
    EncoderModel model(small_config(EncoderKind::gru, false), table);
    EXPECT_THROW(model.encode_pair(Tokens{"w1"}, Tokens{"w2"}), ContractError);
    // Similarity falls back to independent pooled encodings.
    EXPECT_NO_THROW(model.similarity(Tokens{"w1"}, Tokens{"w2"}));
}

TEST(PairEncoding, IndependentModeIsPooledCosine) {
    auto table = random_table(10, 4, 5);
    EncoderModel model(small_config(EncoderKind::gru, true), table);
    model.init(4);
    const Tokens p = {"w1", "w2"}, q = {"w3", "w4", "w5"};
    EXPECT_NEAR(model.similarity(p, q, PairMode::independent),
                cosine(model.encode(p).pooled, model.encode(q).pooled), 1e-15);
}

TEST(MaxMarginLoss, Examples) {
    EXPECT_EQ(max_margin_loss(0.9, std::vector<double>{-0.2, -0.5}, 1.0), 0.0);
    EXPECT_EQ(max_margin_loss(0.4, std::vector<double>{0.4}, 1.0), 1.0);
    EXPECT_NEAR(max_margin_loss(0.9, std::vector<double>{0.5, 0.85}, 1.0), 0.95, 1e-12);
    EXPECT_THROW(max_margin_loss(0.9, std::vector<double>{}, 1.0), ArgumentError);
}

TEST(MaxMarginLoss, TapedVersionAgreesAndRoutesGradient) {
    Parameter pos("pos", Tensor::scalar(0.9));
    Parameter n1("n1", Tensor::scalar(0.5));
    Parameter n2("n2", Tensor::scalar(0.85));
    Tape tape;
    std::vector<Var> negs = {tape.param(n1), tape.param(n2)};
    Var loss = max_margin_loss(tape, tape.param(pos), negs, 1.0);
    EXPECT_NEAR(loss.value().item(), 0.95, 1e-12);
    tape.backward(loss);
    EXPECT_EQ(pos.grad.item(), -1.0);
    EXPECT_EQ(n1.grad.item(), 0.0);
    EXPECT_EQ(n2.grad.item(), 1.0);
}

RankingGroup toy_group() {
    RankingGroup g;
    g.query = make_question("q", "w1 w2 w3");
    g.positives = {make_question("p", "w2 w4")};
    g.negatives = {make_question("n1", "w5 w6 w7"), make_question("n2", "w8 w1")};
    return g;
}

void expect_every_parameter_has_gradient(EncoderModel& model) {
    const auto group = toy_group();
    Tape tape;
    Var loss = group_loss(tape, model, group, 10.0);
    ASSERT_GT(loss.value().item(), 0.0);
    auto params = model.parameters();
    zero_grads(params);
    tape.backward(loss);
    for (auto* p : params) {
        double sum = 0.0;
        for (double g : p->grad.values()) {
            sum += std::abs(g);
        }
        EXPECT_GT(sum, 0.0) << p->name << " received no gradient";
    }
}

TEST(Gradients, EveryEncoderParameterIsReached) {
    auto table = random_table(12, 4, 6);
    for (auto kind : {EncoderKind::gru, EncoderKind::rcnn}) {
        for (bool attention : {false, true}) {
            for (bool trainable : {false, true}) {
                auto cfg = small_config(kind, attention);
                cfg.train_embeddings = trainable;
                EncoderModel model(cfg, table);
                model.init(2);
                SCOPED_TRACE(std::string(to_string(kind)) + (attention ? " attention" : "") +
                             (trainable ? " trainable" : ""));
                expect_every_parameter_has_gradient(model);
            }
        }
    }
}

TEST(Gradients, LearnedUnkRowIsTrained) {
    auto base = random_table(12, 4, 6);
    auto table = std::make_shared<EmbeddingTable>(base->tokens(), base->matrix(), OovPolicy::learned_unk);
    EncoderModel model(small_config(EncoderKind::gru, true), table);
    model.init(2);
    auto group = toy_group();
    group.query = make_question("q", "w1 unseen w3");
    Tape tape;
    Var loss = group_loss(tape, model, group, 10.0);
    auto params = model.parameters();
    zero_grads(params);
    tape.backward(loss);
    bool found = false;
    for (auto* p : params) {
        if (p->name == "encoder.unk") {
            found = true;
            EXPECT_GT(norm(p->grad), 0.0);
        }
    }
    EXPECT_TRUE(found);
}

std::vector<RankingGroup> toy_groups() {
    std::vector<RankingGroup> gs;
    for (int i = 0; i < 6; ++i) {
        RankingGroup g;
        const std::string a = "w" + std::to_string(i), b = "w" + std::to_string(i + 6);
        g.query = make_question("q" + std::to_string(i), a + " " + b + " w12");
        g.positives = {make_question("p" + std::to_string(i), b + " " + a)};
        g.negatives = {make_question("n" + std::to_string(i), "w" + std::to_string((i + 3) % 12) + " w13"),
                       make_question("m" + std::to_string(i), "w" + std::to_string((i + 7) % 12))};
        gs.push_back(g);
    }
    return gs;
}

TEST(Training, ZeroEpochsReturnsInitialModel) {
    auto table = random_table(14, 4, 6);
    auto cfg = small_config(EncoderKind::gru, true);
    cfg.epochs = 0;
    cfg.seed = 5;
    auto result = train_encoder(cfg, toy_groups(), table);
    EncoderModel fresh(cfg, table);
    fresh.init(cfg.seed);
    auto a = result.model.parameters();
    auto b = fresh.parameters();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i]->value, b[i]->value) << a[i]->name;
    }
    EXPECT_EQ(result.report.steps, 0u);
}

TEST(Training, SameSeedSameParameters) {
    auto table = random_table(14, 4, 6);
    auto cfg = small_config(EncoderKind::rcnn, true);
    cfg.epochs = 3;
    cfg.batch = 2;
    cfg.dropout_keep = 0.8;
    auto r1 = train_encoder(cfg, toy_groups(), table, toy_groups());
    auto r2 = train_encoder(cfg, toy_groups(), table, toy_groups());
    auto a = r1.model.parameters();
    auto b = r2.model.parameters();
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i]->value, b[i]->value) << a[i]->name;
    }
    EXPECT_EQ(r1.report.to_json(), r2.report.to_json());
}

TEST(Training, LossDecreasesOnToyData) {
    auto table = random_table(14, 8, 6);
    auto cfg = small_config(EncoderKind::gru, true, 8);
    cfg.epochs = 15;
    cfg.batch = 2;
    cfg.lr = 0.02;
    auto r = train_encoder(cfg, toy_groups(), table);
    ASSERT_EQ(r.report.epochs.size(), 15u);
    EXPECT_LT(r.report.epochs.back().mean_loss, r.report.epochs.front().mean_loss);
}

TEST(Training, EmptyPositivesRejected) {
    auto table = random_table(14, 4, 6);
    auto groups = toy_groups();
    groups[2].positives.clear();
    EXPECT_THROW(train_encoder(small_config(EncoderKind::gru, true), groups, table), ArgumentError);
}

TEST(Persistence, SaveLoadKeepsScores) {
    test::TempDir dir("encoder");
    auto table = random_table(14, 4, 6);
    auto cfg = small_config(EncoderKind::rcnn, true);
    cfg.train_embeddings = true;
    EncoderModel model(cfg, table);
    model.init(12);
    save_encoder(dir / "m", model);
    auto loaded = load_encoder(dir / "m", table);
    EXPECT_EQ(loaded.config().to_json(), model.config().to_json());
    const Tokens p = {"w1", "w2", "w3"}, q = {"w4", "w2"};
    EXPECT_NEAR(loaded.similarity(p, q), model.similarity(p, q), 1e-6);

    // A loaded model saves to the same bytes.
    save_encoder(dir / "again", loaded);
    EXPECT_EQ(test::read_file(dir / "m" / "tensors.bin"), test::read_file(dir / "again" / "tensors.bin"));
}

TEST(Ranking, GroupsAreRankedBySimilarity) {
    auto table = random_table(14, 4, 6);
    EncoderModel model(small_config(EncoderKind::gru, true), table);
    model.init(1);
    const auto groups = toy_groups();
    const auto run = rank_groups(model, groups);
    ASSERT_EQ(run.size(), groups.size());
    for (std::size_t i = 0; i < run.size(); ++i) {
        EXPECT_EQ(run[i].ranked.size(), 3u);
        for (std::size_t j = 1; j < run[i].ranked.size(); ++j) {
            EXPECT_GE(run[i].ranked[j - 1].score, run[i].ranked[j].score);
        }
        const auto& top = run[i].ranked.front();
        const Question* cand = nullptr;
        for (const auto* list : {&groups[i].positives, &groups[i].negatives}) {
            for (const auto& c : *list) {
                if (c.id == top.id) {
                    cand = &c;
                }
            }
        }
        ASSERT_NE(cand, nullptr);
        EXPECT_NEAR(top.score, model.similarity(groups[i].query.tokens, cand->tokens), 1e-15);
    }
}

TEST(Config, JsonRoundTripAndValidation) {
    EncoderConfig c = small_config(EncoderKind::rcnn, false);
    c.pair_mode = PairMode::independent;
    c.rcnn_width = 3;
    const auto back = EncoderConfig::from_json(nlohmann::json::parse(c.to_json().dump()));
    EXPECT_EQ(back.to_json(), c.to_json());
    EncoderConfig bad = c;
    bad.dropout_keep = 0.0;
    EXPECT_THROW(bad.validate(), ConfigError);
    EncoderConfig attentive_without_attention = small_config(EncoderKind::gru, false);
    attentive_without_attention.pair_mode = PairMode::attentive;
    EXPECT_THROW(attentive_without_attention.validate(), ConfigError);
}

}  // namespace
}  // namespace sqm
