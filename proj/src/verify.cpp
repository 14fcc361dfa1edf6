#include "sqm/verify.hpp"

#include <chrono>

#include "sqm/corpus.hpp"
#include "sqm/encoder.hpp"
#include "sqm/error.hpp"
#include "sqm/rng.hpp"
#include "sqm/taxonomy.hpp"

namespace sqm {

std::shared_ptr<EmbeddingTable> random_table(std::size_t vocab, std::size_t dim, std::uint64_t seed, double scale) {
    Rng rng(seed);
    std::vector<std::string> tokens;
    Tensor m({vocab, dim});
    for (std::size_t i = 0; i < vocab; ++i) {
        tokens.push_back("w" + std::to_string(i));
    }
    for (auto& x : m.values()) {
        x = rng.uniform(-scale, scale);
    }
    return std::make_shared<EmbeddingTable>(std::move(tokens), std::move(m));
}

namespace {

Question random_question(Rng& rng, std::size_t vocab, std::size_t max_len, const std::string& id) {
    const std::size_t n = 2 + rng.below(max_len - 1);
    Question q;
    q.id = id;
    for (std::size_t i = 0; i < n; ++i) {
        q.tokens.push_back("w" + std::to_string(rng.below(vocab)));
    }
    return q;
}

template <typename Fn>
GradCheckCase timed(std::string name, Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    GradCheckCase c{std::move(name), fn(), 0.0};
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return c;
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(std::size_t d, std::size_t max_len, std::uint64_t seed,
                                               const GradCheckOptions& options) {
    if (d == 0 || max_len < 2) {
        throw ArgumentError("gradient check needs d >= 1 and questions of at least 2 tokens");
    }
    const std::size_t vocab = 12;
    auto table = random_table(vocab, d, derive_seed(seed, "gradcheck.table"));
    Rng rng(derive_seed(seed, "gradcheck.data"));
    RankingGroup group;
    group.query = random_question(rng, vocab, max_len, "q");
    group.positives.push_back(random_question(rng, vocab, max_len, "p"));
    group.negatives.push_back(random_question(rng, vocab, max_len, "n1"));
    group.negatives.push_back(random_question(rng, vocab, max_len, "n2"));

    std::vector<GradCheckCase> cases;
    auto encoder_case = [&](const std::string& name, EncoderKind kind, bool attention) {
        EncoderConfig cfg;
        cfg.kind = kind;
        cfg.attention = attention;
        cfg.d = d;
        cfg.dropout_keep = 1.0;
        cfg.init_scale = 0.5;
        EncoderModel model(cfg, table);
        model.init(derive_seed(seed, name));
        // A large margin keeps a negative term active so every parameter gets gradient.
        const double margin = 10.0;
        cases.push_back(timed(name, [&] {
            return grad_check([&](Tape& tape) { return group_loss(tape, model, group, margin); },
                              model.parameters(), options);
        }));
    };
    encoder_case("gru", EncoderKind::gru, false);
    encoder_case("rcnn", EncoderKind::rcnn, false);
    encoder_case("gru+attention", EncoderKind::gru, true);
    encoder_case("rcnn+attention", EncoderKind::rcnn, true);

    TaxonomyConfig tcfg;
    tcfg.filters = 4;
    tcfg.width = 2;
    tcfg.hidden = 5;
    tcfg.ff_hidden = 6;
    tcfg.dropout_keep = 1.0;
    tcfg.init_scale = 0.5;
    std::vector<std::string> labels = {"a", "b", "c", "d", "e", "f"};
    TaxonomyModel classifier(tcfg, table, TaxonomyHead::coarse, labels);
    classifier.init(derive_seed(seed, "classifier"));
    const Question& q = group.query;
    cases.push_back(timed("cnn+bigru classifier", [&] {
        return grad_check([&](Tape& tape) { return ad::softmax_cross_entropy(classifier.logits(tape, q.tokens), 2); },
                          classifier.parameters(), options);
    }));
    return cases;
}

nlohmann::ordered_json to_json(const std::vector<GradCheckCase>& cases) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& c : cases) {
        nlohmann::ordered_json e;
        e["model"] = c.name;
        e["checked"] = c.report.checked;
        e["failures"] = c.report.failures.size();
        e["passed"] = c.report.passed();
        e["worst"] = {{"param", c.report.worst.param},
                      {"index", c.report.worst.index},
                      {"analytic", c.report.worst.analytic},
                      {"numeric", c.report.worst.numeric},
                      {"error", c.report.worst.error}};
        j.push_back(e);
    }
    return j;
}

}  // namespace sqm
