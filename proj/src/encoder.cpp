#include "sqm/encoder.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <unordered_set>

#include "sqm/checkpoint.hpp"
#include "sqm/error.hpp"
#include "sqm/optim.hpp"
#include "sqm/rng.hpp"

namespace sqm {

EncoderKind parse_encoder_kind(std::string_view name) {
    if (name == "gru") {
        return EncoderKind::gru;
    }
    if (name == "rcnn") {
        return EncoderKind::rcnn;
    }
    throw ArgumentError("unknown encoder kind '" + std::string(name) + "' (expected gru or rcnn)");
}

const char* to_string(EncoderKind kind) noexcept { return kind == EncoderKind::gru ? "gru" : "rcnn"; }

PairMode parse_pair_mode(std::string_view name) {
    if (name == "attentive") {
        return PairMode::attentive;
    }
    if (name == "independent") {
        return PairMode::independent;
    }
    throw ArgumentError("unknown pair mode '" + std::string(name) + "' (expected attentive or independent)");
}

const char* to_string(PairMode mode) noexcept {
    return mode == PairMode::attentive ? "attentive" : "independent";
}

PairMode EncoderConfig::effective_pair_mode() const {
    if (pair_mode) {
        return *pair_mode;
    }
    return attention ? PairMode::attentive : PairMode::independent;
}

void EncoderConfig::validate() const {
    if (d == 0) {
        throw ConfigError("encoder d must be >= 1");
    }
    if (!(dropout_keep > 0.0 && dropout_keep <= 1.0)) {
        throw ConfigError("dropout_keep must be in (0, 1], got " + std::to_string(dropout_keep));
    }
    if (kind == EncoderKind::rcnn && rcnn_width == 0) {
        throw ConfigError("rcnn_width must be >= 1");
    }
    if (batch == 0) {
        throw ConfigError("batch must be >= 1");
    }
    if (!(lr > 0.0)) {
        throw ConfigError("learning rate must be positive");
    }
    if (effective_pair_mode() == PairMode::attentive && !attention) {
        throw ConfigError("attentive pair mode requires attention");
    }
}

nlohmann::ordered_json EncoderConfig::to_json() const {
    nlohmann::ordered_json j;
    j["kind"] = to_string(kind);
    j["attention"] = attention;
    j["d"] = d;
    j["dropout_keep"] = dropout_keep;
    j["rcnn_width"] = rcnn_width;
    j["lr"] = lr;
    j["batch"] = batch;
    j["epochs"] = epochs;
    j["seed"] = seed;
    j["margin"] = margin;
    j["clip_norm"] = clip_norm;
    j["init_scale"] = init_scale;
    j["train_embeddings"] = train_embeddings;
    j["pair_mode"] = to_string(effective_pair_mode());
    return j;
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
    EncoderConfig c;
    try {
        c.kind = parse_encoder_kind(j.value("kind", std::string("gru")));
        c.attention = j.value("attention", c.attention);
        c.d = j.value("d", c.d);
        c.dropout_keep = j.value("dropout_keep", c.dropout_keep);
        c.rcnn_width = j.value("rcnn_width", c.rcnn_width);
        c.lr = j.value("lr", c.lr);
        c.batch = j.value("batch", c.batch);
        c.epochs = j.value("epochs", c.epochs);
        c.seed = j.value("seed", c.seed);
        c.margin = j.value("margin", c.margin);
        c.clip_norm = j.value("clip_norm", c.clip_norm);
        c.init_scale = j.value("init_scale", c.init_scale);
        c.train_embeddings = j.value("train_embeddings", c.train_embeddings);
        if (j.contains("pair_mode") && j["pair_mode"].is_string()) {
            c.pair_mode = parse_pair_mode(j["pair_mode"].get<std::string>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad encoder config: ") + e.what());
    }
    return c;
}

AttentionLayer::AttentionLayer(const std::string& prefix, std::size_t d)
    : w_h_(prefix + ".W_H", Tensor({d, d})), w_v_(prefix + ".W_v", Tensor({d, d})), w_(prefix + ".w", Tensor({d})) {}

template <typename Self>
std::vector<AttentionLayer::Result> AttentionLayer::attend_impl(Self& self, Tape& tape, Var states, Var others) {
    const std::size_t d = self.w_.value.size();
    const Tensor& h = states.value();
    const Tensor& o = others.value();
    if (h.rank() != 2 || h.rows() != d) {
        throw DimensionError("attention expects states [" + std::to_string(d) + ",n], got " + shape_string(h.shape()));
    }
    if (o.rows() != d) {
        throw DimensionError("attention expects token vectors of size " + std::to_string(d) + ", got " +
                             shape_string(o.shape()));
    }
    Var wh = ad::matmul(tape.param(self.w_h_), states);
    Var wv = ad::matmul(tape.param(self.w_v_), others);
    Var w = tape.param(self.w_);
    const std::size_t m = o.rank() == 2 ? o.cols() : 1;
    std::vector<Result> out;
    out.reserve(m);
    for (std::size_t j = 0; j < m; ++j) {
        Var vj = o.rank() == 2 ? ad::column(wv, j) : wv;
        Var c = ad::tanh(ad::add_column_broadcast(wh, vj));
        Var alpha = ad::softmax(ad::matmul(ad::transpose(c), w));
        out.push_back({alpha, ad::matmul(states, alpha)});
    }
    return out;
}

AttentionLayer::Result AttentionLayer::attend(Tape& tape, Var states, Var v) {
    return attend_impl(*this, tape, states, v).front();
}

AttentionLayer::Result AttentionLayer::attend(Tape& tape, Var states, Var v) const {
    return attend_impl(*this, tape, states, v).front();
}

std::vector<AttentionLayer::Result> AttentionLayer::attend_all(Tape& tape, Var states, Var others) {
    return attend_impl(*this, tape, states, others);
}

std::vector<AttentionLayer::Result> AttentionLayer::attend_all(Tape& tape, Var states, Var others) const {
    return attend_impl(*this, tape, states, others);
}

EncoderModel::EncoderModel(EncoderConfig config, std::shared_ptr<const EmbeddingTable> table)
    : config_(std::move(config)), table_(std::move(table)) {
    config_.validate();
    if (!table_) {
        throw ArgumentError("encoder needs an embedding table");
    }
    if (table_->dim() != config_.d) {
        throw DimensionError("embedding dimension " + std::to_string(table_->dim()) + " differs from encoder d=" +
                             std::to_string(config_.d));
    }
    const std::size_t d = config_.d;
    if (config_.kind == EncoderKind::gru) {
        gru_.emplace("encoder.gru", d, d);
    } else {
        rcnn_.emplace("encoder.rcnn", d, d, config_.rcnn_width);
    }
    if (config_.attention) {
        attention_.emplace("encoder.attention", d);
    }
    const bool learned_unk = table_->policy() == OovPolicy::learned_unk;
    if (config_.train_embeddings) {
        Tensor m({table_->vocab_size() + 1, d});
        std::copy(table_->matrix().values().begin(), table_->matrix().values().end(), m.values().begin());
        if (learned_unk) {
            for (std::size_t i = 0; i < d; ++i) {
                m.at(table_->vocab_size(), i) = table_->unk()[i];
            }
        }
        embedding_.emplace("encoder.embeddings", std::move(m));
    } else if (learned_unk) {
        unk_.emplace("encoder.unk", table_->unk());
    }
}

ParameterList EncoderModel::parameters() {
    ParameterList out;
    if (gru_) {
        out = gru_->parameters();
    } else {
        out = rcnn_->parameters();
    }
    if (attention_) {
        for (auto* p : attention_->parameters()) {
            out.push_back(p);
        }
    }
    if (embedding_) {
        out.push_back(&*embedding_);
    }
    if (unk_) {
        out.push_back(&*unk_);
    }
    return out;
}

void EncoderModel::init(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "encoder.init"));
    if (gru_) {
        gru_->init(rng, config_.init_scale);
    } else {
        rcnn_->init(rng, config_.init_scale);
    }
    if (attention_) {
        for (auto* p : attention_->parameters()) {
            init_uniform(*p, rng, config_.init_scale);
        }
    }
}

template <typename Self>
EncoderModel::Encoded EncoderModel::encode_impl(Self& self, Tape& tape, std::span<const std::string> tokens,
                                                Rng* dropout) {
    if (tokens.empty()) {
        throw ArgumentError("cannot encode an empty question");
    }
    const EmbeddingTable& table = *self.table_;
    const std::size_t d = self.config_.d;
    Var x;
    if (self.embedding_) {
        const std::size_t vocab = table.vocab_size();
        const std::size_t zero_row = vocab + 1;
        const bool learned = table.policy() == OovPolicy::learned_unk;
        std::vector<std::size_t> rows;
        rows.reserve(tokens.size());
        for (const auto& t : tokens) {
            auto idx = table.index_of(t);
            rows.push_back(idx ? *idx : (learned ? vocab : zero_row));
        }
        x = ad::gather_columns(tape.param(*self.embedding_), rows, zero_row);
    } else {
        std::vector<Var> cols;
        cols.reserve(tokens.size());
        for (const auto& t : tokens) {
            if (self.unk_ && !table.index_of(t)) {
                cols.push_back(tape.param(*self.unk_));
            } else {
                cols.push_back(tape.constant(table.lookup(t)));
            }
        }
        x = ad::stack_columns(cols);
    }
    if (dropout != nullptr && self.config_.dropout_keep < 1.0) {
        const double keep = self.config_.dropout_keep;
        Tensor mask({d, tokens.size()});
        for (auto& m : mask.values()) {
            m = dropout->bernoulli(keep) ? 1.0 / keep : 0.0;
        }
        x = ad::mul(x, tape.constant(std::move(mask)));
    }
    Var states = self.gru_ ? self.gru_->run(tape, x) : self.rcnn_->run(tape, x);
    return {x, states};
}

EncoderModel::Encoded EncoderModel::encode(Tape& tape, std::span<const std::string> tokens, Rng* dropout) {
    return encode_impl(*this, tape, tokens, dropout);
}

EncoderModel::Encoded EncoderModel::encode(Tape& tape, std::span<const std::string> tokens) const {
    return encode_impl(*this, tape, tokens, nullptr);
}

Var EncoderModel::pooled(const Encoded& e) const { return ad::mean_pool(e.states); }

template <typename Self>
EncoderModel::PairEncoded EncoderModel::pair_impl(Self& self, Tape& tape, const Encoded& p, const Encoded& q) {
    if (!self.attention_) {
        throw ContractError("pair encoding needs attention; use encode and pooled instead");
    }
    // q's states attended by each token of p give q's vector, and vice versa.
    auto over_q = self.attention_->attend_all(tape, q.states, p.inputs);
    auto over_p = self.attention_->attend_all(tape, p.states, q.inputs);
    PairEncoded out;
    std::vector<Var> rq;
    std::vector<Var> rp;
    for (const auto& a : over_q) {
        out.alpha_pq.push_back(a.alpha);
        rq.push_back(a.r);
    }
    for (const auto& a : over_p) {
        out.alpha_qp.push_back(a.alpha);
        rp.push_back(a.r);
    }
    out.vec_q = ad::average(rq);
    out.vec_p = ad::average(rp);
    return out;
}

EncoderModel::PairEncoded EncoderModel::encode_pair(Tape& tape, const Encoded& p, const Encoded& q) {
    return pair_impl(*this, tape, p, q);
}

EncoderModel::PairEncoded EncoderModel::encode_pair(Tape& tape, const Encoded& p, const Encoded& q) const {
    return pair_impl(*this, tape, p, q);
}

template <typename Self>
Var EncoderModel::score_impl(Self& self, Tape& tape, const Encoded& p, const Encoded& q, PairMode mode) {
    if (mode == PairMode::attentive) {
        auto pair = pair_impl(self, tape, p, q);
        return ad::cosine(pair.vec_p, pair.vec_q);
    }
    return ad::cosine(ad::mean_pool(p.states), ad::mean_pool(q.states));
}

Var EncoderModel::score(Tape& tape, const Encoded& p, const Encoded& q) {
    return score_impl(*this, tape, p, q, config_.effective_pair_mode());
}

Var EncoderModel::score(Tape& tape, const Encoded& p, const Encoded& q) const {
    return score_impl(*this, tape, p, q, config_.effective_pair_mode());
}

Var EncoderModel::score(Tape& tape, const Encoded& p, const Encoded& q, PairMode mode) const {
    if (mode == PairMode::attentive && !attention_) {
        throw ContractError("attentive scoring needs an encoder trained with attention");
    }
    return score_impl(*this, tape, p, q, mode);
}

EncoderModel::Encoding EncoderModel::encode(std::span<const std::string> tokens) const {
    Tape tape(false);
    auto e = encode(tape, tokens);
    return {e.states.value(), ad::mean_pool(e.states).value()};
}

EncoderModel::PairEncoding EncoderModel::encode_pair(std::span<const std::string> p,
                                                     std::span<const std::string> q) const {
    Tape tape(false);
    auto ep = encode(tape, p);
    auto eq = encode(tape, q);
    auto pair = encode_pair(tape, ep, eq);
    auto rows = [](const std::vector<Var>& alphas) {
        std::vector<Tensor> cols;
        for (const auto& a : alphas) {
            cols.push_back(a.value());
        }
        return transpose(stack_columns(cols));
    };
    return {pair.vec_p.value(), pair.vec_q.value(), rows(pair.alpha_pq), rows(pair.alpha_qp)};
}

double EncoderModel::similarity(std::span<const std::string> p, std::span<const std::string> q) const {
    return similarity(p, q, config_.effective_pair_mode());
}

double EncoderModel::similarity(std::span<const std::string> p, std::span<const std::string> q,
                                PairMode mode) const {
    if (mode == PairMode::attentive && !attention_) {
        throw ContractError("attentive similarity needs an encoder trained with attention");
    }
    Tape tape(false);
    auto ep = encode(tape, p);
    auto eq = encode(tape, q);
    double s = score_impl(*this, tape, ep, eq, mode).value().item();
    return std::clamp(s, -1.0, 1.0);
}

double max_margin_loss(double positive, std::span<const double> negatives, double margin) {
    if (negatives.empty()) {
        throw ArgumentError("max-margin loss needs at least one negative");
    }
    double loss = 0.0;
    for (double n : negatives) {
        loss = std::max(loss, n - positive + margin);
    }
    return loss;
}

Var max_margin_loss(Tape& tape, Var positive, std::span<const Var> negatives, double margin) {
    if (negatives.empty()) {
        throw ArgumentError("max-margin loss needs at least one negative");
    }
    std::vector<Var> terms;
    terms.reserve(negatives.size() + 1);
    // The positive itself contributes f(p+) - f(p+) + 0.
    terms.push_back(tape.constant(Tensor::scalar(0.0)));
    Var m = tape.constant(Tensor::scalar(margin));
    for (const auto& n : negatives) {
        terms.push_back(ad::add(ad::sub(n, positive), m));
    }
    return ad::max_of(terms);
}

Var group_loss(Tape& tape, EncoderModel& model, const RankingGroup& group, double margin, Rng* dropout) {
    if (group.positives.empty()) {
        throw ArgumentError("ranking group " + group.query.id + " has no positive");
    }
    if (group.negatives.empty()) {
        throw ArgumentError("ranking group " + group.query.id + " has no negative");
    }
    auto q = model.encode(tape, group.query.tokens, dropout);
    std::vector<Var> negatives;
    for (const auto& n : group.negatives) {
        auto e = model.encode(tape, n.tokens, dropout);
        negatives.push_back(model.score(tape, q, e));
    }
    std::vector<Var> losses;
    for (const auto& p : group.positives) {
        auto e = model.encode(tape, p.tokens, dropout);
        losses.push_back(max_margin_loss(tape, model.score(tape, q, e), negatives, margin));
    }
    return losses.size() == 1 ? losses.front() : ad::average(losses);
}

RankingRun rank_groups(const EncoderModel& model, std::span<const RankingGroup> groups,
                       std::optional<PairMode> mode) {
    const PairMode effective = mode.value_or(model.config().effective_pair_mode());
    if (effective == PairMode::attentive && !model.config().attention) {
        throw ContractError("attentive ranking needs an encoder trained with attention");
    }
    RankingRun run;
    run.reserve(groups.size());
    for (const auto& g : groups) {
        Tape tape(false);
        auto q = model.encode(tape, g.query.tokens);
        std::vector<ScoredCandidate> scored;
        std::set<std::string> relevant;
        std::unordered_set<std::string> seen;
        auto add = [&](const Question& c) {
            if (!seen.insert(c.id).second) {
                return;
            }
            auto e = model.encode(tape, c.tokens);
            double s = std::clamp(model.score(tape, q, e, effective).value().item(), -1.0, 1.0);
            scored.push_back({c.id, s});
        };
        for (const auto& p : g.positives) {
            add(p);
            relevant.insert(p.id);
        }
        for (const auto& n : g.negatives) {
            add(n);
        }
        run.push_back(make_query_ranking(g.query.id, std::move(scored), std::move(relevant)));
    }
    return run;
}

nlohmann::ordered_json EncoderTrainReport::to_json() const {
    nlohmann::ordered_json j;
    j["epochs"] = nlohmann::ordered_json::array();
    for (const auto& e : epochs) {
        nlohmann::ordered_json ej;
        ej["epoch"] = e.epoch;
        ej["mean_loss"] = e.mean_loss;
        ej["dev_mrr"] = e.dev_mrr ? nlohmann::ordered_json(*e.dev_mrr) : nlohmann::ordered_json();
        ej["dev_recall@1"] = e.dev_recall1 ? nlohmann::ordered_json(*e.dev_recall1) : nlohmann::ordered_json();
        j["epochs"].push_back(ej);
    }
    j["best_epoch"] = best_epoch;
    j["best_dev_mrr"] = best_dev_mrr ? nlohmann::ordered_json(*best_dev_mrr) : nlohmann::ordered_json();
    j["steps"] = steps;
    return j;
}

EncoderTrainResult train_encoder(const EncoderConfig& config, std::span<const RankingGroup> train,
                                 std::shared_ptr<const EmbeddingTable> table, std::span<const RankingGroup> dev,
                                 const EncoderEpochCallback& on_epoch) {
    if (train.empty()) {
        throw ArgumentError("no training groups");
    }
    for (const auto& g : train) {
        if (g.positives.empty() || g.negatives.empty()) {
            throw ArgumentError("training group " + g.query.id + " needs at least one positive and one negative");
        }
    }
    EncoderModel model(config, std::move(table));
    model.init(config.seed);
    EncoderTrainReport report;
    {
        auto params = model.parameters();
        Adam adam(params, AdamConfig{config.lr});
        Rng order_rng(derive_seed(config.seed, "encoder.shuffle"));
        Rng dropout_rng(derive_seed(config.seed, "encoder.dropout"));
        Rng* dropout = config.dropout_keep < 1.0 ? &dropout_rng : nullptr;
        std::vector<std::size_t> order(train.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::vector<NamedTensor> best;

        for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
            order_rng.shuffle(std::span<std::size_t>(order));
            double total = 0.0;
            for (std::size_t start = 0; start < order.size(); start += config.batch) {
                const std::size_t end = std::min(order.size(), start + config.batch);
                const double inv = 1.0 / static_cast<double>(end - start);
                zero_grads(params);
                for (std::size_t i = start; i < end; ++i) {
                    Tape tape;
                    Var loss = group_loss(tape, model, train[order[i]], config.margin, dropout);
                    const double value = loss.value().item();
                    if (!std::isfinite(value)) {
                        throw TrainingError("encoder loss diverged at epoch " + std::to_string(epoch) + ", step " +
                                            std::to_string(report.steps + 1));
                    }
                    total += value;
                    tape.backward(ad::scale(loss, inv));
                }
                const double norm = clip_grad_norm(params, config.clip_norm);
                if (!std::isfinite(norm)) {
                    throw TrainingError("encoder gradient diverged at epoch " + std::to_string(epoch) + ", step " +
                                        std::to_string(report.steps + 1));
                }
                adam.step();
                ++report.steps;
            }
            EncoderEpoch e;
            e.epoch = epoch;
            e.mean_loss = total / static_cast<double>(train.size());
            if (!dev.empty()) {
                auto run = rank_groups(model, dev);
                e.dev_mrr = mean_reciprocal_rank(run);
                e.dev_recall1 = recall_at_k(run, 1);
                if (!report.best_dev_mrr || *e.dev_mrr > *report.best_dev_mrr) {
                    report.best_dev_mrr = e.dev_mrr;
                    report.best_epoch = epoch;
                    best = snapshot(params);
                }
            } else {
                report.best_epoch = epoch;
            }
            report.epochs.push_back(e);
            if (on_epoch) {
                on_epoch(model, e);
            }
        }
        if (!best.empty() && report.best_epoch != config.epochs) {
            restore(params, best);
        }
    }
    return {std::move(model), std::move(report)};
}

void save_encoder(const std::filesystem::path& dir, EncoderModel& model) {
    save_checkpoint(dir, snapshot(model.parameters()));
    nlohmann::ordered_json j;
    j["type"] = "encoder";
    j["config"] = model.config().to_json();
    j["vocab_size"] = model.table().vocab_size();
    j["oov_policy"] = to_string(model.table().policy());
    std::ofstream out(dir / "model.json");
    out << j.dump(2) << '\n';
    if (!out) {
        throw DataError("cannot write " + (dir / "model.json").string());
    }
}

namespace {

nlohmann::json read_model_json(const std::filesystem::path& dir, const std::string& expected_type) {
    const auto path = dir / "model.json";
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string(), 0, e.what());
    }
    if (j.value("type", std::string()) != expected_type) {
        throw FormatError(path.string(), 0, "not a " + expected_type + " checkpoint");
    }
    return j;
}

}  // namespace

EncoderModel load_encoder(const std::filesystem::path& dir, std::shared_ptr<const EmbeddingTable> table) {
    auto j = read_model_json(dir, "encoder");
    EncoderModel model(EncoderConfig::from_json(j.at("config")), std::move(table));
    restore(model.parameters(), load_checkpoint(dir));
    return model;
}

nlohmann::ordered_json attention_dump(const EncoderModel& model, std::span<const std::string> p,
                                      std::span<const std::string> q) {
    auto pair = model.encode_pair(p, q);
    nlohmann::ordered_json j;
    j["tokens_p"] = std::vector<std::string>(p.begin(), p.end());
    j["tokens_q"] = std::vector<std::string>(q.begin(), q.end());
    j["alpha"] = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < pair.alpha_pq.rows(); ++r) {
        std::vector<double> row;
        for (std::size_t c = 0; c < pair.alpha_pq.cols(); ++c) {
            row.push_back(pair.alpha_pq.at(r, c));
        }
        j["alpha"].push_back(row);
    }
    return j;
}

}  // namespace sqm
