#include "sqm/taxonomy.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sqm/checkpoint.hpp"
#include "sqm/error.hpp"
#include "sqm/optim.hpp"
#include "sqm/rng.hpp"

namespace sqm {

TaxonomyHead parse_taxonomy_head(std::string_view name) {
    if (name == "coarse") {
        return TaxonomyHead::coarse;
    }
    if (name == "fine") {
        return TaxonomyHead::fine;
    }
    throw ArgumentError("unknown taxonomy head '" + std::string(name) + "' (expected coarse or fine)");
}

const char* to_string(TaxonomyHead head) noexcept { return head == TaxonomyHead::coarse ? "coarse" : "fine"; }

LabelSet::LabelSet(std::vector<FineLabel> fine) : fine_(std::move(fine)) {
    for (std::size_t i = 0; i < fine_.size(); ++i) {
        const auto& f = fine_[i];
        for (std::size_t j = 0; j < i; ++j) {
            if (fine_[j] == f) {
                throw DataError("duplicate fine label " + f.qualified());
            }
        }
        auto c = find_coarse(f.coarse);
        if (!c) {
            coarse_.push_back(f.coarse);
            c = coarse_.size() - 1;
        }
        fine_coarse_.push_back(*c);
    }
}

std::vector<std::string> LabelSet::labels(TaxonomyHead head) const {
    if (head == TaxonomyHead::coarse) {
        return coarse_;
    }
    std::vector<std::string> out;
    out.reserve(fine_.size());
    for (const auto& f : fine_) {
        out.push_back(f.qualified());
    }
    return out;
}

std::optional<std::size_t> LabelSet::find_coarse(std::string_view name) const {
    for (std::size_t i = 0; i < coarse_.size(); ++i) {
        if (coarse_[i] == name) {
            return i;
        }
    }
    return std::nullopt;
}

std::optional<std::size_t> LabelSet::find_fine(std::string_view coarse, std::string_view name) const {
    for (std::size_t i = 0; i < fine_.size(); ++i) {
        if (fine_[i].coarse == coarse && fine_[i].name == name) {
            return i;
        }
    }
    return std::nullopt;
}

std::size_t LabelSet::fine_count(std::string_view coarse) const {
    std::size_t n = 0;
    for (const auto& f : fine_) {
        if (f.coarse == coarse) {
            ++n;
        }
    }
    return n;
}

std::size_t LabelSet::gold_index(const Question& q, TaxonomyHead head) const {
    if (!q.coarse) {
        throw DataError("question " + q.id + " has no coarse label");
    }
    if (head == TaxonomyHead::coarse) {
        if (auto i = find_coarse(*q.coarse)) {
            return *i;
        }
        throw DataError("question " + q.id + " has coarse label '" + *q.coarse + "' outside the label set");
    }
    if (!q.fine) {
        throw DataError("question " + q.id + " has no fine label");
    }
    if (auto i = find_fine(*q.coarse, *q.fine)) {
        return *i;
    }
    throw DataError("question " + q.id + " has fine label '" + *q.coarse + ":" + *q.fine +
                    "' outside the label set");
}

LabelSet read_labelset(std::istream& in, const std::string& source) {
    std::vector<FineLabel> fine;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty() || line.front() == '#') {
            continue;
        }
        auto tab = line.find('\t');
        if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
            throw FormatError(source, line_no, "expected 'coarse<TAB>fine'");
        }
        FineLabel f{line.substr(0, tab), line.substr(tab + 1)};
        if (f.coarse.empty() || f.name.empty()) {
            throw FormatError(source, line_no, "empty label");
        }
        for (const auto& existing : fine) {
            if (existing == f) {
                throw FormatError(source, line_no, "duplicate fine label " + f.qualified());
            }
        }
        fine.push_back(std::move(f));
    }
    if (fine.empty()) {
        throw FormatError(source, 0, "label set is empty");
    }
    return LabelSet(std::move(fine));
}

LabelSet load_labelset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open label set " + path.string());
    }
    return read_labelset(in, path.string());
}

std::filesystem::path default_labelset_path() { return std::filesystem::path(SQM_DATA_DIR) / "taxonomy_labels.tsv"; }

void TaxonomyConfig::validate() const {
    if (filters == 0 || width == 0 || hidden == 0 || ff_hidden == 0) {
        throw ConfigError("taxonomy sizes (filters, width, hidden, ff_hidden) must be >= 1");
    }
    if (!(dropout_keep > 0.0 && dropout_keep <= 1.0)) {
        throw ConfigError("dropout_keep must be in (0, 1], got " + std::to_string(dropout_keep));
    }
    if (batch == 0) {
        throw ConfigError("batch must be >= 1");
    }
    if (!(lr > 0.0)) {
        throw ConfigError("learning rate must be positive");
    }
}

nlohmann::ordered_json TaxonomyConfig::to_json() const {
    nlohmann::ordered_json j;
    j["filters"] = filters;
    j["width"] = width;
    j["hidden"] = hidden;
    j["ff_hidden"] = ff_hidden;
    j["lr"] = lr;
    j["dropout_keep"] = dropout_keep;
    j["epochs"] = epochs;
    j["batch"] = batch;
    j["seed"] = seed;
    j["init_scale"] = init_scale;
    j["clip_norm"] = clip_norm;
    return j;
}

TaxonomyConfig TaxonomyConfig::from_json(const nlohmann::json& j) {
    TaxonomyConfig c;
    try {
        c.filters = j.value("filters", c.filters);
        c.width = j.value("width", c.width);
        c.hidden = j.value("hidden", c.hidden);
        c.ff_hidden = j.value("ff_hidden", c.ff_hidden);
        c.lr = j.value("lr", c.lr);
        c.dropout_keep = j.value("dropout_keep", c.dropout_keep);
        c.epochs = j.value("epochs", c.epochs);
        c.batch = j.value("batch", c.batch);
        c.seed = j.value("seed", c.seed);
        c.init_scale = j.value("init_scale", c.init_scale);
        c.clip_norm = j.value("clip_norm", c.clip_norm);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad taxonomy config: ") + e.what());
    }
    return c;
}

std::ptrdiff_t window_start(std::size_t t, std::size_t width) {
    const auto left = static_cast<std::ptrdiff_t>(width / 2);
    return static_cast<std::ptrdiff_t>(t) - left;
}

TaxonomyModel::TaxonomyModel(TaxonomyConfig config, std::shared_ptr<const EmbeddingTable> table, TaxonomyHead head,
                             std::vector<std::string> labels)
    : config_(std::move(config)), table_(std::move(table)), head_(head), labels_(std::move(labels)) {
    config_.validate();
    if (!table_) {
        throw ArgumentError("taxonomy model needs an embedding table");
    }
    if (labels_.empty()) {
        throw ArgumentError("taxonomy model needs at least one label");
    }
    const std::size_t d = table_->dim();
    const std::size_t k = config_.filters;
    for (std::size_t j = 0; j < config_.width; ++j) {
        conv_.emplace_back("taxonomy.conv.F_" + std::to_string(j + 1), Tensor({k, d}));
    }
    forward_ = GruCell("taxonomy.gru_fwd", k, config_.hidden);
    backward_ = GruCell("taxonomy.gru_bwd", k, config_.hidden);
    w_ff_ = Parameter("taxonomy.ff.W", Tensor({config_.ff_hidden, 2 * config_.hidden}));
    b_ff_ = Parameter("taxonomy.ff.b", Tensor({config_.ff_hidden}));
    w_out_ = Parameter("taxonomy.out.W", Tensor({labels_.size(), config_.ff_hidden}));
    b_out_ = Parameter("taxonomy.out.b", Tensor({labels_.size()}));
}

ParameterList TaxonomyModel::parameters() {
    ParameterList out;
    for (auto& f : conv_) {
        out.push_back(&f);
    }
    for (auto* p : forward_.parameters()) {
        out.push_back(p);
    }
    for (auto* p : backward_.parameters()) {
        out.push_back(p);
    }
    out.insert(out.end(), {&w_ff_, &b_ff_, &w_out_, &b_out_});
    return out;
}

void TaxonomyModel::init(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "taxonomy.init"));
    for (auto* p : parameters()) {
        init_uniform(*p, rng, config_.init_scale);
    }
}

template <typename Self>
Var TaxonomyModel::logits_impl(Self& self, Tape& tape, std::span<const std::string> tokens, Rng* dropout) {
    std::size_t n = tokens.size();
    while (n > 0 && tokens[n - 1] == "<pad>") {
        --n;
    }
    if (n == 0) {
        throw ArgumentError("cannot classify a question without tokens");
    }
    const std::size_t m = self.conv_.size();
    std::vector<Tensor> cols;
    cols.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
        cols.push_back(self.table_->lookup(tokens[t]));
    }
    Var x = tape.constant(stack_columns(cols));
    if (dropout != nullptr && self.config_.dropout_keep < 1.0) {
        const double keep = self.config_.dropout_keep;
        Tensor mask(x.shape());
        for (auto& v : mask.values()) {
            v = dropout->bernoulli(keep) ? 1.0 / keep : 0.0;
        }
        x = ad::mul(x, tape.constant(std::move(mask)));
    }

    std::vector<Var> fx;
    for (auto& f : self.conv_) {
        fx.push_back(ad::matmul(tape.param(f), x));
    }
    const auto len = static_cast<std::ptrdiff_t>(n);
    auto in_window = [&](std::size_t t, std::size_t j, std::ptrdiff_t& s) {
        s = window_start(t, m) + static_cast<std::ptrdiff_t>(j);
        return s >= 0 && s < len;
    };
    std::vector<Var> conv(n);
    for (std::size_t t = 0; t < n; ++t) {
        Var acc;
        for (std::size_t j = 0; j < m; ++j) {
            std::ptrdiff_t s = 0;
            if (!in_window(t, j, s)) {
                continue;  // zero padding
            }
            Var term = ad::column(fx[j], static_cast<std::size_t>(s));
            acc = acc.valid() ? ad::add(acc, term) : term;
        }
        conv[t] = ad::tanh(acc);
    }
    std::vector<Var> pooled(n);
    for (std::size_t t = 0; t < n; ++t) {
        Var best;
        for (std::size_t j = 0; j < m; ++j) {
            std::ptrdiff_t s = 0;
            if (!in_window(t, j, s)) {
                continue;
            }
            Var c = conv[static_cast<std::size_t>(s)];
            best = best.valid() ? ad::maximum(best, c) : c;
        }
        pooled[t] = best;
    }
    Var seq = ad::stack_columns(pooled);
    Var fw = self.forward_.run(tape, seq);
    Var bw = self.backward_.run(tape, seq, true);
    std::vector<Var> ends{ad::column(fw, n - 1), ad::column(bw, 0)};
    Var h = ad::concat(ends);
    Var z = ad::tanh(ad::add(ad::matmul(tape.param(self.w_ff_), h), tape.param(self.b_ff_)));
    return ad::add(ad::matmul(tape.param(self.w_out_), z), tape.param(self.b_out_));
}

Var TaxonomyModel::logits(Tape& tape, std::span<const std::string> tokens, Rng* dropout) {
    return logits_impl(*this, tape, tokens, dropout);
}

Var TaxonomyModel::logits(Tape& tape, std::span<const std::string> tokens) const {
    return logits_impl(*this, tape, tokens, nullptr);
}

TaxonomyPrediction TaxonomyModel::classify(std::span<const std::string> tokens) const {
    Tape tape(false);
    Tensor probs = softmax(logits(tape, tokens).value());
    TaxonomyPrediction p;
    p.distribution.assign(probs.values().begin(), probs.values().end());
    for (std::size_t i = 1; i < p.distribution.size(); ++i) {
        if (p.distribution[i] > p.distribution[p.index]) {
            p.index = i;
        }
    }
    p.label = labels_[p.index];
    p.probability = p.distribution[p.index];
    return p;
}

nlohmann::ordered_json TaxonomyTrainReport::to_json() const {
    nlohmann::ordered_json j;
    j["epochs"] = nlohmann::ordered_json::array();
    for (const auto& e : epochs) {
        nlohmann::ordered_json ej;
        ej["epoch"] = e.epoch;
        ej["mean_loss"] = e.mean_loss;
        ej["train_accuracy"] = e.train_accuracy;
        ej["train_macro_f1"] = e.train_macro_f1;
        ej["dev_accuracy"] = e.dev_accuracy ? nlohmann::ordered_json(*e.dev_accuracy) : nlohmann::ordered_json();
        ej["dev_macro_f1"] = e.dev_macro_f1 ? nlohmann::ordered_json(*e.dev_macro_f1) : nlohmann::ordered_json();
        j["epochs"].push_back(ej);
    }
    j["steps"] = steps;
    return j;
}

namespace {

ClassificationReport evaluate_gold(const TaxonomyModel& model, std::span<const Question> questions,
                                   std::span<const std::size_t> gold) {
    std::vector<std::size_t> predicted;
    predicted.reserve(questions.size());
    for (const auto& q : questions) {
        predicted.push_back(model.classify(q.tokens).index);
    }
    return classification_report(gold, predicted, model.labels().size());
}

std::vector<std::size_t> gold_indices(std::span<const Question> questions, const LabelSet& labelset,
                                      TaxonomyHead head) {
    std::vector<std::size_t> gold;
    gold.reserve(questions.size());
    for (const auto& q : questions) {
        gold.push_back(labelset.gold_index(q, head));
    }
    return gold;
}

}  // namespace

TaxonomyTrainResult train_classifier(const TaxonomyConfig& config, std::span<const Question> train,
                                     std::shared_ptr<const EmbeddingTable> table, const LabelSet& labelset,
                                     TaxonomyHead head, std::span<const Question> dev,
                                     const TaxonomyEpochCallback& on_epoch) {
    if (train.empty()) {
        throw ArgumentError("no training questions");
    }
    const auto gold = gold_indices(train, labelset, head);
    const auto dev_gold = gold_indices(dev, labelset, head);
    TaxonomyModel model(config, std::move(table), head, labelset.labels(head));
    model.init(config.seed);
    TaxonomyTrainReport report;
    {
        auto params = model.parameters();
        Adam adam(params, AdamConfig{config.lr});
        Rng order_rng(derive_seed(config.seed, "taxonomy.shuffle"));
        Rng dropout_rng(derive_seed(config.seed, "taxonomy.dropout"));
        Rng* dropout = config.dropout_keep < 1.0 ? &dropout_rng : nullptr;
        std::vector<std::size_t> order(train.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
            order_rng.shuffle(std::span<std::size_t>(order));
            double total = 0.0;
            for (std::size_t start = 0; start < order.size(); start += config.batch) {
                const std::size_t end = std::min(order.size(), start + config.batch);
                const double inv = 1.0 / static_cast<double>(end - start);
                zero_grads(params);
                for (std::size_t i = start; i < end; ++i) {
                    Tape tape;
                    const std::size_t idx = order[i];
                    Var loss = ad::softmax_cross_entropy(model.logits(tape, train[idx].tokens, dropout), gold[idx]);
                    const double value = loss.value().item();
                    if (!std::isfinite(value)) {
                        throw TrainingError("taxonomy loss diverged at epoch " + std::to_string(epoch) + ", step " +
                                            std::to_string(report.steps + 1));
                    }
                    total += value;
                    tape.backward(ad::scale(loss, inv));
                }
                const double norm = clip_grad_norm(params, config.clip_norm);
                if (!std::isfinite(norm)) {
                    throw TrainingError("taxonomy gradient diverged at epoch " + std::to_string(epoch) + ", step " +
                                        std::to_string(report.steps + 1));
                }
                adam.step();
                ++report.steps;
            }
            TaxonomyEpoch e;
            e.epoch = epoch;
            e.mean_loss = total / static_cast<double>(train.size());
            const auto train_report = evaluate_gold(model, train, gold);
            e.train_accuracy = train_report.accuracy;
            e.train_macro_f1 = train_report.macro_f1;
            if (!dev.empty()) {
                const auto dev_report = evaluate_gold(model, dev, dev_gold);
                e.dev_accuracy = dev_report.accuracy;
                e.dev_macro_f1 = dev_report.macro_f1;
            }
            report.epochs.push_back(e);
            if (on_epoch && !on_epoch(model, e)) {
                break;
            }
        }
    }
    return {std::move(model), std::move(report)};
}

ClassificationReport evaluate_classifier(const TaxonomyModel& model, std::span<const Question> questions,
                                         const LabelSet& labelset) {
    if (model.labels() != labelset.labels(model.head())) {
        throw DataError("classifier labels do not match the label set");
    }
    const auto gold = gold_indices(questions, labelset, model.head());
    return evaluate_gold(model, questions, gold);
}

void save_taxonomy(const std::filesystem::path& dir, TaxonomyModel& model) {
    save_checkpoint(dir, snapshot(model.parameters()));
    nlohmann::ordered_json j;
    j["type"] = "taxonomy";
    j["head"] = to_string(model.head());
    j["labels"] = model.labels();
    j["embedding_dim"] = model.table().dim();
    j["config"] = model.config().to_json();
    std::ofstream out(dir / "model.json");
    out << j.dump(2) << '\n';
    if (!out) {
        throw DataError("cannot write " + (dir / "model.json").string());
    }
}

TaxonomyModel load_taxonomy(const std::filesystem::path& dir, std::shared_ptr<const EmbeddingTable> table) {
    const auto path = dir / "model.json";
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
        if (j.value("type", std::string()) != "taxonomy") {
            throw FormatError(path.string(), 0, "not a taxonomy checkpoint");
        }
        TaxonomyModel model(TaxonomyConfig::from_json(j.at("config")), std::move(table),
                            parse_taxonomy_head(j.at("head").get<std::string>()),
                            j.at("labels").get<std::vector<std::string>>());
        restore(model.parameters(), load_checkpoint(dir));
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string(), 0, e.what());
    }
}

std::size_t taxonomy_feature_length(const LabelSet& labelset) {
    return 2 * (labelset.coarse().size() + labelset.fine().size()) + 2;
}

std::vector<double> taxonomy_features(const TaxonomyLabels& p, const TaxonomyLabels& q, const LabelSet& labelset) {
    const std::size_t nc = labelset.coarse().size();
    const std::size_t nf = labelset.fine().size();
    if (p.coarse >= nc || q.coarse >= nc || p.fine >= nf || q.fine >= nf) {
        throw ArgumentError("taxonomy label index outside the label set");
    }
    std::vector<double> out(taxonomy_feature_length(labelset), 0.0);
    out[p.coarse] = 1.0;
    out[nc + p.fine] = 1.0;
    out[nc + nf + q.coarse] = 1.0;
    out[2 * nc + nf + q.fine] = 1.0;
    out[2 * (nc + nf)] = p.coarse == q.coarse ? 1.0 : 0.0;
    out[2 * (nc + nf) + 1] = p.fine == q.fine ? 1.0 : 0.0;
    return out;
}

}  // namespace sqm
