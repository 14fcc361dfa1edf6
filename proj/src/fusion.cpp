#include "sqm/fusion.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "sqm/checkpoint.hpp"
#include "sqm/error.hpp"
#include "sqm/rng.hpp"

namespace sqm {

FeatureFlags FeatureFlags::from_ablation(std::string_view ablation) {
    FeatureFlags f;
    std::size_t start = 0;
    while (start <= ablation.size()) {
        auto end = ablation.find(',', start);
        if (end == std::string_view::npos) {
            end = ablation.size();
        }
        auto item = ablation.substr(start, end - start);
        while (!item.empty() && item.front() == ' ') {
            item.remove_prefix(1);
        }
        while (!item.empty() && item.back() == ' ') {
            item.remove_suffix(1);
        }
        if (item == "-sim") {
            f.sim = false;
        } else if (item == "-CC") {
            f.coarse = false;
        } else if (item == "-FC") {
            f.fine = false;
        } else if (item == "-focus") {
            f.focus = false;
        } else if (!item.empty()) {
            throw ArgumentError("unknown ablation '" + std::string(item) + "' (expected -sim, -CC, -FC or -focus)");
        }
        start = end + 1;
    }
    return f;
}

std::string FeatureFlags::to_string() const {
    std::string out;
    auto add = [&](bool on, const char* name) {
        if (!on) {
            out += out.empty() ? name : std::string(",") + name;
        }
    };
    add(sim, "-sim");
    add(coarse, "-CC");
    add(fine, "-FC");
    add(focus, "-focus");
    return out;
}

std::size_t feature_length(const LabelSet& labelset) { return 2 + taxonomy_feature_length(labelset); }

std::vector<double> assemble_features(double sim, const TaxonomyLabels& p, const TaxonomyLabels& q, double fsim,
                                      const LabelSet& labelset, const FeatureFlags& flags) {
    const std::size_t nc = labelset.coarse().size();
    const std::size_t nf = labelset.fine().size();
    auto tax = taxonomy_features(p, q, labelset);
    if (!flags.coarse) {
        std::fill_n(tax.begin(), nc, 0.0);
        std::fill_n(tax.begin() + static_cast<std::ptrdiff_t>(nc + nf), nc, 0.0);
        tax[2 * (nc + nf)] = 0.0;
    }
    if (!flags.fine) {
        std::fill_n(tax.begin() + static_cast<std::ptrdiff_t>(nc), nf, 0.0);
        std::fill_n(tax.begin() + static_cast<std::ptrdiff_t>(2 * nc + nf), nf, 0.0);
        tax[2 * (nc + nf) + 1] = 0.0;
    }
    std::vector<double> out;
    out.reserve(tax.size() + 2);
    out.push_back(flags.sim ? sim : 0.0);
    out.insert(out.end(), tax.begin(), tax.end());
    out.push_back(flags.focus ? fsim : 0.0);
    return out;
}

nlohmann::ordered_json FeatureRecord::to_json() const {
    nlohmann::ordered_json j;
    j["id_p"] = id_p;
    j["id_q"] = id_q;
    j["sim"] = sim;
    j["coarse_p"] = coarse_p;
    j["fine_p"] = fine_p;
    j["coarse_q"] = coarse_q;
    j["fine_q"] = fine_q;
    j["focus_p"] = focus_p;
    j["focus_q"] = focus_q;
    j["fsim"] = fsim;
    j["features"] = features;
    return j;
}

namespace {

void check_taxonomy_model(const TaxonomyModel* model, TaxonomyHead head, const LabelSet& labelset) {
    if (model == nullptr) {
        return;
    }
    if (model->head() != head) {
        throw ContractError(std::string("expected a ") + to_string(head) + " taxonomy model");
    }
    if (model->labels() != labelset.labels(head)) {
        throw DataError(std::string(to_string(head)) + " taxonomy model labels do not match the label set");
    }
}

}  // namespace

FeatureBuilder::FeatureBuilder(FusionComponents components) : c_(components) {
    if (c_.labelset == nullptr) {
        throw ContractError("feature building needs a label set");
    }
    if (c_.flags.sim && c_.encoder == nullptr) {
        throw ContractError("the sim feature needs an encoder");
    }
    if (c_.flags.focus) {
        if (c_.parses == nullptr) {
            throw ContractError("the focus feature needs parses");
        }
        if (c_.focus_table == nullptr) {
            if (c_.encoder == nullptr) {
                throw ContractError("the focus feature needs word vectors");
            }
            c_.focus_table = &c_.encoder->table();
        }
    }
    check_taxonomy_model(c_.coarse_model, TaxonomyHead::coarse, *c_.labelset);
    check_taxonomy_model(c_.fine_model, TaxonomyHead::fine, *c_.labelset);
}

QuestionAnalysis FeatureBuilder::analyze(const Question& q) const {
    QuestionAnalysis a;
    if (c_.flags.coarse) {
        a.labels.coarse = c_.coarse_model ? c_.coarse_model->classify(q.tokens).index
                                          : c_.labelset->gold_index(q, TaxonomyHead::coarse);
    }
    if (c_.flags.fine) {
        a.labels.fine = c_.fine_model ? c_.fine_model->classify(q.tokens).index
                                      : c_.labelset->gold_index(q, TaxonomyHead::fine);
    }
    if (c_.flags.focus) {
        const std::string key = q.parse_ref.value_or(q.id);
        auto it = c_.parses->find(key);
        if (it == c_.parses->end()) {
            throw DataError("question " + q.id + " has no parse (looked up '" + key + "')");
        }
        a.focus = focus_tokens(it->second, extract_focus(it->second));
    }
    return a;
}

FeatureRecord FeatureBuilder::build(const Question& p, const Question& q) const {
    return build(p, analyze(p), q, analyze(q));
}

FeatureRecord FeatureBuilder::build(const Question& p, const QuestionAnalysis& ap, const Question& q,
                                    const QuestionAnalysis& aq) const {
    FeatureRecord r;
    r.id_p = p.id;
    r.id_q = q.id;
    if (c_.flags.sim) {
        r.sim = c_.encoder->similarity(p.tokens, q.tokens);
    }
    const LabelSet& ls = *c_.labelset;
    if (c_.flags.coarse) {
        r.coarse_p = ls.coarse()[ap.labels.coarse];
        r.coarse_q = ls.coarse()[aq.labels.coarse];
    }
    if (c_.flags.fine) {
        r.fine_p = ls.fine()[ap.labels.fine].qualified();
        r.fine_q = ls.fine()[aq.labels.fine].qualified();
    }
    if (c_.flags.focus) {
        auto join = [](const std::vector<std::string>& f) {
            return f.empty() ? std::string(unk_focus) : f.front();
        };
        r.focus_p = join(ap.focus);
        r.focus_q = join(aq.focus);
        r.fsim = focus_similarity(*c_.focus_table, ap.focus, aq.focus);
    }
    r.features = assemble_features(r.sim, ap.labels, aq.labels, r.fsim, ls, c_.flags);
    return r;
}

double LinearModel::margin(std::span<const double> x) const {
    if (x.size() != weights.size()) {
        throw DimensionError("feature length " + std::to_string(x.size()) + " differs from model length " +
                             std::to_string(weights.size()));
    }
    double m = bias;
    for (std::size_t i = 0; i < x.size(); ++i) {
        m += weights[i] * x[i];
    }
    return m;
}

PairLabel LinearModel::predict(std::span<const double> x) const {
    return margin(x) >= 0.0 ? PairLabel::match : PairLabel::no_match;
}

double hinge_objective(const LinearModel& model, std::span<const std::vector<double>> features,
                       std::span<const double> targets, double reg) {
    double norm2 = model.bias * model.bias;
    for (double w : model.weights) {
        norm2 += w * w;
    }
    double loss = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) {
        loss += std::max(0.0, 1.0 - targets[i] * model.margin(features[i]));
    }
    return 0.5 * reg * norm2 + (features.empty() ? 0.0 : loss / static_cast<double>(features.size()));
}

namespace {

LinearModel sgd_hinge(std::span<const std::vector<double>> x, std::span<const double> y, bool with_bias,
                      const LinearTrainConfig& config) {
    if (!(config.reg > 0.0)) {
        throw ArgumentError("regularization strength must be positive");
    }
    const std::size_t n = x.size();
    const std::size_t dim = x[0].size();
    for (const auto& row : x) {
        if (row.size() != dim) {
            throw DimensionError("feature vectors have differing lengths");
        }
    }
    LinearModel model;
    model.weights.assign(dim, 0.0);
    LinearModel best = model;
    double best_obj = hinge_objective(model, x, y, config.reg);

    Rng rng(derive_seed(config.seed, "fusion.linear"));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t t = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t i : order) {
            ++t;
            const double eta = 1.0 / (config.reg * static_cast<double>(t));
            const double m = y[i] * model.margin(x[i]);
            const double shrink = 1.0 - eta * config.reg;
            for (auto& w : model.weights) {
                w *= shrink;
            }
            if (with_bias) {
                model.bias *= shrink;
            }
            if (m < 1.0) {
                for (std::size_t j = 0; j < dim; ++j) {
                    model.weights[j] += eta * y[i] * x[i][j];
                }
                if (with_bias) {
                    model.bias += eta * y[i];
                }
            }
        }
        const double obj = hinge_objective(model, x, y, config.reg);
        if (obj < best_obj) {
            best_obj = obj;
            best = model;
        }
    }
    return best;
}

}  // namespace

LinearModel train_pair_classifier(std::span<const std::vector<double>> features, std::span<const PairLabel> labels,
                                  const LinearTrainConfig& config) {
    if (features.size() != labels.size()) {
        throw DimensionError(std::to_string(features.size()) + " feature vectors but " + std::to_string(labels.size()) +
                             " labels");
    }
    if (features.empty()) {
        throw ArgumentError("no training pairs");
    }
    std::vector<double> y;
    y.reserve(labels.size());
    bool has_match = false;
    bool has_no_match = false;
    for (auto l : labels) {
        const bool match = l == PairLabel::match;
        has_match |= match;
        has_no_match |= !match;
        y.push_back(match ? 1.0 : -1.0);
    }
    if (!has_match || !has_no_match) {
        throw DataError("pair classifier needs both match and no-match examples");
    }
    return sgd_hinge(features, y, true, config);
}

LinearModel train_pair_ranker(std::span<const std::vector<double>> better, std::span<const std::vector<double>> worse,
                              const LinearTrainConfig& config) {
    if (better.size() != worse.size()) {
        throw DimensionError("better and worse lists differ in length");
    }
    if (better.empty()) {
        throw ArgumentError("no ordered pairs to train on");
    }
    std::vector<std::vector<double>> deltas;
    deltas.reserve(better.size());
    for (std::size_t i = 0; i < better.size(); ++i) {
        if (better[i].size() != worse[i].size()) {
            throw DimensionError("feature vectors have differing lengths");
        }
        std::vector<double> d(better[i].size());
        for (std::size_t j = 0; j < d.size(); ++j) {
            d[j] = better[i][j] - worse[i][j];
        }
        deltas.push_back(std::move(d));
    }
    std::vector<double> y(deltas.size(), 1.0);
    return sgd_hinge(deltas, y, false, config);
}

double training_accuracy(const LinearModel& model, std::span<const std::vector<double>> features,
                         std::span<const PairLabel> labels) {
    if (features.empty()) {
        throw ArgumentError("no examples");
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (model.predict(features[i]) == labels[i]) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(features.size());
}

void save_linear(const std::filesystem::path& dir, const LinearModel& model, std::string_view kind,
                 const FeatureFlags& flags) {
    save_checkpoint(dir, {{"linear.weights", Tensor::vector(model.weights)}, {"linear.bias", Tensor::scalar(model.bias)}});
    nlohmann::ordered_json j;
    j["type"] = "linear";
    j["kind"] = kind;
    j["ablation"] = flags.to_string();
    std::ofstream out(dir / "model.json");
    out << j.dump(2) << '\n';
    if (!out) {
        throw DataError("cannot write " + (dir / "model.json").string());
    }
}

LoadedLinear load_linear(const std::filesystem::path& dir) {
    const auto path = dir / "model.json";
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    LoadedLinear out;
    try {
        nlohmann::json j;
        in >> j;
        if (j.value("type", std::string()) != "linear") {
            throw FormatError(path.string(), 0, "not a linear model checkpoint");
        }
        out.kind = j.value("kind", std::string());
        out.flags = FeatureFlags::from_ablation(j.value("ablation", std::string()));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string(), 0, e.what());
    }
    auto tensors = load_checkpoint(dir);
    for (const auto& t : tensors) {
        if (t.name == "linear.weights") {
            out.model.weights.assign(t.value.values().begin(), t.value.values().end());
        } else if (t.name == "linear.bias") {
            out.model.bias = t.value.item();
        }
    }
    if (out.model.weights.empty()) {
        throw FormatError(path.string(), 0, "linear model has no weights");
    }
    return out;
}

}  // namespace sqm
