#include "sqm/cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sqm/baselines.hpp"
#include "sqm/corpus.hpp"
#include "sqm/embeddings.hpp"
#include "sqm/encoder.hpp"
#include "sqm/error.hpp"
#include "sqm/eval.hpp"
#include "sqm/focus.hpp"
#include "sqm/fusion.hpp"
#include "sqm/rng.hpp"
#include "sqm/taxonomy.hpp"
#include "sqm/verify.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace sqm {

namespace {

struct CommonOptions {
    std::string out;
    std::uint64_t seed = 1;
};

struct TrainEncoderOptions {
    std::string train, dev, embeddings, oov = "zero", kind = "gru", pair_mode;
    bool attention = true;
    bool train_embeddings = false;
    std::size_t d = 0;
    double dropout_keep = 0.5;
    std::size_t rcnn_width = 2;
    double lr = 0.01;
    std::size_t batch = 50;
    std::size_t epochs = 30;
    double margin = 1.0;
};

struct TrainTaxonomyOptions {
    std::string train, dev, embeddings, labels, head = "coarse";
    std::size_t filters = 100, width = 2, hidden = 100, ff_hidden = 100;
    double lr = 0.01;
    double dropout_keep = 0.5;
    std::size_t epochs = 30;
    std::size_t batch = 50;
};

struct FocusOptions {
    std::string parses;
};

/// Options shared by the commands that build fused features.
struct FeatureOptions {
    std::string embeddings, oov = "zero", encoder, coarse_model, fine_model, labels, question_labels, parses, ablation;
};

struct MatchOptions {
    std::string pairs, classifier, train_pairs;
    std::size_t cv = 0;
    bool stratified = false;
    double reg = 1e-3;
    std::size_t svm_epochs = 100;
};

struct RankOptions {
    std::string groups, method = "encoder", embeddings, oov = "zero", encoder, pair_mode;
    std::vector<std::size_t> ks = {1, 3, 5};
    bool dump_attention = false;
    double k1 = 1.2, b = 0.75;
};

struct BaselineOptions {
    std::string method, pairs, dataset, thresholds;
    std::vector<std::string> corpus;
    double k1 = 1.2, b = 0.75;
};

struct PoqrOptions {
    std::vector<std::string> inputs;
    std::string features = "full", stats;
    std::size_t folds = 10;
    double reg = 1e-3;
    std::size_t svm_epochs = 100;
};

struct ClusterOptions {
    std::string pairs, vectors, embeddings, oov = "zero", encoder;
    std::vector<std::size_t> ks;
};

struct GradcheckOptions {
    std::size_t d = 8, max_len = 6, samples = 0;
    double eps = 1e-5, tol = 1e-4;
};

/// Output directory with the effective configuration and a timestamped log.
class Run {
public:
    Run(const std::string& out, const json& config, std::ostream& err) : dir_(out), err_(err) {
        fs::create_directories(dir_);
        write_json("config.echo.json", config);
        log_.open(dir_ / "run.log", std::ios::trunc);
        log("start " + config.value("subcommand", std::string()));
    }

    ~Run() { log("end"); }

    const fs::path& dir() const noexcept { return dir_; }

    void log(const std::string& message) {
        if (!log_) {
            return;
        }
        const auto now = std::chrono::system_clock::now();
        const std::time_t t = std::chrono::system_clock::to_time_t(now);
        std::tm tm{};
        gmtime_r(&t, &tm);
        log_ << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << ' ' << message << '\n';
        log_.flush();
    }

    void warn(const std::string& message) {
        err_ << "sqm: warning: " << message << '\n';
        log("warning: " + message);
    }

    void warn_all(const std::vector<std::string>& warnings) {
        for (const auto& w : warnings) {
            warn(w);
        }
    }

    void write_json(const std::string& name, const json& j) const {
        std::ofstream o(dir_ / name);
        o << j.dump(2) << '\n';
        if (!o) {
            throw DataError("cannot write " + (dir_ / name).string());
        }
    }

    std::ofstream open(const std::string& name) const {
        std::ofstream o(dir_ / name);
        if (!o) {
            throw DataError("cannot write " + (dir_ / name).string());
        }
        return o;
    }

private:
    fs::path dir_;
    std::ostream& err_;
    std::ofstream log_;
};

json effective_config(const CLI::App& sub) {
    json j;
    j["subcommand"] = sub.get_name();
    json opts = json::object();
    for (const CLI::Option* opt : sub.get_options()) {
        if (opt->get_name().empty() || opt->get_name() == "--help") {
            continue;
        }
        std::string name = opt->get_lnames().empty() ? opt->get_name() : opt->get_lnames().front();
        if (opt->get_items_expected_max() == 0) {
            opts[name] = opt->count() > 0;
        } else if (opt->count() > 0) {
            const auto& results = opt->results();
            if (opt->get_expected_max() > 1) {
                opts[name] = results;
            } else {
                opts[name] = results.back();
            }
        } else {
            opts[name] = opt->get_default_str();
        }
    }
    j["options"] = opts;
    return j;
}

std::shared_ptr<const EmbeddingTable> load_table(Run& run, const std::string& path, const std::string& oov) {
    auto loaded = load_text_embeddings(path, parse_oov_policy(oov));
    run.warn_all(loaded.warnings);
    run.log("embeddings: " + std::to_string(loaded.table.vocab_size()) + " tokens, dim " +
            std::to_string(loaded.table.dim()));
    return std::make_shared<const EmbeddingTable>(std::move(loaded.table));
}

LabelSet load_labels(const std::string& path) {
    return load_labelset(path.empty() ? default_labelset_path() : fs::path(path));
}

std::string format_double(double v) {
    std::ostringstream s;
    s << std::setprecision(6) << v;
    return s.str();
}

// ---------------------------------------------------------------- train-encoder

int cmd_train_encoder(const CommonOptions& c, const TrainEncoderOptions& o, const json& config, std::ostream& out,
                      std::ostream& err) {
    Run run(c.out, config, err);
    auto table = load_table(run, o.embeddings, o.oov);
    auto train = load_ranking_groups(o.train);
    run.warn_all(train.warnings);
    Loaded<RankingGroup> dev;
    if (!o.dev.empty()) {
        dev = load_ranking_groups(o.dev);
        run.warn_all(dev.warnings);
    }
    EncoderConfig cfg;
    cfg.kind = parse_encoder_kind(o.kind);
    cfg.attention = o.attention;
    cfg.d = o.d == 0 ? table->dim() : o.d;
    cfg.dropout_keep = o.dropout_keep;
    cfg.rcnn_width = o.rcnn_width;
    cfg.lr = o.lr;
    cfg.batch = o.batch;
    cfg.epochs = o.epochs;
    cfg.seed = c.seed;
    cfg.margin = o.margin;
    cfg.train_embeddings = o.train_embeddings;
    if (!o.pair_mode.empty()) {
        cfg.pair_mode = parse_pair_mode(o.pair_mode);
    }
    auto result = train_encoder(cfg, train.records, table, dev.records, [&](const EncoderModel&, const EncoderEpoch& e) {
        std::string line = "epoch " + std::to_string(e.epoch) + " loss " + format_double(e.mean_loss);
        if (e.dev_mrr) {
            line += " dev_mrr " + format_double(*e.dev_mrr);
        }
        run.log(line);
    });
    save_encoder(run.dir() / "model", result.model);
    json report;
    report["config"] = cfg.to_json();
    report["training"] = result.report.to_json();
    if (!dev.records.empty()) {
        auto m = evaluate_ranking(rank_groups(result.model, dev.records));
        run.warn_all(m.warnings);
        report["dev"] = m.to_json();
    }
    run.write_json("report.json", report);
    out << report["training"].dump() << '\n';
    return 0;
}

// ---------------------------------------------------------------- train-taxonomy

int cmd_train_taxonomy(const CommonOptions& c, const TrainTaxonomyOptions& o, const json& config, std::ostream& out,
                       std::ostream& err) {
    Run run(c.out, config, err);
    auto table = load_table(run, o.embeddings, "zero");
    auto labelset = load_labels(o.labels);
    const auto head = parse_taxonomy_head(o.head);
    auto train = load_labeled_questions(o.train);
    run.warn_all(train.warnings);
    Loaded<Question> dev;
    if (!o.dev.empty()) {
        dev = load_labeled_questions(o.dev);
        run.warn_all(dev.warnings);
    }
    TaxonomyConfig cfg;
    cfg.filters = o.filters;
    cfg.width = o.width;
    cfg.hidden = o.hidden;
    cfg.ff_hidden = o.ff_hidden;
    cfg.lr = o.lr;
    cfg.dropout_keep = o.dropout_keep;
    cfg.epochs = o.epochs;
    cfg.batch = o.batch;
    cfg.seed = c.seed;
    auto result = train_classifier(cfg, train.records, table, labelset, head, dev.records,
                                   [&](const TaxonomyModel&, const TaxonomyEpoch& e) {
                                       run.log("epoch " + std::to_string(e.epoch) + " loss " +
                                               format_double(e.mean_loss) + " train_acc " +
                                               format_double(e.train_accuracy));
                                       return true;
                                   });
    save_taxonomy(run.dir() / "model", result.model);
    const auto labels = labelset.labels(head);
    json report;
    report["head"] = to_string(head);
    report["config"] = cfg.to_json();
    report["training"] = result.report.to_json();
    report["train"] = evaluate_classifier(result.model, train.records, labelset).to_json(labels);
    if (!dev.records.empty()) {
        report["dev"] = evaluate_classifier(result.model, dev.records, labelset).to_json(labels);
    }
    run.write_json("report.json", report);
    out << json{{"train_accuracy", report["train"]["accuracy"]}, {"train_macro_f1", report["train"]["macro_f1"]}}.dump()
        << '\n';
    return 0;
}

// ---------------------------------------------------------------- focus

int cmd_focus(const CommonOptions& c, const FocusOptions& o, const json& config, std::ostream& out,
              std::ostream& err) {
    Run run(c.out, config, err);
    auto parses = load_conllu(o.parses);
    auto file = run.open("focus.jsonl");
    std::size_t unknown = 0;
    for (const auto& p : parses) {
        auto r = extract_focus(p);
        if (!r.focus) {
            ++unknown;
        }
        file << focus_report(p, r).dump() << '\n';
    }
    json summary{{"questions", parses.size()}, {"unknown_focus", unknown}};
    run.write_json("summary.json", summary);
    out << summary.dump() << '\n';
    return 0;
}

// ---------------------------------------------------------------- fused features

/// Gold taxonomy labels by question id: TSV id, coarse, fine.
std::map<std::string, std::pair<std::string, std::string>> load_question_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open question labels " + path);
    }
    std::map<std::string, std::pair<std::string, std::string>> out;
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
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, '\t')) {
            cols.push_back(col);
        }
        if (cols.size() != 3) {
            throw FormatError(path, line_no, "expected id, coarse and fine");
        }
        out[cols[0]] = {cols[1], cols[2]};
    }
    return out;
}

/// Loaded component models; FusionComponents borrows from here.
struct FeatureContext {
    std::shared_ptr<const EmbeddingTable> table;
    std::optional<EncoderModel> encoder;
    std::optional<TaxonomyModel> coarse;
    std::optional<TaxonomyModel> fine;
    LabelSet labelset;
    std::optional<ParseStore> parses;
    std::map<std::string, std::pair<std::string, std::string>> gold;
    FeatureFlags flags;

    FusionComponents components() const {
        FusionComponents c;
        c.encoder = encoder ? &*encoder : nullptr;
        c.coarse_model = coarse ? &*coarse : nullptr;
        c.fine_model = fine ? &*fine : nullptr;
        c.labelset = &labelset;
        c.parses = parses ? &*parses : nullptr;
        c.focus_table = table.get();
        c.flags = flags;
        return c;
    }

    void apply_gold(Question& q) const {
        auto it = gold.find(q.id);
        if (it != gold.end()) {
            q.coarse = it->second.first;
            q.fine = it->second.second;
        }
    }
};

void load_features(Run& run, const FeatureOptions& o, FeatureContext& ctx) {
    ctx.flags = FeatureFlags::from_ablation(o.ablation);
    ctx.labelset = load_labels(o.labels);
    const bool needs_table = ctx.flags.sim || ctx.flags.focus || !o.coarse_model.empty() || !o.fine_model.empty();
    if (needs_table) {
        if (o.embeddings.empty()) {
            throw UsageError("--embeddings is required for the sim, focus and taxonomy-model features");
        }
        ctx.table = load_table(run, o.embeddings, o.oov);
    }
    if (ctx.flags.sim) {
        if (o.encoder.empty()) {
            throw UsageError("--encoder is required unless the sim feature is ablated (-sim)");
        }
        ctx.encoder.emplace(load_encoder(o.encoder, ctx.table));
    }
    if (ctx.flags.coarse && !o.coarse_model.empty()) {
        ctx.coarse.emplace(load_taxonomy(o.coarse_model, ctx.table));
    }
    if (ctx.flags.fine && !o.fine_model.empty()) {
        ctx.fine.emplace(load_taxonomy(o.fine_model, ctx.table));
    }
    if (!o.question_labels.empty()) {
        ctx.gold = load_question_labels(o.question_labels);
    }
    if (ctx.flags.focus) {
        if (o.parses.empty()) {
            throw UsageError("--parses is required unless the focus feature is ablated (-focus)");
        }
        ctx.parses = make_parse_store(load_conllu(o.parses));
    }
}

/// Builds features for many pairs, analysing each question once.
class FeatureCache {
public:
    explicit FeatureCache(const FeatureBuilder& builder) : builder_(builder) {}

    const QuestionAnalysis& analysis(const Question& q) {
        auto it = cache_.find(q.id);
        if (it == cache_.end()) {
            it = cache_.emplace(q.id, builder_.analyze(q)).first;
        }
        return it->second;
    }

    FeatureRecord build(const Question& p, const Question& q) {
        const auto& ap = analysis(p);
        const auto& aq = analysis(q);
        return builder_.build(p, ap, q, aq);
    }

private:
    const FeatureBuilder& builder_;
    std::map<std::string, QuestionAnalysis> cache_;
};

const char* label_name(PairLabel l) { return l == PairLabel::match ? "match" : "no-match"; }

// ---------------------------------------------------------------- match

int cmd_match(const CommonOptions& c, const FeatureOptions& f, const MatchOptions& o, const json& config,
              std::ostream& out, std::ostream& err) {
    Run run(c.out, config, err);
    FeatureContext ctx;
    load_features(run, f, ctx);
    auto pairs = load_pairs(o.pairs);
    run.warn_all(pairs.warnings);
    for (auto& p : pairs.records) {
        ctx.apply_gold(p.q1);
        ctx.apply_gold(p.q2);
    }
    FeatureBuilder builder(ctx.components());
    FeatureCache cache(builder);
    std::vector<FeatureRecord> records;
    std::vector<std::vector<double>> x;
    std::vector<PairLabel> y;
    for (const auto& p : pairs.records) {
        records.push_back(cache.build(p.q1, p.q2));
        x.push_back(records.back().features);
        y.push_back(p.label);
    }

    LinearTrainConfig lcfg{o.reg, o.svm_epochs, derive_seed(c.seed, "match.classifier")};
    std::vector<double> margins(records.size(), 0.0);
    json metrics;
    metrics["pairs"] = records.size();
    metrics["feature_length"] = builder.length();
    metrics["ablation"] = ctx.flags.to_string();
    if (o.cv > 0) {
        std::vector<Fold> folds;
        if (o.stratified) {
            std::vector<std::size_t> labels;
            for (auto l : y) {
                labels.push_back(l == PairLabel::match ? 1 : 0);
            }
            folds = stratified_kfold_split(labels, o.cv, derive_seed(c.seed, "match.folds"));
        } else {
            folds = kfold_split(records.size(), o.cv, derive_seed(c.seed, "match.folds"));
        }
        auto report = cross_validate(folds, [&](const Fold& fold, std::size_t) {
            std::vector<std::vector<double>> fx;
            std::vector<PairLabel> fy;
            for (auto i : fold.train) {
                fx.push_back(x[i]);
                fy.push_back(y[i]);
            }
            auto model = train_pair_classifier(fx, fy, lcfg);
            std::size_t correct = 0;
            for (auto i : fold.test) {
                margins[i] = model.margin(x[i]);
                correct += model.predict(x[i]) == y[i] ? 1 : 0;
            }
            return FoldMetrics{{"accuracy", static_cast<double>(correct) / static_cast<double>(fold.test.size())}};
        });
        report.config = json{{"folds", o.cv}, {"stratified", o.stratified}};
        metrics["cross_validation"] = report.to_json();
        run.write_json("metrics.json", metrics);
        auto table_file = run.open("metrics.txt");
        table_file << report.to_table();
    } else {
        LinearModel model;
        if (!o.classifier.empty()) {
            auto loaded = load_linear(o.classifier);
            if (loaded.flags.to_string() != ctx.flags.to_string()) {
                throw ConfigError("classifier was trained with ablation '" + loaded.flags.to_string() +
                                  "' but this run uses '" + ctx.flags.to_string() + "'");
            }
            model = std::move(loaded.model);
        } else if (!o.train_pairs.empty()) {
            auto train = load_pairs(o.train_pairs);
            run.warn_all(train.warnings);
            std::vector<std::vector<double>> tx;
            std::vector<PairLabel> ty;
            for (auto& p : train.records) {
                ctx.apply_gold(p.q1);
                ctx.apply_gold(p.q2);
                tx.push_back(cache.build(p.q1, p.q2).features);
                ty.push_back(p.label);
            }
            model = train_pair_classifier(tx, ty, lcfg);
            save_linear(run.dir() / "classifier", model, "classifier", ctx.flags);
            metrics["train_accuracy"] = training_accuracy(model, tx, ty);
        } else {
            throw UsageError("match needs --classifier, --train-pairs or --cv");
        }
        for (std::size_t i = 0; i < records.size(); ++i) {
            margins[i] = model.margin(x[i]);
        }
        std::size_t correct = 0;
        for (std::size_t i = 0; i < records.size(); ++i) {
            correct += (margins[i] >= 0.0 ? PairLabel::match : PairLabel::no_match) == y[i] ? 1 : 0;
        }
        metrics["accuracy"] = static_cast<double>(correct) / static_cast<double>(records.size());
        run.write_json("metrics.json", metrics);
    }
    auto file = run.open("match.jsonl");
    for (std::size_t i = 0; i < records.size(); ++i) {
        json j = records[i].to_json();
        j["margin"] = margins[i];
        j["decision"] = label_name(margins[i] >= 0.0 ? PairLabel::match : PairLabel::no_match);
        j["label"] = label_name(y[i]);
        file << j.dump() << '\n';
    }
    out << metrics.dump() << '\n';
    return 0;
}

// ---------------------------------------------------------------- rank

int cmd_rank(const CommonOptions& c, const RankOptions& o, const json& config, std::ostream& out,
             std::ostream& err) {
    Run run(c.out, config, err);
    auto groups = load_ranking_groups(o.groups);
    run.warn_all(groups.warnings);
    RankingRun ranking;
    std::optional<EncoderModel> encoder;
    if (o.method == "encoder") {
        if (o.encoder.empty() || o.embeddings.empty()) {
            throw UsageError("--encoder and --embeddings are required for encoder ranking");
        }
        encoder.emplace(load_encoder(o.encoder, load_table(run, o.embeddings, o.oov)));
        std::optional<PairMode> mode;
        if (!o.pair_mode.empty()) {
            mode = parse_pair_mode(o.pair_mode);
        }
        ranking = rank_groups(*encoder, groups.records, mode);
    } else {
        const auto method = parse_baseline_method(o.method);
        for (const auto& g : groups.records) {
            std::vector<const Question*> pool;
            std::set<std::string> seen;
            std::set<std::string> relevant;
            for (const auto& p : g.positives) {
                if (seen.insert(p.id).second) {
                    pool.push_back(&p);
                }
                relevant.insert(p.id);
            }
            for (const auto& n : g.negatives) {
                if (seen.insert(n.id).second) {
                    pool.push_back(&n);
                }
            }
            std::vector<std::vector<std::string>> docs;
            for (const auto* q : pool) {
                docs.push_back(q->tokens);
            }
            std::vector<ScoredCandidate> scored;
            if (!docs.empty()) {
                const auto stats = build_stats(docs);
                for (const auto* q : pool) {
                    scored.push_back({q->id, baseline_score(method, g.query.tokens, q->tokens, stats, {o.k1, o.b})});
                }
            }
            ranking.push_back(make_query_ranking(g.query.id, std::move(scored), std::move(relevant)));
        }
    }
    auto metrics = evaluate_ranking(ranking, o.ks);
    run.warn_all(metrics.warnings);
    {
        auto file = run.open("run.tsv");
        write_run_tsv(file, ranking);
    }
    json report;
    report["method"] = o.method;
    report["metrics"] = metrics.to_json();
    run.write_json("metrics.json", report);
    if (o.dump_attention) {
        if (!encoder || !encoder->config().attention) {
            throw UsageError("--dump-attention needs an encoder trained with attention");
        }
        auto file = run.open("attention.jsonl");
        for (const auto& g : groups.records) {
            auto dump_one = [&](const Question& cand) {
                json j;
                j["query_id"] = g.query.id;
                j["candidate_id"] = cand.id;
                const json dump = attention_dump(*encoder, g.query.tokens, cand.tokens);
                for (const auto& [k, v] : dump.items()) {
                    j[k] = v;
                }
                file << j.dump() << '\n';
            };
            for (const auto& p : g.positives) {
                dump_one(p);
            }
            for (const auto& n : g.negatives) {
                dump_one(n);
            }
        }
    }
    out << report["metrics"].dump() << '\n';
    return 0;
}

// ---------------------------------------------------------------- baseline

int cmd_baseline(const CommonOptions& c, const BaselineOptions& o, const json& config, std::ostream& out,
                 std::ostream& err) {
    Run run(c.out, config, err);
    const auto method = parse_baseline_method(o.method);
    const auto thresholds = load_thresholds(o.thresholds.empty() ? default_thresholds_path() : fs::path(o.thresholds));
    const double threshold = thresholds.threshold(o.dataset, method);
    auto pairs = load_pairs(o.pairs);
    run.warn_all(pairs.warnings);

    // Statistics over the distinct questions of every supplied pair file.
    std::vector<std::vector<std::string>> docs;
    std::set<std::string> seen;
    auto add_docs = [&](const std::vector<PairExample>& ps) {
        for (const auto& p : ps) {
            for (const Question* q : {&p.q1, &p.q2}) {
                if (seen.insert(q->id).second) {
                    docs.push_back(q->tokens);
                }
            }
        }
    };
    add_docs(pairs.records);
    for (const auto& path : o.corpus) {
        auto extra = load_pairs(path);
        run.warn_all(extra.warnings);
        add_docs(extra.records);
    }
    const auto stats = build_stats(docs);

    auto file = run.open("scores.jsonl");
    std::size_t correct = 0;
    for (const auto& p : pairs.records) {
        const double score = baseline_score(method, p.q1.tokens, p.q2.tokens, stats, {o.k1, o.b});
        const auto decision = threshold_classify(score, method, o.dataset, thresholds);
        correct += decision == p.label ? 1 : 0;
        json j;
        j["id1"] = p.q1.id;
        j["id2"] = p.q2.id;
        j["score"] = score;
        j["decision"] = label_name(decision);
        j["label"] = label_name(p.label);
        file << j.dump() << '\n';
    }
    json metrics;
    metrics["method"] = to_string(method);
    metrics["dataset"] = o.dataset;
    metrics["threshold"] = threshold;
    metrics["corpus"] = {{"scope", "distinct questions of --pairs and --corpus files"},
                         {"documents", stats.documents},
                         {"avgdl", stats.avgdl}};
    metrics["pairs"] = pairs.records.size();
    metrics["accuracy"] = pairs.records.empty()
                              ? 0.0
                              : static_cast<double>(correct) / static_cast<double>(pairs.records.size());
    run.write_json("metrics.json", metrics);
    out << metrics.dump() << '\n';
    return 0;
}

// ---------------------------------------------------------------- poqr

/// Component scores only: sim, coarse_match, fine_match, fsim.
std::vector<double> raw_features(const std::vector<double>& full) {
    const std::size_t n = full.size();
    return {full[0], full[n - 3], full[n - 2], full[n - 1]};
}

int cmd_poqr(const CommonOptions& c, const FeatureOptions& f, const PoqrOptions& o, const json& config,
             std::ostream& out, std::ostream& err) {
    Run run(c.out, config, err);
    if (o.features != "full" && o.features != "raw") {
        throw UsageError("--features must be full or raw");
    }
    FeatureContext ctx;
    load_features(run, f, ctx);
    FeatureBuilder builder(ctx.components());
    FeatureCache cache(builder);
    LinearTrainConfig lcfg{o.reg, o.svm_epochs, derive_seed(c.seed, "poqr.ranker")};

    json report;
    report["features"] = o.features;
    report["ablation"] = ctx.flags.to_string();
    if (!o.stats.empty()) {
        json declared = json::array();
        for (const auto& s : load_poqr_stats(o.stats)) {
            declared.push_back({{"dataset", s.dataset},
                                {"paraphrases", s.paraphrases},
                                {"useful", s.useful},
                                {"neutral", s.neutral},
                                {"pairs", s.pairs}});
        }
        report["declared_stats"] = declared;
    }
    report["annotators"] = json::array();
    double accuracy_sum = 0.0;
    for (const auto& input : o.inputs) {
        auto loaded = load_poqr_groups(input);
        run.warn_all(loaded.warnings);
        auto& groups = loaded.records;
        for (auto& g : groups) {
            ctx.apply_gold(g.ref);
            for (auto* list : {&g.paraphrases, &g.useful, &g.neutral}) {
                for (auto& q : *list) {
                    ctx.apply_gold(q);
                }
            }
        }
        // Feature vector of every (reference, candidate).
        std::map<std::pair<std::string, std::string>, std::vector<double>> features;
        for (const auto& g : groups) {
            for (const auto* list : {&g.paraphrases, &g.useful, &g.neutral}) {
                for (const auto& q : *list) {
                    auto v = cache.build(g.ref, q).features;
                    features[{g.ref.id, q.id}] = o.features == "raw" ? raw_features(v) : v;
                }
            }
        }
        const auto all_pairs = expand_poqr(groups);
        std::map<std::string, std::size_t> relation_counts;
        for (const auto& p : all_pairs) {
            ++relation_counts[to_string(p.relation)];
        }
        const auto folds = kfold_split(groups.size(), o.folds, derive_seed(c.seed, "poqr.folds"));
        auto cv = cross_validate(folds, [&](const Fold& fold, std::size_t) {
            std::vector<PoqrGroup> train_groups;
            std::vector<PoqrGroup> test_groups;
            for (auto i : fold.train) {
                train_groups.push_back(groups[i]);
            }
            for (auto i : fold.test) {
                test_groups.push_back(groups[i]);
            }
            const auto train_pairs = expand_poqr(train_groups);
            const auto test_pairs = expand_poqr(test_groups);
            if (train_pairs.empty() || test_pairs.empty()) {
                throw DataError("a fold has no ordered pairs; use fewer folds");
            }
            std::vector<std::vector<double>> better;
            std::vector<std::vector<double>> worse;
            for (const auto& p : train_pairs) {
                better.push_back(features.at({p.ref.id, p.better.id}));
                worse.push_back(features.at({p.ref.id, p.worse.id}));
            }
            const auto model = train_pair_ranker(better, worse, lcfg);
            PairScores scores;
            for (const auto& g : test_groups) {
                for (const auto* list : {&g.paraphrases, &g.useful, &g.neutral}) {
                    for (const auto& q : *list) {
                        scores[{g.ref.id, q.id}] = model.margin(features.at({g.ref.id, q.id}));
                    }
                }
            }
            return FoldMetrics{{"pair_accuracy", poqr_pair_accuracy(scores, test_pairs)}};
        });
        cv.config = json{{"folds", o.folds}, {"unit", "reference question groups"}};
        json a;
        a["input"] = fs::path(input).filename().string();
        a["groups"] = groups.size();
        a["ordered_pairs"] = all_pairs.size();
        a["relations"] = relation_counts;
        a["cross_validation"] = cv.to_json();
        report["annotators"].push_back(a);
        accuracy_sum += cv.mean.at("pair_accuracy");
        run.log("annotator " + input + " pair_accuracy " + format_double(cv.mean.at("pair_accuracy")));
    }
    report["pair_accuracy"] = accuracy_sum / static_cast<double>(o.inputs.size());
    run.write_json("report.json", report);
    out << json{{"pair_accuracy", report["pair_accuracy"]}}.dump() << '\n';
    return 0;
}

// ---------------------------------------------------------------- cluster-eval

int cmd_cluster(const CommonOptions& c, const ClusterOptions& o, const json& config, std::ostream& out,
                std::ostream& err) {
    Run run(c.out, config, err);
    auto pairs = load_pairs(o.pairs);
    run.warn_all(pairs.warnings);
    std::map<std::string, std::size_t> index;
    std::vector<const Question*> questions;
    std::vector<std::pair<std::size_t, std::size_t>> matched;
    auto id_of = [&](const Question& q) {
        auto [it, inserted] = index.emplace(q.id, questions.size());
        if (inserted) {
            questions.push_back(&q);
        }
        return it->second;
    };
    for (const auto& p : pairs.records) {
        if (p.label != PairLabel::match) {
            continue;
        }
        const auto a = id_of(p.q1);
        const auto b = id_of(p.q2);
        matched.emplace_back(a, b);
    }
    if (matched.empty()) {
        throw DataError("no matching pairs in " + o.pairs);
    }
    std::vector<std::vector<double>> points;
    if (!o.vectors.empty()) {
        auto vectors = load_text_embeddings(o.vectors);
        run.warn_all(vectors.warnings);
        for (const auto* q : questions) {
            if (!vectors.table.index_of(q->id)) {
                throw DataError("no vector for question " + q->id);
            }
            auto v = vectors.table.lookup(q->id);
            points.emplace_back(v.values().begin(), v.values().end());
        }
    } else {
        if (o.encoder.empty() || o.embeddings.empty()) {
            throw UsageError("cluster-eval needs --vectors, or --encoder with --embeddings");
        }
        auto model = load_encoder(o.encoder, load_table(run, o.embeddings, o.oov));
        for (const auto* q : questions) {
            auto e = model.encode(q->tokens);
            points.emplace_back(e.pooled.values().begin(), e.pooled.values().end());
        }
    }
    json results = json::array();
    for (std::size_t k : o.ks) {
        auto km = kmeans(points, k, derive_seed(c.seed, "cluster.k" + std::to_string(k)));
        results.push_back({{"k", k},
                           {"recall", cluster_recall(km.assignment, matched)},
                           {"iterations", km.iterations},
                           {"objective", km.objective.back()}});
    }
    json report{{"points", points.size()}, {"pairs", matched.size()}, {"results", results}};
    run.write_json("metrics.json", report);
    out << results.dump() << '\n';
    return 0;
}

// ---------------------------------------------------------------- gradcheck

int cmd_gradcheck(const CommonOptions& c, const GradcheckOptions& o, const json& config, std::ostream& out,
                  std::ostream& err) {
    GradCheckOptions opts;
    opts.eps = o.eps;
    opts.tol = o.tol;
    opts.samples_per_param = o.samples;
    opts.seed = derive_seed(c.seed, "gradcheck.sample");
    const auto cases = run_gradcheck_suite(o.d, o.max_len, c.seed, opts);
    json report{{"d", o.d}, {"max_len", o.max_len}, {"eps", o.eps}, {"tol", o.tol}, {"models", to_json(cases)}};
    if (!c.out.empty()) {
        Run run(c.out, config, err);
        run.write_json("gradcheck.json", report);
    }
    out << report.dump(2) << '\n';
    for (const auto& cs : cases) {
        if (!cs.report.passed()) {
            throw TrainingError("gradient check failed for " + cs.name + " (worst " + cs.report.worst.param + "[" +
                                std::to_string(cs.report.worst.index) + "], error " +
                                format_double(cs.report.worst.error) + ")");
        }
    }
    return 0;
}

std::string one_line(std::string s) {
    for (auto& ch : s) {
        if (ch == '\n' || ch == '\r') {
            ch = ' ';
        }
    }
    return s;
}

void add_common(CLI::App* sub, CommonOptions& c, bool out_required = true) {
    auto* opt = sub->add_option("--out", c.out, "Output directory");
    if (out_required) {
        opt->required();
    }
    sub->add_option("--seed", c.seed, "Master random seed");
}

void add_feature_options(CLI::App* sub, FeatureOptions& f) {
    sub->add_option("--embeddings", f.embeddings, "Word vectors (text format)")->check(CLI::ExistingFile);
    sub->add_option("--oov", f.oov, "Unknown-token policy: zero or learned-unk");
    sub->add_option("--encoder", f.encoder, "Encoder checkpoint directory")->check(CLI::ExistingDirectory);
    sub->add_option("--coarse-model", f.coarse_model, "Coarse taxonomy checkpoint directory")
        ->check(CLI::ExistingDirectory);
    sub->add_option("--fine-model", f.fine_model, "Fine taxonomy checkpoint directory")->check(CLI::ExistingDirectory);
    sub->add_option("--labels", f.labels, "Taxonomy label set (default: shipped file)")->check(CLI::ExistingFile);
    sub->add_option("--question-labels", f.question_labels, "Gold taxonomy labels: TSV id, coarse, fine")
        ->check(CLI::ExistingFile);
    sub->add_option("--parses", f.parses, "CoNLL-U parses keyed by question id")->check(CLI::ExistingFile);
    sub->add_option("--ablation", f.ablation, "Comma-separated: -sim, -CC, -FC, -focus");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Semantic question matching: encoders, taxonomy, focus, baselines and evaluation", "sqm"};
    app.option_defaults()->always_capture_default();
    app.set_config("--config", "", "INI-style config file with one [subcommand] section per command")
        ->envname("SQM_CONFIG");
    app.require_subcommand(1);

    CommonOptions common;
    TrainEncoderOptions te;
    TrainTaxonomyOptions tt;
    FocusOptions fo;
    FeatureOptions fe;
    MatchOptions mo;
    RankOptions ro;
    BaselineOptions bo;
    PoqrOptions po;
    ClusterOptions co;
    GradcheckOptions go;

    auto* s_te = app.add_subcommand("train-encoder", "Train a GRU/RCNN question encoder with the max-margin loss");
    add_common(s_te, common);
    s_te->add_option("--train", te.train, "Training ranking groups (JSON lines)")->required()->check(CLI::ExistingFile);
    s_te->add_option("--dev", te.dev, "Development ranking groups")->check(CLI::ExistingFile);
    s_te->add_option("--embeddings", te.embeddings, "Word vectors (text format)")->required()->check(CLI::ExistingFile);
    s_te->add_option("--oov", te.oov, "Unknown-token policy: zero or learned-unk");
    s_te->add_option("--kind", te.kind, "gru or rcnn");
    s_te->add_option("--attention", te.attention, "Use cross-attention (true/false)");
    s_te->add_option("--pair-mode", te.pair_mode, "attentive or independent");
    s_te->add_option("--d", te.d, "Hidden size (default: embedding dimension)");
    s_te->add_option("--dropout-keep", te.dropout_keep, "Keep probability of input dropout");
    s_te->add_option("--rcnn-width", te.rcnn_width, "RCNN filter width");
    s_te->add_option("--lr", te.lr, "Adam learning rate");
    s_te->add_option("--batch", te.batch, "Groups per mini-batch");
    s_te->add_option("--epochs", te.epochs, "Training epochs");
    s_te->add_option("--margin", te.margin, "Max-margin constant");
    s_te->add_flag("--train-embeddings", te.train_embeddings, "Fine-tune the word vectors");

    auto* s_tt = app.add_subcommand("train-taxonomy", "Train the CNN + BiGRU taxonomy classifier for one head");
    add_common(s_tt, common);
    s_tt->add_option("--train", tt.train, "Labeled questions: TSV text, coarse, fine")->required()->check(CLI::ExistingFile);
    s_tt->add_option("--dev", tt.dev, "Development questions")->check(CLI::ExistingFile);
    s_tt->add_option("--embeddings", tt.embeddings, "Word vectors (text format)")->required()->check(CLI::ExistingFile);
    s_tt->add_option("--labels", tt.labels, "Taxonomy label set (default: shipped file)")->check(CLI::ExistingFile);
    s_tt->add_option("--head", tt.head, "coarse or fine");
    s_tt->add_option("--filters", tt.filters, "Convolution filters");
    s_tt->add_option("--width", tt.width, "Convolution and pooling width");
    s_tt->add_option("--hidden", tt.hidden, "Recurrent hidden size per direction");
    s_tt->add_option("--ff-hidden", tt.ff_hidden, "Feed-forward layer size");
    s_tt->add_option("--lr", tt.lr, "Adam learning rate");
    s_tt->add_option("--dropout-keep", tt.dropout_keep, "Keep probability of input dropout");
    s_tt->add_option("--epochs", tt.epochs, "Training epochs");
    s_tt->add_option("--batch", tt.batch, "Questions per mini-batch");

    auto* s_fo = app.add_subcommand("focus", "Extract question words and foci from CoNLL-U parses");
    add_common(s_fo, common);
    s_fo->add_option("--parses", fo.parses, "CoNLL-U file")->required()->check(CLI::ExistingFile);

    auto* s_mo = app.add_subcommand("match", "Classify question pairs from fused features");
    add_common(s_mo, common);
    add_feature_options(s_mo, fe);
    s_mo->add_option("--pairs", mo.pairs, "Pairs to classify: TSV id1, id2, text1, text2, label")
        ->required()
        ->check(CLI::ExistingFile);
    s_mo->add_option("--classifier", mo.classifier, "Trained linear classifier directory")
        ->check(CLI::ExistingDirectory);
    s_mo->add_option("--train-pairs", mo.train_pairs, "Pairs to train the classifier on")->check(CLI::ExistingFile);
    s_mo->add_option("--cv", mo.cv, "Cross-validate over --pairs with this many folds");
    s_mo->add_flag("--stratified", mo.stratified, "Stratify cross-validation folds by label");
    s_mo->add_option("--reg", mo.reg, "L2 regularization of the linear classifier");
    s_mo->add_option("--svm-epochs", mo.svm_epochs, "Passes of the linear trainer");

    auto* s_ro = app.add_subcommand("rank", "Rank candidate questions and report Recall@k, MRR and MAP");
    add_common(s_ro, common);
    s_ro->add_option("--groups", ro.groups, "Ranking groups (JSON lines)")->required()->check(CLI::ExistingFile);
    s_ro->add_option("--method", ro.method, "encoder, tfidf, jaccard or bm25");
    s_ro->add_option("--embeddings", ro.embeddings, "Word vectors (text format)")->check(CLI::ExistingFile);
    s_ro->add_option("--oov", ro.oov, "Unknown-token policy: zero or learned-unk");
    s_ro->add_option("--encoder", ro.encoder, "Encoder checkpoint directory")->check(CLI::ExistingDirectory);
    s_ro->add_option("--pair-mode", ro.pair_mode, "attentive or independent");
    s_ro->add_option("--k", ro.ks, "Cut-offs for Recall@k")->expected(1, -1);
    s_ro->add_flag("--dump-attention", ro.dump_attention, "Write attention matrices to attention.jsonl");
    s_ro->add_option("--k1", ro.k1, "BM25 k1");
    s_ro->add_option("--b", ro.b, "BM25 b");

    auto* s_bo = app.add_subcommand("baseline", "Score pairs with TF-IDF, Jaccard or BM25 and apply thresholds");
    add_common(s_bo, common);
    s_bo->add_option("--method", bo.method, "tfidf, jaccard or bm25")->required();
    s_bo->add_option("--pairs", bo.pairs, "Pairs: TSV id1, id2, text1, text2, label")->required()->check(CLI::ExistingFile);
    s_bo->add_option("--dataset", bo.dataset, "Threshold table row, e.g. squad or quora")->required();
    s_bo->add_option("--thresholds", bo.thresholds, "Threshold table (default: shipped file)")->check(CLI::ExistingFile);
    s_bo->add_option("--corpus", bo.corpus, "Extra pair files whose questions join the statistics")
        ->check(CLI::ExistingFile);
    s_bo->add_option("--k1", bo.k1, "BM25 k1");
    s_bo->add_option("--b", bo.b, "BM25 b");

    auto* s_po = app.add_subcommand("poqr", "Train and cross-validate the pairwise ranker on POQR groups");
    add_common(s_po, common);
    add_feature_options(s_po, fe);
    s_po->add_option("--input", po.inputs, "POQR groups (JSON lines), one file per annotator")
        ->required()
        ->check(CLI::ExistingFile);
    s_po->add_option("--features", po.features, "full (one-hot taxonomy block) or raw (component scores)");
    s_po->add_option("--folds", po.folds, "Cross-validation folds over reference questions");
    s_po->add_option("--reg", po.reg, "L2 regularization of the ranker");
    s_po->add_option("--svm-epochs", po.svm_epochs, "Passes of the ranker trainer");
    s_po->add_option("--stats", po.stats, "Declared dataset statistics to echo into the report")
        ->check(CLI::ExistingFile);

    auto* s_co = app.add_subcommand("cluster-eval", "k-means clustering recall of matching pairs");
    add_common(s_co, common);
    s_co->add_option("--pairs", co.pairs, "Pairs; label 1 rows are the matching pairs")->required()->check(CLI::ExistingFile);
    s_co->add_option("--vectors", co.vectors, "Question vectors keyed by question id (text format)")
        ->check(CLI::ExistingFile);
    s_co->add_option("--embeddings", co.embeddings, "Word vectors for encoder-based vectors")->check(CLI::ExistingFile);
    s_co->add_option("--oov", co.oov, "Unknown-token policy: zero or learned-unk");
    s_co->add_option("--encoder", co.encoder, "Encoder checkpoint directory")->check(CLI::ExistingDirectory);
    s_co->add_option("--k", co.ks, "Cluster counts")->required()->expected(1, -1);

    auto* s_go = app.add_subcommand("gradcheck", "Finite-difference check of every model's gradients");
    add_common(s_go, common, false);
    s_go->add_option("--d", go.d, "Embedding and hidden size");
    s_go->add_option("--max-len", go.max_len, "Longest toy question");
    s_go->add_option("--eps", go.eps, "Central-difference step");
    s_go->add_option("--tol", go.tol, "Tolerance on |fd - g| / max(1, |g|)");
    s_go->add_option("--samples", go.samples, "Coordinates per parameter (0 = all)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e, out, err);
        }
        err << "sqm: error[usage]: " << one_line(e.what()) << '\n';
        return exit_code_for(ErrorKind::usage);
    }

    try {
        if (s_te->parsed()) {
            return cmd_train_encoder(common, te, effective_config(*s_te), out, err);
        }
        if (s_tt->parsed()) {
            return cmd_train_taxonomy(common, tt, effective_config(*s_tt), out, err);
        }
        if (s_fo->parsed()) {
            return cmd_focus(common, fo, effective_config(*s_fo), out, err);
        }
        if (s_mo->parsed()) {
            return cmd_match(common, fe, mo, effective_config(*s_mo), out, err);
        }
        if (s_ro->parsed()) {
            return cmd_rank(common, ro, effective_config(*s_ro), out, err);
        }
        if (s_bo->parsed()) {
            return cmd_baseline(common, bo, effective_config(*s_bo), out, err);
        }
        if (s_po->parsed()) {
            return cmd_poqr(common, fe, po, effective_config(*s_po), out, err);
        }
        if (s_co->parsed()) {
            return cmd_cluster(common, co, effective_config(*s_co), out, err);
        }
        if (s_go->parsed()) {
            return cmd_gradcheck(common, go, effective_config(*s_go), out, err);
        }
    } catch (const Error& e) {
        err << "sqm: error[" << to_string(e.kind()) << "]: " << one_line(e.what()) << '\n';
        return exit_code_for(e.kind());
    } catch (const fs::filesystem_error& e) {
        err << "sqm: error[data]: " << one_line(e.what()) << '\n';
        return exit_code_for(ErrorKind::data);
    } catch (const std::exception& e) {
        err << "sqm: error[internal]: " << one_line(e.what()) << '\n';
        return 1;
    }
    return 0;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv;
    argv.push_back("sqm");
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace sqm
