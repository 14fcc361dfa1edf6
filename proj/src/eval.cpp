#include "sqm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "sqm/error.hpp"
#include "sqm/rng.hpp"

namespace sqm {

void sort_ranking(std::vector<ScoredCandidate>& candidates) {
    std::sort(candidates.begin(), candidates.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.id < b.id;
    });
}

QueryRanking make_query_ranking(std::string query_id, std::vector<ScoredCandidate> candidates,
                                std::set<std::string> relevant) {
    sort_ranking(candidates);
    return {std::move(query_id), std::move(candidates), std::move(relevant)};
}

std::optional<std::size_t> first_relevant_rank(const QueryRanking& q) {
    for (std::size_t i = 0; i < q.ranked.size(); ++i) {
        if (q.relevant.count(q.ranked[i].id) != 0) {
            return i + 1;
        }
    }
    return std::nullopt;
}

namespace {

void require_non_empty(std::span<const QueryRanking> run) {
    if (run.empty()) {
        throw ArgumentError("ranking run has no queries");
    }
}

void warn_no_relevant(const QueryRanking& q, std::vector<std::string>* warnings) {
    if (warnings != nullptr) {
        warnings->push_back("query " + q.query_id + " has no relevant candidate; scored 0");
    }
}

}  // namespace

double recall_at_k(std::span<const QueryRanking> run, std::size_t k) {
    require_non_empty(run);
    if (k == 0) {
        throw ArgumentError("recall@k needs k >= 1");
    }
    std::size_t hits = 0;
    for (const auto& q : run) {
        auto r = first_relevant_rank(q);
        if (r && *r <= k) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(run.size());
}

double mean_reciprocal_rank(std::span<const QueryRanking> run, std::vector<std::string>* warnings) {
    require_non_empty(run);
    double total = 0.0;
    for (const auto& q : run) {
        if (q.relevant.empty()) {
            warn_no_relevant(q, warnings);
            continue;
        }
        if (auto r = first_relevant_rank(q)) {
            total += 1.0 / static_cast<double>(*r);
        }
    }
    return total / static_cast<double>(run.size());
}

double mean_average_precision(std::span<const QueryRanking> run, std::vector<std::string>* warnings) {
    require_non_empty(run);
    double total = 0.0;
    for (const auto& q : run) {
        if (q.relevant.empty()) {
            warn_no_relevant(q, warnings);
            continue;
        }
        std::size_t hits = 0;
        double precision_sum = 0.0;
        for (std::size_t i = 0; i < q.ranked.size(); ++i) {
            if (q.relevant.count(q.ranked[i].id) != 0) {
                ++hits;
                precision_sum += static_cast<double>(hits) / static_cast<double>(i + 1);
            }
        }
        total += precision_sum / static_cast<double>(q.relevant.size());
    }
    return total / static_cast<double>(run.size());
}

nlohmann::ordered_json RankingMetrics::to_json() const {
    nlohmann::ordered_json j;
    j["queries"] = queries;
    for (const auto& [k, v] : recall) {
        j["recall@" + std::to_string(k)] = v;
    }
    j["mrr"] = mrr;
    j["map"] = map;
    return j;
}

RankingMetrics evaluate_ranking(std::span<const QueryRanking> run, std::span<const std::size_t> ks) {
    static constexpr std::size_t default_ks[] = {1, 3, 5};
    if (ks.empty()) {
        ks = default_ks;
    }
    RankingMetrics m;
    m.queries = run.size();
    for (std::size_t k : ks) {
        m.recall[k] = recall_at_k(run, k);
    }
    m.mrr = mean_reciprocal_rank(run, &m.warnings);
    m.map = mean_average_precision(run);
    return m;
}

void write_run_tsv(std::ostream& out, std::span<const QueryRanking> run) {
    out << std::setprecision(17);
    for (const auto& q : run) {
        for (std::size_t i = 0; i < q.ranked.size(); ++i) {
            out << q.query_id << '\t' << q.ranked[i].id << '\t' << q.ranked[i].score << '\t' << (i + 1) << '\n';
        }
    }
}

ClassificationReport classification_report(std::span<const std::size_t> gold,
                                           std::span<const std::size_t> predicted, std::size_t num_labels) {
    if (gold.size() != predicted.size()) {
        throw DimensionError("gold has " + std::to_string(gold.size()) + " labels, predictions " +
                             std::to_string(predicted.size()));
    }
    if (gold.empty()) {
        throw ArgumentError("classification report over an empty set");
    }
    ClassificationReport r;
    r.total = gold.size();
    r.confusion.assign(num_labels, std::vector<std::size_t>(num_labels, 0));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] >= num_labels || predicted[i] >= num_labels) {
            throw ArgumentError("label index out of range in classification report");
        }
        ++r.confusion[gold[i]][predicted[i]];
        if (gold[i] == predicted[i]) {
            ++correct;
        }
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.total);
    double f1_sum = 0.0;
    std::size_t classes = 0;
    for (std::size_t c = 0; c < num_labels; ++c) {
        std::size_t tp = r.confusion[c][c];
        std::size_t support = 0;
        std::size_t predicted_c = 0;
        for (std::size_t o = 0; o < num_labels; ++o) {
            support += r.confusion[c][o];
            predicted_c += r.confusion[o][c];
        }
        if (support == 0 && predicted_c == 0) {
            continue;
        }
        ++classes;
        if (tp > 0) {
            f1_sum += 2.0 * static_cast<double>(tp) / static_cast<double>(support + predicted_c);
        }
    }
    r.macro_f1 = f1_sum / static_cast<double>(classes);
    return r;
}

nlohmann::ordered_json ClassificationReport::to_json(std::span<const std::string> labels) const {
    nlohmann::ordered_json j;
    j["total"] = total;
    j["accuracy"] = accuracy;
    j["macro_f1"] = macro_f1;
    j["labels"] = std::vector<std::string>(labels.begin(), labels.end());
    j["confusion"] = confusion;
    return j;
}

double poqr_pair_accuracy(const PairScores& scores, std::span<const OrderedPair> pairs) {
    if (pairs.empty()) {
        throw ArgumentError("no ordered pairs to evaluate");
    }
    auto score_of = [&](const Question& ref, const Question& cand) {
        auto it = scores.find({ref.id, cand.id});
        if (it == scores.end()) {
            throw DataError("no score for reference " + ref.id + " and candidate " + cand.id);
        }
        return it->second;
    };
    double correct = 0.0;
    for (const auto& p : pairs) {
        double better = score_of(p.ref, p.better);
        double worse = score_of(p.ref, p.worse);
        if (better > worse) {
            correct += 1.0;
        } else if (better == worse) {
            correct += 0.5;
        }
    }
    return correct / static_cast<double>(pairs.size());
}

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

std::size_t nearest(std::span<const double> p, const std::vector<std::vector<double>>& centroids, double& dist) {
    std::size_t best = 0;
    dist = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        double d = squared_distance(p, centroids[c]);
        if (d < dist) {
            dist = d;
            best = c;
        }
    }
    return best;
}

}  // namespace

KMeansResult kmeans(std::span<const std::vector<double>> points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iter, double tol) {
    const std::size_t n = points.size();
    if (k == 0) {
        throw ArgumentError("k-means needs k >= 1");
    }
    if (k > n) {
        throw ArgumentError("k-means with k=" + std::to_string(k) + " exceeds " + std::to_string(n) + " points");
    }
    const std::size_t dim = points[0].size();
    for (const auto& p : points) {
        if (p.size() != dim) {
            throw DimensionError("k-means points have differing dimensions");
        }
    }

    Rng rng(seed);
    KMeansResult r;
    std::vector<bool> chosen(n, false);
    std::size_t first = rng.below(n);
    r.centroids.push_back(points[first]);
    chosen[first] = true;
    std::vector<double> d2(n);
    while (r.centroids.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double d = 0.0;
            nearest(points[i], r.centroids, d);
            d2[i] = chosen[i] ? 0.0 : d;
            total += d2[i];
        }
        std::size_t pick = n;
        if (total > 0.0) {
            double target = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (d2[i] <= 0.0) {
                    continue;
                }
                acc += d2[i];
                pick = i;
                if (acc > target) {
                    break;
                }
            }
        } else {
            // Remaining points coincide with centroids; take any unused one.
            std::vector<std::size_t> unused;
            for (std::size_t i = 0; i < n; ++i) {
                if (!chosen[i]) {
                    unused.push_back(i);
                }
            }
            pick = unused[rng.below(unused.size())];
        }
        chosen[pick] = true;
        r.centroids.push_back(points[pick]);
    }

    r.assignment.assign(n, 0);
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        double objective = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double d = 0.0;
            r.assignment[i] = nearest(points[i], r.centroids, d);
            objective += d;
        }
        r.objective.push_back(objective);
        ++r.iterations;

        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto& s = sums[r.assignment[i]];
            for (std::size_t j = 0; j < dim; ++j) {
                s[j] += points[i][j];
            }
            ++counts[r.assignment[i]];
        }
        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                continue;
            }
            for (auto& v : sums[c]) {
                v /= static_cast<double>(counts[c]);
            }
            shift = std::max(shift, std::sqrt(squared_distance(sums[c], r.centroids[c])));
            r.centroids[c] = std::move(sums[c]);
        }
        if (shift < tol) {
            break;
        }
    }
    return r;
}

double cluster_recall(std::span<const std::size_t> assignment,
                      std::span<const std::pair<std::size_t, std::size_t>> pairs) {
    if (pairs.empty()) {
        throw ArgumentError("cluster recall needs at least one pair");
    }
    std::size_t same = 0;
    for (const auto& [a, b] : pairs) {
        if (a >= assignment.size() || b >= assignment.size()) {
            throw ArgumentError("pair refers to a point outside the clustering");
        }
        if (assignment[a] == assignment[b]) {
            ++same;
        }
    }
    return 100.0 * static_cast<double>(same) / static_cast<double>(pairs.size());
}

double kmeans_cluster_recall(std::span<const std::vector<double>> points,
                             std::span<const std::pair<std::size_t, std::size_t>> pairs, std::size_t k,
                             std::uint64_t seed) {
    auto result = kmeans(points, k, seed);
    return cluster_recall(result.assignment, pairs);
}

nlohmann::ordered_json MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["config"] = config;
    j["folds"] = nlohmann::ordered_json::array();
    for (const auto& f : folds) {
        nlohmann::ordered_json fj = nlohmann::ordered_json::object();
        for (const auto& [name, v] : f) {
            fj[name] = v;
        }
        j["folds"].push_back(fj);
    }
    nlohmann::ordered_json mj = nlohmann::ordered_json::object();
    nlohmann::ordered_json sj = nlohmann::ordered_json::object();
    for (const auto& [name, v] : mean) {
        mj[name] = v;
        sj[name] = stddev.at(name);
    }
    j["mean"] = mj;
    j["std"] = sj;
    return j;
}

std::string MetricsReport::to_table() const {
    std::size_t width = 6;
    for (const auto& [name, v] : mean) {
        width = std::max(width, name.size());
    }
    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(width)) << "metric" << "  " << std::right << std::setw(10)
        << "mean" << "  " << std::setw(10) << "std" << '\n';
    out << std::fixed << std::setprecision(4);
    for (const auto& [name, v] : mean) {
        out << std::left << std::setw(static_cast<int>(width)) << name << "  " << std::right << std::setw(10) << v
            << "  " << std::setw(10) << stddev.at(name) << '\n';
    }
    return out.str();
}

MetricsReport summarize_folds(std::vector<FoldMetrics> folds) {
    MetricsReport r;
    r.folds = std::move(folds);
    if (r.folds.empty()) {
        return r;
    }
    for (const auto& [name, v] : r.folds.front()) {
        std::vector<double> values;
        for (const auto& f : r.folds) {
            auto it = f.find(name);
            if (it != f.end()) {
                values.push_back(it->second);
            }
        }
        double mean = 0.0;
        for (double x : values) {
            mean += x;
        }
        mean /= static_cast<double>(values.size());
        double var = 0.0;
        for (double x : values) {
            var += (x - mean) * (x - mean);
        }
        r.mean[name] = mean;
        r.stddev[name] = values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
    }
    return r;
}

MetricsReport cross_validate(std::size_t n, std::size_t k, std::uint64_t seed,
                             const std::function<FoldMetrics(const Fold&, std::size_t fold)>& fold_fn) {
    auto folds = kfold_split(n, k, seed);
    return cross_validate(folds, fold_fn);
}

MetricsReport cross_validate(std::span<const Fold> folds,
                             const std::function<FoldMetrics(const Fold&, std::size_t fold)>& fold_fn) {
    if (folds.size() < 2) {
        throw ArgumentError("cross validation needs at least 2 folds");
    }
    std::vector<FoldMetrics> results;
    for (std::size_t i = 0; i < folds.size(); ++i) {
        results.push_back(fold_fn(folds[i], i));
    }
    return summarize_folds(std::move(results));
}

}  // namespace sqm
