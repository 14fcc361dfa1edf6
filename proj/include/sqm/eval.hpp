#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sqm/corpus.hpp"

namespace sqm {

struct ScoredCandidate {
    std::string id;
    double score = 0.0;
};

/// One query's candidates, best first. Equal scores are ordered by id.
struct QueryRanking {
    std::string query_id;
    std::vector<ScoredCandidate> ranked;
    std::set<std::string> relevant;
};

using RankingRun = std::vector<QueryRanking>;

void sort_ranking(std::vector<ScoredCandidate>& candidates);
QueryRanking make_query_ranking(std::string query_id, std::vector<ScoredCandidate> candidates,
                                std::set<std::string> relevant);

/// 1-based rank of the first relevant candidate.
std::optional<std::size_t> first_relevant_rank(const QueryRanking& q);

/// Fraction of queries with a relevant candidate in the top k.
double recall_at_k(std::span<const QueryRanking> run, std::size_t k);
/// Queries without a relevant candidate contribute 0 and add a warning.
double mean_reciprocal_rank(std::span<const QueryRanking> run, std::vector<std::string>* warnings = nullptr);
double mean_average_precision(std::span<const QueryRanking> run, std::vector<std::string>* warnings = nullptr);

struct RankingMetrics {
    std::size_t queries = 0;
    std::map<std::size_t, double> recall;
    double mrr = 0.0;
    double map = 0.0;
    std::vector<std::string> warnings;

    nlohmann::ordered_json to_json() const;
};

RankingMetrics evaluate_ranking(std::span<const QueryRanking> run,
                                std::span<const std::size_t> ks = std::span<const std::size_t>());

/// Columns: query_id, candidate_id, score, rank.
void write_run_tsv(std::ostream& out, std::span<const QueryRanking> run);

struct ClassificationReport {
    std::size_t total = 0;
    double accuracy = 0.0;
    /// Mean F1 over the classes that occur in gold or predicted labels.
    double macro_f1 = 0.0;
    /// confusion[gold][predicted]
    std::vector<std::vector<std::size_t>> confusion;

    nlohmann::ordered_json to_json(std::span<const std::string> labels) const;
};

ClassificationReport classification_report(std::span<const std::size_t> gold,
                                           std::span<const std::size_t> predicted, std::size_t num_labels);

/// Score of (reference id, candidate id).
using PairScores = std::map<std::pair<std::string, std::string>, double>;

/// Fraction of pairs with score(ref, better) > score(ref, worse); exact ties count 0.5.
double poqr_pair_accuracy(const PairScores& scores, std::span<const OrderedPair> pairs);

struct KMeansResult {
    std::vector<std::size_t> assignment;
    std::vector<std::vector<double>> centroids;
    /// Within-cluster sum of squares after every assignment step.
    std::vector<double> objective;
    std::size_t iterations = 0;
};

/// k-means++ seeding followed by Lloyd iterations until the largest centroid
/// shift is below `tol` or `max_iter` is reached. An empty cluster keeps its centroid.
KMeansResult kmeans(std::span<const std::vector<double>> points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iter = 100, double tol = 1e-9);

/// 100 x (pairs whose two points share a cluster) / (number of pairs).
double cluster_recall(std::span<const std::size_t> assignment,
                      std::span<const std::pair<std::size_t, std::size_t>> pairs);

double kmeans_cluster_recall(std::span<const std::vector<double>> points,
                             std::span<const std::pair<std::size_t, std::size_t>> pairs, std::size_t k,
                             std::uint64_t seed);

using FoldMetrics = std::map<std::string, double>;

struct MetricsReport {
    std::vector<FoldMetrics> folds;
    FoldMetrics mean;
    /// Sample standard deviation over folds.
    FoldMetrics stddev;
    nlohmann::ordered_json config = nlohmann::ordered_json::object();

    nlohmann::ordered_json to_json() const;
    std::string to_table() const;
};

MetricsReport summarize_folds(std::vector<FoldMetrics> folds);

/// Runs `fold_fn` on every fold of a seeded split of n items.
MetricsReport cross_validate(std::size_t n, std::size_t k, std::uint64_t seed,
                             const std::function<FoldMetrics(const Fold&, std::size_t fold)>& fold_fn);

MetricsReport cross_validate(std::span<const Fold> folds,
                             const std::function<FoldMetrics(const Fold&, std::size_t fold)>& fold_fn);

}  // namespace sqm
