#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sqm/corpus.hpp"

namespace sqm {

struct CorpusStats {
    std::size_t documents = 0;
    /// Number of distinct documents containing each token.
    std::unordered_map<std::string, std::size_t> df;
    double avgdl = 0.0;

    std::size_t df_of(std::string_view token) const;
};

CorpusStats build_stats(std::span<const std::vector<std::string>> documents);

/// |A n B| / |A u B| over token sets; 0 when both are empty.
double jaccard(std::span<const std::string> a, std::span<const std::string> b);

/// ln((1 + N) / (1 + df)) + 1
double tfidf_idf(const CorpusStats& stats, std::string_view token);
/// Cosine of tf * idf weighted vectors.
double tfidf_cosine(std::span<const std::string> a, std::span<const std::string> b, const CorpusStats& stats);

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// ln(1 + (N - df + 0.5) / (df + 0.5))
double bm25_idf(const CorpusStats& stats, std::string_view token);
/// Sum over distinct query terms seen in the corpus of
/// idf * tf (k1 + 1) / (tf + k1 (1 - b + b |doc| / avgdl)).
double bm25(std::span<const std::string> query, std::span<const std::string> doc, const CorpusStats& stats,
            const Bm25Params& params = {});

enum class BaselineMethod { tfidf, jaccard, bm25 };

BaselineMethod parse_baseline_method(std::string_view name);
const char* to_string(BaselineMethod method) noexcept;

/// Score of a pair; BM25 treats `a` as the query and `b` as the document.
double baseline_score(BaselineMethod method, std::span<const std::string> a, std::span<const std::string> b,
                      const CorpusStats& stats, const Bm25Params& params = {});

class ThresholdTable {
public:
    void set(std::string dataset, BaselineMethod method, double threshold);
    /// ConfigError when the entry is missing.
    double threshold(std::string_view dataset, BaselineMethod method) const;
    const std::map<std::pair<std::string, std::string>, double>& entries() const noexcept { return entries_; }

private:
    std::map<std::pair<std::string, std::string>, double> entries_;
};

/// TSV `dataset<TAB>method<TAB>threshold`; `#` comments.
ThresholdTable read_thresholds(std::istream& in, const std::string& source);
ThresholdTable load_thresholds(const std::filesystem::path& path);
std::filesystem::path default_thresholds_path();

/// match iff score >= threshold.
PairLabel threshold_classify(double score, BaselineMethod method, std::string_view dataset,
                             const ThresholdTable& table);

}  // namespace sqm
