#include "sqm/baselines.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "sqm/error.hpp"

namespace sqm {

std::size_t CorpusStats::df_of(std::string_view token) const {
    auto it = df.find(std::string(token));
    return it == df.end() ? 0 : it->second;
}

CorpusStats build_stats(std::span<const std::vector<std::string>> documents) {
    if (documents.empty()) {
        throw ArgumentError("cannot build corpus statistics from an empty corpus");
    }
    CorpusStats s;
    s.documents = documents.size();
    std::size_t total = 0;
    for (const auto& doc : documents) {
        total += doc.size();
        for (const auto& t : std::set<std::string>(doc.begin(), doc.end())) {
            ++s.df[t];
        }
    }
    s.avgdl = static_cast<double>(total) / static_cast<double>(s.documents);
    return s;
}

double jaccard(std::span<const std::string> a, std::span<const std::string> b) {
    std::set<std::string> sa(a.begin(), a.end());
    std::set<std::string> sb(b.begin(), b.end());
    if (sa.empty() && sb.empty()) {
        return 0.0;
    }
    std::size_t common = 0;
    for (const auto& t : sa) {
        common += sb.count(t);
    }
    return static_cast<double>(common) / static_cast<double>(sa.size() + sb.size() - common);
}

double tfidf_idf(const CorpusStats& stats, std::string_view token) {
    const double n = static_cast<double>(stats.documents);
    const double df = static_cast<double>(stats.df_of(token));
    return std::log((1.0 + n) / (1.0 + df)) + 1.0;
}

namespace {

std::map<std::string, double> term_counts(std::span<const std::string> tokens) {
    std::map<std::string, double> tf;
    for (const auto& t : tokens) {
        tf[t] += 1.0;
    }
    return tf;
}

}  // namespace

double tfidf_cosine(std::span<const std::string> a, std::span<const std::string> b, const CorpusStats& stats) {
    auto wa = term_counts(a);
    auto wb = term_counts(b);
    for (auto& [t, w] : wa) {
        w *= tfidf_idf(stats, t);
    }
    for (auto& [t, w] : wb) {
        w *= tfidf_idf(stats, t);
    }
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (const auto& [t, w] : wa) {
        na += w * w;
        auto it = wb.find(t);
        if (it != wb.end()) {
            dot += w * it->second;
        }
    }
    for (const auto& [t, w] : wb) {
        nb += w * w;
    }
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double bm25_idf(const CorpusStats& stats, std::string_view token) {
    const double n = static_cast<double>(stats.documents);
    const double df = static_cast<double>(stats.df_of(token));
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

double bm25(std::span<const std::string> query, std::span<const std::string> doc, const CorpusStats& stats,
            const Bm25Params& params) {
    if (stats.documents == 0 || stats.avgdl <= 0.0) {
        throw ArgumentError("BM25 needs statistics of a non-empty corpus");
    }
    const auto tf = term_counts(doc);
    const double norm = params.k1 * (1.0 - params.b + params.b * static_cast<double>(doc.size()) / stats.avgdl);
    double score = 0.0;
    for (const auto& t : std::set<std::string>(query.begin(), query.end())) {
        if (stats.df_of(t) == 0) {
            continue;
        }
        auto it = tf.find(t);
        if (it == tf.end()) {
            continue;
        }
        score += bm25_idf(stats, t) * it->second * (params.k1 + 1.0) / (it->second + norm);
    }
    return score;
}

BaselineMethod parse_baseline_method(std::string_view name) {
    if (name == "tfidf") {
        return BaselineMethod::tfidf;
    }
    if (name == "jaccard") {
        return BaselineMethod::jaccard;
    }
    if (name == "bm25") {
        return BaselineMethod::bm25;
    }
    throw ArgumentError("unknown baseline method '" + std::string(name) + "' (expected tfidf, jaccard or bm25)");
}

const char* to_string(BaselineMethod method) noexcept {
    switch (method) {
    case BaselineMethod::tfidf:
        return "tfidf";
    case BaselineMethod::jaccard:
        return "jaccard";
    case BaselineMethod::bm25:
        return "bm25";
    }
    return "?";
}

double baseline_score(BaselineMethod method, std::span<const std::string> a, std::span<const std::string> b,
                      const CorpusStats& stats, const Bm25Params& params) {
    switch (method) {
    case BaselineMethod::tfidf:
        return tfidf_cosine(a, b, stats);
    case BaselineMethod::jaccard:
        return jaccard(a, b);
    case BaselineMethod::bm25:
        return bm25(a, b, stats, params);
    }
    return 0.0;
}

void ThresholdTable::set(std::string dataset, BaselineMethod method, double threshold) {
    if (!std::isfinite(threshold)) {
        throw ConfigError("threshold for " + dataset + "/" + to_string(method) + " is not finite");
    }
    entries_[{std::move(dataset), to_string(method)}] = threshold;
}

double ThresholdTable::threshold(std::string_view dataset, BaselineMethod method) const {
    auto it = entries_.find({std::string(dataset), to_string(method)});
    if (it == entries_.end()) {
        throw ConfigError("no threshold for dataset '" + std::string(dataset) + "' and method " + to_string(method));
    }
    return it->second;
}

ThresholdTable read_thresholds(std::istream& in, const std::string& source) {
    ThresholdTable table;
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
        std::size_t start = 0;
        while (true) {
            auto tab = line.find('\t', start);
            cols.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
            if (tab == std::string::npos) {
                break;
            }
            start = tab + 1;
        }
        if (cols.size() != 3) {
            throw FormatError(source, line_no, "expected dataset, method and threshold");
        }
        double value = 0.0;
        try {
            std::size_t used = 0;
            value = std::stod(cols[2], &used);
            if (used != cols[2].size()) {
                throw std::invalid_argument(cols[2]);
            }
        } catch (const std::exception&) {
            throw FormatError(source, line_no, "bad threshold '" + cols[2] + "'");
        }
        try {
            table.set(cols[0], parse_baseline_method(cols[1]), value);
        } catch (const Error& e) {
            throw FormatError(source, line_no, e.what());
        }
    }
    return table;
}

ThresholdTable load_thresholds(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open threshold table " + path.string());
    }
    return read_thresholds(in, path.string());
}

std::filesystem::path default_thresholds_path() { return std::filesystem::path(SQM_DATA_DIR) / "thresholds.tsv"; }

PairLabel threshold_classify(double score, BaselineMethod method, std::string_view dataset,
                             const ThresholdTable& table) {
    return score >= table.threshold(dataset, method) ? PairLabel::match : PairLabel::no_match;
}

}  // namespace sqm
