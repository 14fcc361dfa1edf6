#include "sqm/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "sqm/error.hpp"
#include "sqm/rng.hpp"

namespace sqm {

namespace {

bool is_detached_punct(char c) {
    switch (c) {
        case '.': case ',': case '?': case '!': case '"':
        case '(': case ')': case ':': case ';':
            return true;
        default:
            return false;
    }
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find('\t', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    if (!out.empty() && !out.back().empty() && out.back().back() == '\r') {
        out.back().pop_back();
    }
    return out;
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    return in;
}

Question question_from_json(const nlohmann::json& j, const std::string& source, std::size_t line) {
    if (j.is_string()) {
        auto text = j.get<std::string>();
        return make_question(text, text);
    }
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
        throw FormatError(source, line, "question must be a string or an object with a text field");
    }
    auto text = j["text"].get<std::string>();
    Question q = make_question(j.value("id", text), text);
    if (j.contains("coarse")) {
        q.coarse = j["coarse"].get<std::string>();
    }
    if (j.contains("fine")) {
        q.fine = j["fine"].get<std::string>();
    }
    if (j.contains("parse")) {
        q.parse_ref = j["parse"].get<std::string>();
    }
    return q;
}

std::vector<Question> question_list(const nlohmann::json& obj, const char* key, const std::string& source,
                                    std::size_t line, bool required) {
    std::vector<Question> out;
    if (!obj.contains(key)) {
        if (required) {
            throw FormatError(source, line, std::string("missing field '") + key + "'");
        }
        return out;
    }
    if (!obj[key].is_array()) {
        throw FormatError(source, line, std::string("field '") + key + "' must be an array");
    }
    for (const auto& item : obj[key]) {
        out.push_back(question_from_json(item, source, line));
    }
    return out;
}

template <typename F>
void for_each_json_line(std::istream& in, const std::string& source, F f) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(source, line_no, std::string("malformed JSON: ") + e.what());
        }
        if (!j.is_object()) {
            throw FormatError(source, line_no, "expected a JSON object");
        }
        try {
            f(j, line_no);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(source, line_no, e.what());
        }
    }
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (is_space(c)) {
            flush();
        } else if (is_detached_punct(c)) {
            flush();
            out.emplace_back(1, c);
        } else if (c == '\'') {
            const bool inside = !cur.empty() && i + 1 < text.size() && !is_space(text[i + 1]) &&
                                !is_detached_punct(text[i + 1]) && text[i + 1] != '\'';
            flush();
            if (inside) {
                cur.push_back('\'');
            } else {
                out.emplace_back(1, '\'');
            }
        } else {
            cur.push_back(lower(c));
        }
    }
    flush();
    return out;
}

Question make_question(std::string id, std::string text) {
    Question q;
    q.id = std::move(id);
    q.tokens = tokenize(text);
    q.text = std::move(text);
    return q;
}

const char* to_string(PoqrRelation r) noexcept {
    switch (r) {
        case PoqrRelation::paraphrase_over_useful: return "P>U";
        case PoqrRelation::useful_over_neutral: return "U>N";
        case PoqrRelation::paraphrase_over_neutral: return "P>N";
    }
    return "?";
}

Loaded<PairExample> read_pairs(std::istream& in, const std::string& source) {
    Loaded<PairExample> out;
    std::map<std::pair<std::string, std::string>, std::size_t> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        auto cols = split_tabs(line);
        if (cols.size() != 5) {
            throw FormatError(source, line_no, "expected 5 tab-separated columns, found " +
                                                   std::to_string(cols.size()));
        }
        PairExample ex;
        if (cols[4] == "1") {
            ex.label = PairLabel::match;
        } else if (cols[4] == "0") {
            ex.label = PairLabel::no_match;
        } else {
            throw FormatError(source, line_no, "label must be 0 or 1, got '" + cols[4] + "'");
        }
        if (cols[0] == cols[1]) {
            throw FormatError(source, line_no, "pair compares question '" + cols[0] + "' with itself");
        }
        auto key = std::make_pair(cols[0], cols[1]);
        if (auto it = seen.find(key); it != seen.end()) {
            out.warnings.push_back(source + ":" + std::to_string(line_no) + ": duplicate pair (" + cols[0] +
                                   ", " + cols[1] + ") also on line " + std::to_string(it->second));
        } else {
            seen.emplace(key, line_no);
        }
        ex.q1 = make_question(cols[0], cols[2]);
        ex.q2 = make_question(cols[1], cols[3]);
        out.records.push_back(std::move(ex));
    }
    return out;
}

Loaded<PairExample> load_pairs(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    return read_pairs(in, path.string());
}

PairCounts count_labels(std::span<const PairExample> pairs) {
    PairCounts c;
    for (const auto& p : pairs) {
        (p.label == PairLabel::match ? c.match : c.no_match) += 1;
    }
    return c;
}

Loaded<RankingGroup> read_ranking_groups(std::istream& in, const std::string& source) {
    Loaded<RankingGroup> out;
    for_each_json_line(in, source, [&](const nlohmann::json& j, std::size_t line) {
        if (!j.contains("query")) {
            throw FormatError(source, line, "missing field 'query'");
        }
        RankingGroup g;
        g.query = question_from_json(j["query"], source, line);
        g.positives = question_list(j, "positives", source, line, true);
        auto candidates = question_list(j, "candidates", source, line, true);
        std::unordered_set<std::string> pos_ids;
        for (const auto& p : g.positives) {
            pos_ids.insert(p.id);
        }
        std::unordered_set<std::string> cand_ids;
        for (auto& c : candidates) {
            cand_ids.insert(c.id);
            if (!pos_ids.contains(c.id)) {
                g.negatives.push_back(std::move(c));
            }
        }
        for (const auto& p : g.positives) {
            if (!cand_ids.contains(p.id)) {
                out.warnings.push_back(source + ":" + std::to_string(line) + ": positive '" + p.id +
                                       "' is not listed among the candidates");
            }
        }
        out.records.push_back(std::move(g));
    });
    return out;
}

Loaded<RankingGroup> load_ranking_groups(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    return read_ranking_groups(in, path.string());
}

Loaded<PoqrGroup> read_poqr_groups(std::istream& in, const std::string& source) {
    Loaded<PoqrGroup> out;
    for_each_json_line(in, source, [&](const nlohmann::json& j, std::size_t line) {
        if (!j.contains("ref")) {
            throw FormatError(source, line, "missing field 'ref'");
        }
        PoqrGroup g;
        g.ref = question_from_json(j["ref"], source, line);
        g.paraphrases = question_list(j, "paraphrases", source, line, false);
        g.useful = question_list(j, "useful", source, line, false);
        g.neutral = question_list(j, "neutral", source, line, false);
        std::unordered_set<std::string> ids;
        for (const auto* list : {&g.paraphrases, &g.useful, &g.neutral}) {
            for (const auto& q : *list) {
                if (!ids.insert(q.id).second) {
                    throw FormatError(source, line, "question '" + q.id + "' appears in more than one list");
                }
            }
        }
        out.records.push_back(std::move(g));
    });
    return out;
}

Loaded<PoqrGroup> load_poqr_groups(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    return read_poqr_groups(in, path.string());
}

std::vector<OrderedPair> expand_poqr(std::span<const PoqrGroup> groups) {
    std::vector<OrderedPair> out;
    for (const auto& g : groups) {
        for (const auto& p : g.paraphrases) {
            for (const auto& u : g.useful) {
                out.push_back({g.ref, p, u, PoqrRelation::paraphrase_over_useful});
            }
        }
        for (const auto& u : g.useful) {
            for (const auto& n : g.neutral) {
                out.push_back({g.ref, u, n, PoqrRelation::useful_over_neutral});
            }
        }
        for (const auto& p : g.paraphrases) {
            for (const auto& n : g.neutral) {
                out.push_back({g.ref, p, n, PoqrRelation::paraphrase_over_neutral});
            }
        }
    }
    return out;
}

std::vector<PoqrStats> load_poqr_stats(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    std::vector<PoqrStats> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') {
            continue;
        }
        auto cols = split_tabs(line);
        if (cols.size() != 5) {
            throw FormatError(path.string(), line_no, "expected dataset, P, U, N, pairs");
        }
        try {
            out.push_back({cols[0], std::stoul(cols[1]), std::stoul(cols[2]), std::stoul(cols[3]),
                           std::stoul(cols[4])});
        } catch (const std::exception&) {
            throw FormatError(path.string(), line_no, "counts must be non-negative integers");
        }
    }
    return out;
}

Loaded<Question> read_labeled_questions(std::istream& in, const std::string& source) {
    Loaded<Question> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        auto cols = split_tabs(line);
        if (cols.size() != 3) {
            throw FormatError(source, line_no, "expected question, coarse, fine");
        }
        Question q = make_question("q" + std::to_string(line_no), cols[0]);
        if (q.tokens.empty()) {
            throw FormatError(source, line_no, "empty question text");
        }
        q.coarse = cols[1];
        q.fine = cols[2];
        out.records.push_back(std::move(q));
    }
    return out;
}

Loaded<Question> load_labeled_questions(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    return read_labeled_questions(in, path.string());
}

std::vector<Fold> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k < 2 || k > n) {
        throw ArgumentError("kfold_split: k=" + std::to_string(k) + " must be in [2, " + std::to_string(n) + "]");
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));
    std::vector<Fold> folds(k);
    std::vector<std::size_t> fold_of(n);
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t size = n / k + (f < n % k ? 1 : 0);
        for (std::size_t i = 0; i < size; ++i) {
            fold_of[order[pos++]] = f;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t f = 0; f < k; ++f) {
            (fold_of[i] == f ? folds[f].test : folds[f].train).push_back(i);
        }
    }
    return folds;
}

std::vector<Fold> stratified_kfold_split(std::span<const std::size_t> labels, std::size_t k, std::uint64_t seed) {
    const std::size_t n = labels.size();
    if (k < 2 || k > n) {
        throw ArgumentError("stratified_kfold_split: k=" + std::to_string(k) + " must be in [2, " +
                            std::to_string(n) + "]");
    }
    std::map<std::size_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < n; ++i) {
        by_class[labels[i]].push_back(i);
    }
    Rng rng(seed);
    // Deal every class round-robin, continuing where the previous class stopped,
    // so the overall fold sizes stay balanced.
    std::vector<std::size_t> fold_of(n);
    std::size_t next = 0;
    for (auto& [label, members] : by_class) {
        rng.shuffle(std::span<std::size_t>(members));
        for (auto i : members) {
            fold_of[i] = next;
            next = (next + 1) % k;
        }
    }
    std::vector<Fold> folds(k);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t f = 0; f < k; ++f) {
            (fold_of[i] == f ? folds[f].test : folds[f].train).push_back(i);
        }
    }
    return folds;
}

std::vector<PairExample> generate_negatives(std::span<const Question> questions, std::size_t count,
                                            std::uint64_t seed) {
    std::size_t possible = 0;
    for (std::size_t i = 0; i < questions.size(); ++i) {
        if (!questions[i].coarse) {
            throw DataError("generate_negatives: question '" + questions[i].id + "' has no coarse label");
        }
        for (std::size_t j = i + 1; j < questions.size(); ++j) {
            if (questions[j].coarse && *questions[i].coarse != *questions[j].coarse) {
                ++possible;
            }
        }
    }
    if (count > possible) {
        throw ArgumentError("generate_negatives: requested " + std::to_string(count) + " pairs but only " +
                            std::to_string(possible) + " cross-class pairs exist");
    }
    Rng rng(seed);
    std::set<std::pair<std::size_t, std::size_t>> chosen;
    std::vector<PairExample> out;
    while (out.size() < count) {
        std::size_t a = rng.below(questions.size());
        std::size_t b = rng.below(questions.size());
        if (a == b || *questions[a].coarse == *questions[b].coarse) {
            continue;
        }
        if (!chosen.insert({std::min(a, b), std::max(a, b)}).second) {
            continue;
        }
        out.push_back({questions[a], questions[b], PairLabel::no_match});
    }
    return out;
}

}  // namespace sqm
