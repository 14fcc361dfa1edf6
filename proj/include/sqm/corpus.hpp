#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sqm {

/// Lowercases, splits on whitespace and detaches . , ? ! " ( ) : ; as tokens.
/// An apostrophe inside a word starts a new token ("what's" -> what 's).
std::vector<std::string> tokenize(std::string_view text);

struct Question {
    std::string id;
    std::string text;
    std::vector<std::string> tokens;
    /// Key into a parsed-question store; defaults to the id when absent.
    std::optional<std::string> parse_ref;
    std::optional<std::string> coarse;
    std::optional<std::string> fine;
};

Question make_question(std::string id, std::string text);

enum class PairLabel { no_match = 0, match = 1 };

struct PairExample {
    Question q1;
    Question q2;
    PairLabel label = PairLabel::no_match;
};

struct RankingGroup {
    Question query;
    std::vector<Question> positives;
    std::vector<Question> negatives;
};

/// One reference question with its paraphrase / useful / neutral candidates.
struct PoqrGroup {
    Question ref;
    std::vector<Question> paraphrases;
    std::vector<Question> useful;
    std::vector<Question> neutral;
};

enum class PoqrRelation { paraphrase_over_useful, useful_over_neutral, paraphrase_over_neutral };

const char* to_string(PoqrRelation r) noexcept;

/// `better` is more useful than `worse` for `ref`.
struct OrderedPair {
    Question ref;
    Question better;
    Question worse;
    PoqrRelation relation = PoqrRelation::paraphrase_over_useful;
};

template <typename T>
struct Loaded {
    std::vector<T> records;
    std::vector<std::string> warnings;
};

/// TSV without header: id1, id2, text1, text2, label in {0,1}.
Loaded<PairExample> read_pairs(std::istream& in, const std::string& source);
Loaded<PairExample> load_pairs(const std::filesystem::path& path);

struct PairCounts {
    std::size_t match = 0;
    std::size_t no_match = 0;
};
PairCounts count_labels(std::span<const PairExample> pairs);

/// JSON lines {query, positives:[...], candidates:[...]}; a question is a string
/// or an object {id, text, coarse?, fine?, parse?}. negatives = candidates - positives.
Loaded<RankingGroup> read_ranking_groups(std::istream& in, const std::string& source);
Loaded<RankingGroup> load_ranking_groups(const std::filesystem::path& path);

/// JSON lines {ref, paraphrases, useful, neutral}.
Loaded<PoqrGroup> read_poqr_groups(std::istream& in, const std::string& source);
Loaded<PoqrGroup> load_poqr_groups(const std::filesystem::path& path);

/// All P>U, U>N and P>N pairs of every group, in that order per group.
std::vector<OrderedPair> expand_poqr(std::span<const PoqrGroup> groups);

/// Declared per-dataset statistics (not re-derived from the groups).
struct PoqrStats {
    std::string dataset;
    std::size_t paraphrases = 0;
    std::size_t useful = 0;
    std::size_t neutral = 0;
    std::size_t pairs = 0;
};
std::vector<PoqrStats> load_poqr_stats(const std::filesystem::path& path);

/// Taxonomy label TSV: question text, coarse, fine. Ids are "q<line>".
Loaded<Question> read_labeled_questions(std::istream& in, const std::string& source);
Loaded<Question> load_labeled_questions(const std::filesystem::path& path);

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Seeded shuffle then a balanced partition into k test folds (sizes differ by
/// at most one, larger folds first). Index lists are sorted.
std::vector<Fold> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

/// Same contract, but every class is spread evenly over the folds.
std::vector<Fold> stratified_kfold_split(std::span<const std::size_t> labels, std::size_t k,
                                         std::uint64_t seed);

/// Samples `count` distinct no-match pairs whose coarse labels differ.
/// Lexical overlap between the two questions is not controlled.
std::vector<PairExample> generate_negatives(std::span<const Question> questions, std::size_t count,
                                            std::uint64_t seed);

}  // namespace sqm
