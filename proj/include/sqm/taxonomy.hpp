#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sqm/autodiff.hpp"
#include "sqm/corpus.hpp"
#include "sqm/embeddings.hpp"
#include "sqm/eval.hpp"
#include "sqm/recurrent.hpp"

namespace sqm {

/// A fine class is identified by its (coarse, name) pair; List reuses names of
/// other coarse classes.
struct FineLabel {
    std::string coarse;
    std::string name;

    /// "Coarse:Name"
    std::string qualified() const { return coarse + ":" + name; }
    bool operator==(const FineLabel&) const = default;
};

enum class TaxonomyHead { coarse, fine };

TaxonomyHead parse_taxonomy_head(std::string_view name);
const char* to_string(TaxonomyHead head) noexcept;

class LabelSet {
public:
    LabelSet() = default;
    /// Coarse order follows first appearance in `fine`.
    explicit LabelSet(std::vector<FineLabel> fine);

    const std::vector<std::string>& coarse() const noexcept { return coarse_; }
    const std::vector<FineLabel>& fine() const noexcept { return fine_; }
    std::size_t size(TaxonomyHead head) const noexcept {
        return head == TaxonomyHead::coarse ? coarse_.size() : fine_.size();
    }
    /// Coarse names, or qualified fine names.
    std::vector<std::string> labels(TaxonomyHead head) const;

    std::optional<std::size_t> find_coarse(std::string_view name) const;
    std::optional<std::size_t> find_fine(std::string_view coarse, std::string_view name) const;
    std::size_t coarse_of(std::size_t fine_index) const { return fine_coarse_[fine_index]; }
    std::size_t fine_count(std::string_view coarse) const;

    /// Gold label index of a question for the head; DataError naming the
    /// question id when it is missing or not in the set.
    std::size_t gold_index(const Question& q, TaxonomyHead head) const;

private:
    std::vector<std::string> coarse_;
    std::vector<FineLabel> fine_;
    std::vector<std::size_t> fine_coarse_;
};

/// TSV lines `coarse<TAB>fine`; `#` starts a comment line.
LabelSet read_labelset(std::istream& in, const std::string& source);
LabelSet load_labelset(const std::filesystem::path& path);
std::filesystem::path default_labelset_path();

struct TaxonomyConfig {
    /// Number of convolution filters k.
    std::size_t filters = 100;
    /// Convolution and pooling width m.
    std::size_t width = 2;
    /// Hidden size of each recurrent direction.
    std::size_t hidden = 100;
    std::size_t ff_hidden = 100;
    double lr = 0.01;
    double dropout_keep = 0.5;
    std::size_t epochs = 30;
    std::size_t batch = 50;
    std::uint64_t seed = 1;
    double init_scale = 0.05;
    double clip_norm = 5.0;

    void validate() const;
    nlohmann::ordered_json to_json() const;
    static TaxonomyConfig from_json(const nlohmann::json& j);
};

struct TaxonomyPrediction {
    std::size_t index = 0;
    std::string label;
    double probability = 0.0;
    std::vector<double> distribution;
};

/// Token positions covered by the window of position t: [t - ceil((m-1)/2), ... + m - 1].
/// For m = 2 this is t-1..t; odd m gives the centred window.
std::ptrdiff_t window_start(std::size_t t, std::size_t width);

/// Embedding -> zero-padded convolution c_t = tanh(F [window of t]) -> per-position
/// max over the same window -> bidirectional GRU -> [last forward; last backward]
/// -> tanh feed-forward layer -> softmax over the head's labels.
class TaxonomyModel {
public:
    TaxonomyModel(TaxonomyConfig config, std::shared_ptr<const EmbeddingTable> table, TaxonomyHead head,
                  std::vector<std::string> labels);

    TaxonomyModel(TaxonomyModel&&) noexcept = default;
    TaxonomyModel& operator=(TaxonomyModel&&) noexcept = default;
    TaxonomyModel(const TaxonomyModel&) = delete;
    TaxonomyModel& operator=(const TaxonomyModel&) = delete;

    const TaxonomyConfig& config() const noexcept { return config_; }
    TaxonomyHead head() const noexcept { return head_; }
    const std::vector<std::string>& labels() const noexcept { return labels_; }
    const EmbeddingTable& table() const noexcept { return *table_; }

    ParameterList parameters();
    void init(std::uint64_t seed);

    Parameter& output_weights() { return w_out_; }
    Parameter& output_bias() { return b_out_; }

    /// Unnormalized class scores. Trailing "<pad>" tokens are ignored.
    Var logits(Tape& tape, std::span<const std::string> tokens, Rng* dropout = nullptr);
    Var logits(Tape& tape, std::span<const std::string> tokens) const;

    TaxonomyPrediction classify(std::span<const std::string> tokens) const;

private:
    template <typename Self>
    static Var logits_impl(Self& self, Tape& tape, std::span<const std::string> tokens, Rng* dropout);

    TaxonomyConfig config_;
    std::shared_ptr<const EmbeddingTable> table_;
    TaxonomyHead head_;
    std::vector<std::string> labels_;
    std::vector<Parameter> conv_;
    GruCell forward_;
    GruCell backward_;
    Parameter w_ff_, b_ff_;
    Parameter w_out_, b_out_;
};

struct TaxonomyEpoch {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double train_accuracy = 0.0;
    double train_macro_f1 = 0.0;
    std::optional<double> dev_accuracy;
    std::optional<double> dev_macro_f1;
};

struct TaxonomyTrainReport {
    std::vector<TaxonomyEpoch> epochs;
    std::size_t steps = 0;

    nlohmann::ordered_json to_json() const;
};

struct TaxonomyTrainResult {
    TaxonomyModel model;
    TaxonomyTrainReport report;
};

using TaxonomyEpochCallback = std::function<bool(const TaxonomyModel&, const TaxonomyEpoch&)>;

/// Cross-entropy with Adam over seeded shuffles. The callback may return false
/// to stop early.
TaxonomyTrainResult train_classifier(const TaxonomyConfig& config, std::span<const Question> train,
                                     std::shared_ptr<const EmbeddingTable> table, const LabelSet& labelset,
                                     TaxonomyHead head, std::span<const Question> dev = {},
                                     const TaxonomyEpochCallback& on_epoch = {});

ClassificationReport evaluate_classifier(const TaxonomyModel& model, std::span<const Question> questions,
                                         const LabelSet& labelset);

void save_taxonomy(const std::filesystem::path& dir, TaxonomyModel& model);
TaxonomyModel load_taxonomy(const std::filesystem::path& dir, std::shared_ptr<const EmbeddingTable> table);

/// Coarse and fine label indices of one question.
struct TaxonomyLabels {
    std::size_t coarse = 0;
    std::size_t fine = 0;
};

/// [onehot(coarse_p), onehot(fine_p), onehot(coarse_q), onehot(fine_q), coarse_match, fine_match]
std::vector<double> taxonomy_features(const TaxonomyLabels& p, const TaxonomyLabels& q, const LabelSet& labelset);

std::size_t taxonomy_feature_length(const LabelSet& labelset);

}  // namespace sqm
