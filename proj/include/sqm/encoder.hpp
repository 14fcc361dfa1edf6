#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
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

enum class EncoderKind { gru, rcnn };

/// How two questions are compared: cross-attentive pair vectors, or each
/// question's own mean-pooled states.
enum class PairMode { attentive, independent };

EncoderKind parse_encoder_kind(std::string_view name);
const char* to_string(EncoderKind kind) noexcept;
PairMode parse_pair_mode(std::string_view name);
const char* to_string(PairMode mode) noexcept;

struct EncoderConfig {
    EncoderKind kind = EncoderKind::gru;
    bool attention = true;
    /// Hidden size; must equal the embedding dimension.
    std::size_t d = 300;
    double dropout_keep = 0.5;
    std::size_t rcnn_width = 2;
    double lr = 0.01;
    std::size_t batch = 50;
    std::size_t epochs = 30;
    std::uint64_t seed = 1;
    double margin = 1.0;
    double clip_norm = 5.0;
    double init_scale = 0.05;
    bool train_embeddings = false;
    /// Defaults to attentive when attention is on.
    std::optional<PairMode> pair_mode;

    PairMode effective_pair_mode() const;
    void validate() const;
    nlohmann::ordered_json to_json() const;
    static EncoderConfig from_json(const nlohmann::json& j);
};

/// Cross-attention of one token embedding over another question's states:
///   C = tanh(W_H H + W_v v 1^T),  alpha = softmax(w^T C),  r = H alpha
class AttentionLayer {
public:
    AttentionLayer() = default;
    AttentionLayer(const std::string& prefix, std::size_t d);

    std::size_t dim() const noexcept { return w_.value.size(); }
    ParameterList parameters() { return {&w_h_, &w_v_, &w_}; }
    Parameter& w_h() { return w_h_; }
    Parameter& w_v() { return w_v_; }
    Parameter& w() { return w_; }

    struct Result {
        Var alpha;
        Var r;
    };

    Result attend(Tape& tape, Var states, Var v);
    Result attend(Tape& tape, Var states, Var v) const;

    /// Attends every column of `others` (d x m) over `states` (d x n).
    std::vector<Result> attend_all(Tape& tape, Var states, Var others);
    std::vector<Result> attend_all(Tape& tape, Var states, Var others) const;

private:
    template <typename Self>
    static std::vector<Result> attend_impl(Self& self, Tape& tape, Var states, Var others);

    Parameter w_h_, w_v_, w_;
};

/// Question encoder: embeddings -> GRU or RCNN states -> mean pooling, with
/// optional cross-attention between the two questions of a pair.
class EncoderModel {
public:
    EncoderModel(EncoderConfig config, std::shared_ptr<const EmbeddingTable> table);

    EncoderModel(EncoderModel&&) noexcept = default;
    EncoderModel& operator=(EncoderModel&&) noexcept = default;
    EncoderModel(const EncoderModel&) = delete;
    EncoderModel& operator=(const EncoderModel&) = delete;

    const EncoderConfig& config() const noexcept { return config_; }
    const EmbeddingTable& table() const noexcept { return *table_; }
    std::shared_ptr<const EmbeddingTable> table_ptr() const noexcept { return table_; }

    ParameterList parameters();
    /// Seeded uniform(-init_scale, init_scale) initialization of the trainable weights.
    void init(std::uint64_t seed);

    GruCell* gru() { return gru_ ? &*gru_ : nullptr; }
    RcnnCell* rcnn() { return rcnn_ ? &*rcnn_ : nullptr; }
    AttentionLayer* attention() { return attention_ ? &*attention_ : nullptr; }

    struct Encoded {
        /// d x n token embeddings (after dropout when training).
        Var inputs;
        /// d x n recurrent states.
        Var states;
    };

    struct PairEncoded {
        Var vec_p;
        Var vec_q;
        /// One attention distribution over q's states per token of p, and vice versa.
        std::vector<Var> alpha_pq;
        std::vector<Var> alpha_qp;
    };

    /// Pass an Rng to apply inverted dropout to the inputs (training mode).
    Encoded encode(Tape& tape, std::span<const std::string> tokens, Rng* dropout = nullptr);
    Encoded encode(Tape& tape, std::span<const std::string> tokens) const;

    Var pooled(const Encoded& e) const;
    PairEncoded encode_pair(Tape& tape, const Encoded& p, const Encoded& q);
    PairEncoded encode_pair(Tape& tape, const Encoded& p, const Encoded& q) const;

    /// Cosine of the two final representations in the configured pair mode.
    Var score(Tape& tape, const Encoded& p, const Encoded& q);
    Var score(Tape& tape, const Encoded& p, const Encoded& q) const;
    Var score(Tape& tape, const Encoded& p, const Encoded& q, PairMode mode) const;

    // Inference conveniences on a private grad-free tape.
    struct Encoding {
        Tensor states;
        Tensor pooled;
    };
    struct PairEncoding {
        Tensor vec_p;
        Tensor vec_q;
        /// n_p x n_q: row t is the attention of p's token t over q's states.
        Tensor alpha_pq;
        /// n_q x n_p.
        Tensor alpha_qp;
    };
    Encoding encode(std::span<const std::string> tokens) const;
    PairEncoding encode_pair(std::span<const std::string> p, std::span<const std::string> q) const;
    double similarity(std::span<const std::string> p, std::span<const std::string> q) const;
    double similarity(std::span<const std::string> p, std::span<const std::string> q, PairMode mode) const;

private:
    template <typename Self>
    static Encoded encode_impl(Self& self, Tape& tape, std::span<const std::string> tokens, Rng* dropout);
    template <typename Self>
    static PairEncoded pair_impl(Self& self, Tape& tape, const Encoded& p, const Encoded& q);
    template <typename Self>
    static Var score_impl(Self& self, Tape& tape, const Encoded& p, const Encoded& q, PairMode mode);

    EncoderConfig config_;
    std::shared_ptr<const EmbeddingTable> table_;
    std::optional<GruCell> gru_;
    std::optional<RcnnCell> rcnn_;
    std::optional<AttentionLayer> attention_;
    /// Present only with trainable embeddings: the table plus one unk row.
    std::optional<Parameter> embedding_;
    /// Present under the learned-unk policy with frozen embeddings.
    std::optional<Parameter> unk_;
};

/// max over p in {p+} u negatives of f(p) - f(p+) + margin [p != p+]; never negative.
double max_margin_loss(double positive, std::span<const double> negatives, double margin);
Var max_margin_loss(Tape& tape, Var positive, std::span<const Var> negatives, double margin);

/// Mean of the per-positive losses of one ranking group.
Var group_loss(Tape& tape, EncoderModel& model, const RankingGroup& group, double margin, Rng* dropout = nullptr);

/// Ranks positives and negatives of every group by similarity to the query,
/// in the model's pair mode unless `mode` overrides it.
RankingRun rank_groups(const EncoderModel& model, std::span<const RankingGroup> groups,
                       std::optional<PairMode> mode = std::nullopt);

struct EncoderEpoch {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    std::optional<double> dev_mrr;
    std::optional<double> dev_recall1;
};

struct EncoderTrainReport {
    std::vector<EncoderEpoch> epochs;
    /// Epoch whose parameters were kept; 0 means the initial ones.
    std::size_t best_epoch = 0;
    std::optional<double> best_dev_mrr;
    std::size_t steps = 0;

    nlohmann::ordered_json to_json() const;
};

struct EncoderTrainResult {
    EncoderModel model;
    EncoderTrainReport report;
};

using EncoderEpochCallback = std::function<void(const EncoderModel&, const EncoderEpoch&)>;

/// Mini-batch Adam on the max-margin loss over seeded shuffles of the groups.
/// With dev groups, the parameters of the best dev-MRR epoch are kept.
EncoderTrainResult train_encoder(const EncoderConfig& config, std::span<const RankingGroup> train,
                                 std::shared_ptr<const EmbeddingTable> table,
                                 std::span<const RankingGroup> dev = {},
                                 const EncoderEpochCallback& on_epoch = {});

/// Checkpoint directory plus `model.json` holding the configuration.
void save_encoder(const std::filesystem::path& dir, EncoderModel& model);
EncoderModel load_encoder(const std::filesystem::path& dir, std::shared_ptr<const EmbeddingTable> table);

/// {tokens_p, tokens_q, alpha: n_p x n_q}
nlohmann::ordered_json attention_dump(const EncoderModel& model, std::span<const std::string> p,
                                      std::span<const std::string> q);

}  // namespace sqm
