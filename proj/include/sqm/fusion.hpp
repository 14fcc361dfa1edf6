#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sqm/corpus.hpp"
#include "sqm/embeddings.hpp"
#include "sqm/encoder.hpp"
#include "sqm/focus.hpp"
#include "sqm/taxonomy.hpp"

namespace sqm {

/// Which feature blocks are filled; disabled blocks stay in place as zeros.
struct FeatureFlags {
    bool sim = true;
    bool coarse = true;
    bool fine = true;
    bool focus = true;

    /// Comma-separated ablations: -sim, -CC, -FC, -focus.
    static FeatureFlags from_ablation(std::string_view ablation);
    std::string to_string() const;
};

/// Layout: [sim, onehot(coarse_p), onehot(fine_p), onehot(coarse_q), onehot(fine_q),
///          coarse_match, fine_match, fsim]
std::size_t feature_length(const LabelSet& labelset);

std::vector<double> assemble_features(double sim, const TaxonomyLabels& p, const TaxonomyLabels& q, double fsim,
                                      const LabelSet& labelset, const FeatureFlags& flags = {});

/// Borrowed component models. Only the components of enabled blocks are needed.
/// Without taxonomy models the gold labels carried by the questions are used.
struct FusionComponents {
    const EncoderModel* encoder = nullptr;
    const TaxonomyModel* coarse_model = nullptr;
    const TaxonomyModel* fine_model = nullptr;
    const LabelSet* labelset = nullptr;
    const ParseStore* parses = nullptr;
    /// Vectors for focus similarity; the encoder's table when null.
    const EmbeddingTable* focus_table = nullptr;
    FeatureFlags flags;
};

/// Per-question part of the features, computed once and reused across pairs.
struct QuestionAnalysis {
    TaxonomyLabels labels;
    std::vector<std::string> focus;
};

struct FeatureRecord {
    std::string id_p;
    std::string id_q;
    double sim = 0.0;
    std::string coarse_p, fine_p, coarse_q, fine_q;
    std::string focus_p, focus_q;
    double fsim = 0.0;
    std::vector<double> features;

    nlohmann::ordered_json to_json() const;
};

class FeatureBuilder {
public:
    explicit FeatureBuilder(FusionComponents components);

    std::size_t length() const { return feature_length(*c_.labelset); }
    const FusionComponents& components() const noexcept { return c_; }

    QuestionAnalysis analyze(const Question& q) const;
    FeatureRecord build(const Question& p, const Question& q) const;
    FeatureRecord build(const Question& p, const QuestionAnalysis& ap, const Question& q,
                        const QuestionAnalysis& aq) const;

private:
    FusionComponents c_;
};

struct LinearModel {
    std::vector<double> weights;
    double bias = 0.0;

    double margin(std::span<const double> x) const;
    /// match iff margin >= 0.
    PairLabel predict(std::span<const double> x) const;
};

struct LinearTrainConfig {
    double reg = 1e-3;
    std::size_t epochs = 100;
    std::uint64_t seed = 1;
};

/// L2-regularized hinge loss by seeded stochastic subgradient steps (step 1/(reg t)).
/// The bias is learned as the weight of a constant input. The end-of-epoch
/// iterate with the lowest objective is returned.
LinearModel train_pair_classifier(std::span<const std::vector<double>> features, std::span<const PairLabel> labels,
                                  const LinearTrainConfig& config = {});

/// Same trainer on differences x_better - x_worse, each required to score >= 1;
/// no bias since only differences matter.
LinearModel train_pair_ranker(std::span<const std::vector<double>> better, std::span<const std::vector<double>> worse,
                              const LinearTrainConfig& config = {});

/// reg/2 (|w|^2 + b^2) + mean hinge(1 - y (w.x + b)).
double hinge_objective(const LinearModel& model, std::span<const std::vector<double>> features,
                       std::span<const double> targets, double reg);

double training_accuracy(const LinearModel& model, std::span<const std::vector<double>> features,
                         std::span<const PairLabel> labels);

/// Checkpoint directory; `kind` and `flags` are recorded in model.json.
void save_linear(const std::filesystem::path& dir, const LinearModel& model, std::string_view kind,
                 const FeatureFlags& flags);

struct LoadedLinear {
    LinearModel model;
    std::string kind;
    FeatureFlags flags;
};
LoadedLinear load_linear(const std::filesystem::path& dir);

}  // namespace sqm
