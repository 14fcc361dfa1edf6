#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "sqm/embeddings.hpp"
#include "sqm/gradcheck.hpp"

namespace sqm {

/// Random embedding table with tokens w0 .. w{vocab-1}.
std::shared_ptr<EmbeddingTable> random_table(std::size_t vocab, std::size_t dim, std::uint64_t seed,
                                             double scale = 1.0);

struct GradCheckCase {
    std::string name;
    GradCheckReport report;
    double seconds = 0.0;
};

/// Finite-difference checks of every trainable model at toy size: GRU and RCNN
/// encoders, both with the attention path, and the CNN + BiGRU classifier.
/// Questions have between 2 and max_len tokens.
std::vector<GradCheckCase> run_gradcheck_suite(std::size_t d, std::size_t max_len, std::uint64_t seed,
                                               const GradCheckOptions& options = {});

nlohmann::ordered_json to_json(const std::vector<GradCheckCase>& cases);

}  // namespace sqm
