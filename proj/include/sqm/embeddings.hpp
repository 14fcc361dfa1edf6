#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sqm/tensor.hpp"

namespace sqm {

enum class OovPolicy { zero, learned_unk };

OovPolicy parse_oov_policy(std::string_view name);
const char* to_string(OovPolicy policy) noexcept;

/// Pretrained word vectors. Read-only after construction; lookups never fail.
class EmbeddingTable {
public:
    EmbeddingTable(std::vector<std::string> tokens, Tensor matrix, OovPolicy policy = OovPolicy::zero);

    std::size_t dim() const noexcept { return matrix_.cols(); }
    std::size_t vocab_size() const noexcept { return tokens_.size(); }
    OovPolicy policy() const noexcept { return policy_; }

    /// Rows in file order.
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }
    const Tensor& matrix() const noexcept { return matrix_; }
    /// Shared row returned for unknown tokens under the learned-unk policy.
    const Tensor& unk() const noexcept { return unk_; }
    void set_unk(Tensor row);

    std::optional<std::size_t> index_of(std::string_view token) const;
    Tensor lookup(std::string_view token) const;
    /// Mean of the looked-up vectors; the zero vector for an empty list.
    Tensor compose_average(std::span<const std::string> tokens) const;

private:
    std::vector<std::string> tokens_;
    Tensor matrix_;
    OovPolicy policy_;
    Tensor unk_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct EmbeddingLoad {
    EmbeddingTable table;
    std::vector<std::string> warnings;
};

/// Whitespace text vectors: `token v1 ... vd` per line. A leading `|V| d`
/// header line is skipped. Duplicate tokens keep their first occurrence.
EmbeddingLoad read_text_embeddings(std::istream& in, const std::string& source,
                                   OovPolicy policy = OovPolicy::zero);
EmbeddingLoad load_text_embeddings(const std::filesystem::path& path, OovPolicy policy = OovPolicy::zero);

void write_text_embeddings(std::ostream& out, const EmbeddingTable& table);
void save_text_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);

}  // namespace sqm
