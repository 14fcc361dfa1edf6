#include "sqm/embeddings.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sqm/error.hpp"
#include "sqm/rng.hpp"

namespace sqm {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) {
            ++i;
        }
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') {
            ++j;
        }
        if (j > i) {
            out.push_back(line.substr(i, j - i));
        }
        i = j;
    }
    return out;
}

bool parse_double(std::string_view s, double& out) {
    // strtod accepts forms from_chars rejects on older toolchains (e.g. leading '+').
    std::string tmp(s);
    char* end = nullptr;
    out = std::strtod(tmp.c_str(), &end);
    return end == tmp.c_str() + tmp.size() && !tmp.empty();
}

bool parse_size(std::string_view s, std::size_t& out) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

OovPolicy parse_oov_policy(std::string_view name) {
    if (name == "zero") {
        return OovPolicy::zero;
    }
    if (name == "learned-unk") {
        return OovPolicy::learned_unk;
    }
    throw ConfigError("unknown OOV policy '" + std::string(name) + "' (expected zero|learned-unk)");
}

const char* to_string(OovPolicy policy) noexcept {
    return policy == OovPolicy::zero ? "zero" : "learned-unk";
}

EmbeddingTable::EmbeddingTable(std::vector<std::string> tokens, Tensor matrix, OovPolicy policy)
    : tokens_(std::move(tokens)), matrix_(std::move(matrix)), policy_(policy) {
    if (matrix_.rank() != 2 || matrix_.rows() != tokens_.size()) {
        throw DimensionError("embedding matrix " + shape_string(matrix_.shape()) + " does not match " +
                             std::to_string(tokens_.size()) + " tokens");
    }
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (!index_.emplace(tokens_[i], i).second) {
            throw DataError("duplicate embedding token '" + tokens_[i] + "'");
        }
    }
    unk_ = Tensor({dim()});
    if (policy_ == OovPolicy::learned_unk) {
        Rng rng(derive_seed(0, "embeddings.unk"));
        for (auto& x : unk_.values()) {
            x = rng.uniform(-0.05, 0.05);
        }
    }
}

void EmbeddingTable::set_unk(Tensor row) {
    if (row.rank() != 1 || row.size() != dim()) {
        throw DimensionError("unk row must have shape [" + std::to_string(dim()) + "]");
    }
    unk_ = std::move(row);
}

std::optional<std::size_t> EmbeddingTable::index_of(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

Tensor EmbeddingTable::lookup(std::string_view token) const {
    if (auto idx = index_of(token)) {
        Tensor row({dim()});
        for (std::size_t i = 0; i < dim(); ++i) {
            row[i] = matrix_.at(*idx, i);
        }
        return row;
    }
    if (policy_ == OovPolicy::learned_unk) {
        return unk_;
    }
    return Tensor({dim()});
}

Tensor EmbeddingTable::compose_average(std::span<const std::string> tokens) const {
    Tensor out({dim()});
    if (tokens.empty()) {
        return out;
    }
    for (const auto& t : tokens) {
        const Tensor v = lookup(t);
        for (std::size_t i = 0; i < dim(); ++i) {
            out[i] += v[i];
        }
    }
    for (auto& x : out.values()) {
        x /= static_cast<double>(tokens.size());
    }
    return out;
}

EmbeddingLoad read_text_embeddings(std::istream& in, const std::string& source, OovPolicy policy) {
    std::vector<std::string> tokens;
    std::vector<double> values;
    std::vector<std::string> warnings;
    std::unordered_map<std::string, std::size_t> seen;
    std::size_t dim = 0;
    std::size_t line_no = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        auto fields = split_ws(line);
        if (fields.empty()) {
            continue;
        }
        if (tokens.empty() && dim == 0 && fields.size() == 2) {
            std::size_t a = 0;
            std::size_t b = 0;
            if (parse_size(fields[0], a) && parse_size(fields[1], b)) {
                continue;
            }
        }
        if (fields.size() < 2) {
            throw FormatError(source, line_no, "expected a token followed by values");
        }
        const std::size_t d = fields.size() - 1;
        if (dim == 0) {
            dim = d;
        } else if (d != dim) {
            throw FormatError(source, line_no,
                              "expected " + std::to_string(dim) + " values, found " + std::to_string(d));
        }
        std::string token(fields[0]);
        std::vector<double> row(d);
        for (std::size_t i = 0; i < d; ++i) {
            if (!parse_double(fields[i + 1], row[i])) {
                throw FormatError(source, line_no, "bad number '" + std::string(fields[i + 1]) + "'");
            }
        }
        if (auto it = seen.find(token); it != seen.end()) {
            warnings.push_back(source + ":" + std::to_string(line_no) + ": duplicate token '" + token +
                               "' ignored (first seen on line " + std::to_string(it->second) + ")");
            continue;
        }
        seen.emplace(token, line_no);
        tokens.push_back(std::move(token));
        values.insert(values.end(), row.begin(), row.end());
    }
    if (tokens.empty()) {
        throw FormatError(source, 0, "no embedding vectors found");
    }
    const std::size_t n = tokens.size();
    return EmbeddingLoad{EmbeddingTable(std::move(tokens), Tensor::matrix(n, dim, std::move(values)), policy),
                         std::move(warnings)};
}

EmbeddingLoad load_text_embeddings(const std::filesystem::path& path, OovPolicy policy) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open embeddings file " + path.string());
    }
    return read_text_embeddings(in, path.string(), policy);
}

void write_text_embeddings(std::ostream& out, const EmbeddingTable& table) {
    char buf[32];
    for (std::size_t r = 0; r < table.vocab_size(); ++r) {
        out << table.tokens()[r];
        for (std::size_t c = 0; c < table.dim(); ++c) {
            std::snprintf(buf, sizeof buf, "%.9g", table.matrix().at(r, c));
            out << ' ' << buf;
        }
        out << '\n';
    }
}

void save_text_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("cannot write embeddings file " + path.string());
    }
    write_text_embeddings(out, table);
}

}  // namespace sqm
