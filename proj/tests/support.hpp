#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>
#include <vector>

#include "sqm/embeddings.hpp"
#include "sqm/rng.hpp"
#include "sqm/tensor.hpp"

namespace sqm::test {

inline std::filesystem::path data_path(const std::string& name) {
    return std::filesystem::path(SQM_TEST_DATA_DIR) / name;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        Rng rng(std::hash<std::string>{}(tag) ^ reinterpret_cast<std::uintptr_t>(this));
        path_ = std::filesystem::temp_directory_path() /
                ("sqm-" + tag + "-" + std::to_string(rng.next_u64() % 1000000007ULL));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

/// Table over the given tokens with rows drawn uniformly from [-scale, scale].
inline std::shared_ptr<EmbeddingTable> make_table(const std::vector<std::string>& tokens, std::size_t dim,
                                                  std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Tensor m({tokens.size(), dim});
    for (auto& v : m.values()) {
        v = rng.uniform(-scale, scale);
    }
    return std::make_shared<EmbeddingTable>(tokens, std::move(m));
}

}  // namespace sqm::test
