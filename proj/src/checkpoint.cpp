#include "sqm/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "sqm/error.hpp"

namespace sqm {

namespace fs = std::filesystem;

namespace {

void put_f32_le(std::ostream& out, double v) {
    const auto f = static_cast<float>(v);
    std::uint32_t bits = 0;
    std::memcpy(&bits, &f, sizeof bits);
    const unsigned char bytes[4] = {
        static_cast<unsigned char>(bits & 0xFFu),
        static_cast<unsigned char>((bits >> 8) & 0xFFu),
        static_cast<unsigned char>((bits >> 16) & 0xFFu),
        static_cast<unsigned char>((bits >> 24) & 0xFFu),
    };
    out.write(reinterpret_cast<const char*>(bytes), 4);
}

double get_f32_le(const unsigned char* bytes) {
    const std::uint32_t bits = static_cast<std::uint32_t>(bytes[0]) |
                               (static_cast<std::uint32_t>(bytes[1]) << 8) |
                               (static_cast<std::uint32_t>(bytes[2]) << 16) |
                               (static_cast<std::uint32_t>(bytes[3]) << 24);
    float f = 0.0F;
    std::memcpy(&f, &bits, sizeof f);
    return static_cast<double>(f);
}

}  // namespace

void save_checkpoint(const fs::path& dir, const std::vector<NamedTensor>& tensors) {
    fs::create_directories(dir);
    nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
    std::ofstream bin(dir / "tensors.bin", std::ios::binary | std::ios::trunc);
    if (!bin) {
        throw DataError("cannot write " + (dir / "tensors.bin").string());
    }
    for (const auto& t : tensors) {
        nlohmann::ordered_json entry;
        entry["name"] = t.name;
        entry["shape"] = t.value.shape();
        entry["dtype"] = "f32";
        manifest.push_back(std::move(entry));
        for (double v : t.value.values()) {
            put_f32_le(bin, v);
        }
    }
    std::ofstream man(dir / "manifest.json", std::ios::trunc);
    if (!man) {
        throw DataError("cannot write " + (dir / "manifest.json").string());
    }
    man << manifest.dump(2) << "\n";
}

std::vector<NamedTensor> load_checkpoint(const fs::path& dir) {
    const auto man_path = dir / "manifest.json";
    std::ifstream man(man_path);
    if (!man) {
        throw DataError("missing checkpoint manifest " + man_path.string());
    }
    nlohmann::json manifest;
    try {
        man >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(man_path.string(), 0, e.what());
    }
    if (!manifest.is_array()) {
        throw FormatError(man_path.string(), 0, "manifest must be a JSON array");
    }
    std::ifstream bin(dir / "tensors.bin", std::ios::binary);
    if (!bin) {
        throw DataError("missing checkpoint data " + (dir / "tensors.bin").string());
    }
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
    std::vector<NamedTensor> out;
    std::size_t offset = 0;
    for (const auto& entry : manifest) {
        if (!entry.contains("name") || !entry.contains("shape") || entry.value("dtype", "") != "f32") {
            throw FormatError(man_path.string(), 0, "manifest entry needs name, shape and dtype f32");
        }
        Shape shape = entry["shape"].get<Shape>();
        std::size_t count = 1;
        for (auto d : shape) {
            count *= d;
        }
        if (offset + 4 * count > bytes.size()) {
            throw FormatError((dir / "tensors.bin").string(), 0,
                              "truncated data for tensor " + entry["name"].get<std::string>());
        }
        std::vector<double> values(count);
        for (std::size_t k = 0; k < count; ++k) {
            values[k] = get_f32_le(bytes.data() + offset + 4 * k);
        }
        offset += 4 * count;
        out.push_back({entry["name"].get<std::string>(), Tensor(std::move(shape), std::move(values))});
    }
    if (offset != bytes.size()) {
        throw FormatError((dir / "tensors.bin").string(), 0, "trailing bytes after last tensor");
    }
    return out;
}

std::vector<NamedTensor> snapshot(const ParameterList& params) {
    std::vector<NamedTensor> out;
    out.reserve(params.size());
    for (const auto* p : params) {
        out.push_back({p->name, p->value});
    }
    return out;
}

void restore(const ParameterList& params, const std::vector<NamedTensor>& tensors) {
    std::unordered_map<std::string, const Tensor*> by_name;
    for (const auto& t : tensors) {
        by_name.emplace(t.name, &t.value);
    }
    for (auto* p : params) {
        auto it = by_name.find(p->name);
        if (it == by_name.end()) {
            throw DataError("checkpoint lacks parameter " + p->name);
        }
        if (it->second->shape() != p->value.shape()) {
            throw DimensionError("checkpoint parameter " + p->name + " has shape " +
                                 shape_string(it->second->shape()) + ", model expects " +
                                 shape_string(p->value.shape()));
        }
        p->value = *it->second;
        p->grad = Tensor::zeros_like(p->value);
    }
}

}  // namespace sqm
