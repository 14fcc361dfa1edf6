#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sqm/autodiff.hpp"
#include "sqm/tensor.hpp"

namespace sqm {

struct NamedTensor {
    std::string name;
    Tensor value;
};

/// Writes `manifest.json` (ordered {name, shape, dtype:"f32"}) and `tensors.bin`
/// (little-endian f32, row-major, manifest order) into `dir`, creating it.
void save_checkpoint(const std::filesystem::path& dir, const std::vector<NamedTensor>& tensors);

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& dir);

std::vector<NamedTensor> snapshot(const ParameterList& params);

/// Copies checkpoint values into parameters by name and shape; every parameter
/// must be present.
void restore(const ParameterList& params, const std::vector<NamedTensor>& tensors);

}  // namespace sqm
