#pragma once

#include "spader/regressor.hpp"
#include "spader/vae.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace spader {

// Weights file: "SPDR", u32 version, u32 tensor count, then per tensor
// u16 name length, name bytes, u8 rank, u32 dims[rank], f64 values.
// All integers and floats little-endian.

inline constexpr std::uint32_t kWeightsVersion = 1;

class WeightsFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using NamedTensorList = std::vector<std::pair<std::string, Tensor>>;

void save_tensors(const std::filesystem::path& path, const NamedTensorList& tensors);
NamedTensorList load_tensors(const std::filesystem::path& path);

void save_vae(const std::filesystem::path& path, const VaeParams& params);
VaeParams load_vae(const std::filesystem::path& path);

void save_regressor(const std::filesystem::path& path, const RegressorParams& params);
RegressorParams load_regressor(const std::filesystem::path& path);

}  // namespace spader
