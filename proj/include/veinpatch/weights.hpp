#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "veinpatch/tensor.hpp"

namespace veinpatch {

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;
};

/// "VPW1" little-endian weight container.
std::vector<std::uint8_t> encode_vpw(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_vpw(std::span<const std::uint8_t> bytes);

void write_vpw(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_vpw(const std::filesystem::path& path);

}  // namespace veinpatch
