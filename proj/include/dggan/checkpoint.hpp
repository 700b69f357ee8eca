#pragma once

// DGCK tensor blobs:
//   "DGCK" | u32 version | u32 count | count x entry
//   entry: u16 name_len | name (UTF-8) | u8 ndim | ndim x u32 dims | fp32 payload
// All integers and floats little-endian, payload row-major.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dggan/tensor.hpp"

namespace dggan::checkpoint {

inline constexpr std::uint32_t kVersion = 1;

using TensorMap = std::map<std::string, tensor::Tensor<float>>;

std::vector<unsigned char> encode(const TensorMap& tensors);
TensorMap decode(const std::vector<unsigned char>& bytes);

void save(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap load(const std::filesystem::path& path);

// Writes to a temporary sibling and renames, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace dggan::checkpoint
