#pragma once
// Feature-store file: magic "MILF0001", u32 M, u32 D, then M*D little-endian
// float32 values, row-major.

#include <filesystem>
#include <string>
#include <string_view>

#include "milg/tensor.hpp"

namespace milg {

inline constexpr std::string_view kFeatureMagic = "MILF0001";

std::string encode_features(const Tensor<float>& features);
Tensor<float> decode_features(std::string_view bytes);

void write_features(const std::filesystem::path& path, const Tensor<float>& features);
Tensor<float> read_features(const std::filesystem::path& path);

}  // namespace milg
