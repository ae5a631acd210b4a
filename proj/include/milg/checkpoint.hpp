#pragma once
// MILCKPT1 checkpoint container.
//
// Layout: 8-byte magic "MILCKPT1", u64 LE manifest length, UTF-8 JSON
// manifest, then each tensor as raw little-endian float32, row-major. The
// manifest lists {name, shape, offset} with offsets relative to the first
// byte after the manifest, plus a free-form "meta" object for model config.

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "milg/tensor.hpp"

namespace milg {

inline constexpr std::string_view kCheckpointMagic = "MILCKPT1";

class Checkpoint {
 public:
  nlohmann::json meta = nlohmann::json::object();

  template <typename T>
  void add(std::string name, const Tensor<T>& t) {
    tensors_.emplace_back(std::move(name), t.template cast<float>());
  }

  bool contains(std::string_view name) const;
  const Tensor<float>& get(std::string_view name) const;

  /// Loads `name` into `dst`, which must already have the stored shape.
  template <typename T>
  void load_into(std::string_view name, Tensor<T>& dst) const {
    const auto& src = get(name);
    if (src.shape() != dst.shape())
      throw UserError("checkpoint tensor '" + std::string(name) + "' has shape " + shape_str(src.shape()) +
                      ", expected " + shape_str(dst.shape()));
    for (std::size_t i = 0; i < src.numel(); ++i) dst[i] = static_cast<T>(src[i]);
  }

  const std::vector<std::pair<std::string, Tensor<float>>>& tensors() const { return tensors_; }

  std::string serialize() const;
  static Checkpoint deserialize(std::string_view bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  std::vector<std::pair<std::string, Tensor<float>>> tensors_;
};

}  // namespace milg
