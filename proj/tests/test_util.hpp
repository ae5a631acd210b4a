#pragma once

#include <filesystem>
#include <string>

#include <unistd.h>

#include "milg/graph_builder.hpp"
#include "milg/rng.hpp"
#include "milg/tensor.hpp"

namespace testutil {

template <typename T>
milg::Tensor<T> random_tensor(milg::Shape shape, milg::Rng& rng, double lo = -1.0, double hi = 1.0) {
  milg::Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
milg::Tensor<T> random_param(milg::Shape shape, milg::Rng& rng, double scale = 0.5) {
  auto t = random_tensor<T>(std::move(shape), rng, -scale, scale);
  t.set_requires_grad(true);
  return t;
}

inline milg::Adjacency random_adjacency(std::size_t n, double p, milg::Rng& rng) {
  milg::Adjacency a(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform() < p) a.connect(i, j);
  return a;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("milg_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
