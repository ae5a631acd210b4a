#pragma once

#include <string>
#include <vector>

#include "milg/tensor.hpp"

namespace milg {

enum class OptimizerKind { Sgd, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Sgd;
  double lr = 1e-3;
  double momentum = 0.9;  // SGD only
  double beta1 = 0.9;     // Adam only
  double beta2 = 0.999;
  double eps = 1e-8;
};

OptimizerKind parse_optimizer_kind(const std::string& name);
std::string to_string(OptimizerKind kind);

/// First-order optimizer over a fixed parameter list. Gradients are read from
/// each tensor's grad buffer, multiplied by grad_scale (e.g. 1/batch), applied,
/// then cleared.
template <typename T>
class Optimizer {
 public:
  Optimizer(OptimizerConfig cfg, std::vector<Tensor<T>*> params);

  void step(T grad_scale = T(1));
  void zero_grad();
  long steps() const { return steps_; }

 private:
  OptimizerConfig cfg_;
  std::vector<Tensor<T>*> params_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  long steps_ = 0;
};

extern template class Optimizer<float>;
extern template class Optimizer<double>;

}  // namespace milg
