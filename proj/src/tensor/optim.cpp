#include "milg/optim.hpp"

#include <cmath>

namespace milg {

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  throw UserError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "sgd"; }

template <typename T>
Optimizer<T>::Optimizer(OptimizerConfig cfg, std::vector<Tensor<T>*> params)
    : cfg_(cfg), params_(std::move(params)) {
  for (auto* p : params_) {
    if (!p->requires_grad()) p->set_requires_grad(true);
    m_.emplace_back(p->numel(), T(0));
    v_.emplace_back(cfg_.kind == OptimizerKind::Adam ? p->numel() : 0, T(0));
  }
}

template <typename T>
void Optimizer<T>::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

template <typename T>
void Optimizer<T>::step(T grad_scale) {
  ++steps_;
  const T lr = static_cast<T>(cfg_.lr);
  if (cfg_.kind == OptimizerKind::Sgd) {
    const T mu = static_cast<T>(cfg_.momentum);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto w = params_[k]->data();
      auto g = params_[k]->grad();
      auto& vel = m_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        vel[i] = mu * vel[i] + g[i] * grad_scale;
        w[i] -= lr * vel[i];
      }
    }
  } else {
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2), eps = static_cast<T>(cfg_.eps);
    const T c1 = T(1) - static_cast<T>(std::pow(cfg_.beta1, static_cast<double>(steps_)));
    const T c2 = T(1) - static_cast<T>(std::pow(cfg_.beta2, static_cast<double>(steps_)));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto w = params_[k]->data();
      auto g = params_[k]->grad();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        const T gi = g[i] * grad_scale;
        m[i] = b1 * m[i] + (T(1) - b1) * gi;
        v[i] = b2 * v[i] + (T(1) - b2) * gi * gi;
        w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      }
    }
  }
  zero_grad();
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace milg
