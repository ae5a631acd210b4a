#pragma once
// Stage 1: gated-attention multiple-instance bag classifier.
//
// Patch features are projected (m = x W_p^T), each patch gets the logit
//   e_h = K_a (tanh(V_a m_h^T) * sigm(Q_a m_h^T))
// and the attention scores are softmax(e) over the bag. The bag embedding is
// the score-weighted sum of projected rows and a linear head W_cls produces
// the class logits.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "milg/autodiff.hpp"
#include "milg/checkpoint.hpp"
#include "milg/optim.hpp"

namespace milg {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// One slide: M patch feature rows, their patch-centre coordinates and the
/// slide label.
struct Bag {
  std::string slide_id;
  Tensor<float> features;  // [M x D]
  std::vector<Point> coords;
  std::size_t label = 0;

  std::size_t size() const { return features.rank() == 2 ? features.dim(0) : 0; }
  /// Throws UserError unless M >= 1, coords match rows, and label < n_classes.
  void validate(std::size_t n_classes) const;
};

struct MilConfig {
  std::size_t input_dim = 64;
  std::size_t proj_dim = 64;
  std::size_t att_dim = 32;
  std::size_t n_classes = 2;
  std::uint64_t seed = 0;
};

template <typename T>
struct MilParams {
  Tensor<T> w_proj;  // [proj x D]
  Tensor<T> v_att;   // [att x proj]
  Tensor<T> q_att;   // [att x proj]
  Tensor<T> k_att;   // [1 x att]
  Tensor<T> w_cls;   // [classes x proj]

  std::vector<Tensor<T>*> all() { return {&w_proj, &v_att, &q_att, &k_att, &w_cls}; }
};

struct AttentionResult {
  std::vector<double> scores;         // one per patch, sums to 1
  std::vector<double> bag_embedding;  // proj_dim
  std::vector<double> logits;         // n_classes

  std::size_t predicted() const;
};

template <typename T>
class MilModel {
 public:
  explicit MilModel(const MilConfig& cfg);

  const MilConfig& config() const { return cfg_; }
  MilParams<T>& params() { return params_; }
  const MilParams<T>& params() const { return params_; }

  struct Graph {
    ad::Var projected;  // [M x proj]
    ad::Var scores;     // [M x 1]
    ad::Var embedding;  // [1 x proj]
    ad::Var logits;     // [1 x classes]
    ad::Var probs;      // [1 x classes]
  };

  /// Records the forward pass on `tape`; features must be [M x input_dim].
  Graph forward(ad::Tape<T>& tape, ad::Var features);

  AttentionResult attend(const Tensor<float>& features) const;
  /// Projected patch embeddings features * W_p^T, [M x proj].
  Tensor<float> project(const Tensor<float>& features) const;

  Checkpoint to_checkpoint() const;
  static MilModel from_checkpoint(const Checkpoint& ck);

 private:
  MilConfig cfg_;
  MilParams<T> params_;
};

extern template class MilModel<float>;
extern template class MilModel<double>;

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 8;
  OptimizerConfig optimizer{OptimizerKind::Sgd, 1e-2, 0.9};
  std::uint64_t seed = 0;
};

struct EpochStat {
  double loss = 0.0;
  double train_acc = 0.0;
};

/// Trains the attention-pooled bag classifier on cross-entropy. Refuses
/// fewer than two bags or a single-class dataset.
MilModel<float> train_mil(const std::vector<Bag>& bags, const MilConfig& cfg, const TrainConfig& train,
                          std::vector<EpochStat>* log = nullptr);

/// Indices of the top max(1, ceil(S*M/100)) scores, ties to the lower index,
/// returned in ascending index order. Requires 0 < S <= 100.
std::vector<std::size_t> select_top(std::span<const double> scores, double s_percent);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init, fan_in = number of columns.
template <typename T>
Tensor<T> init_weight(std::size_t rows, std::size_t cols, std::uint64_t seed, std::uint64_t stream);

}  // namespace milg
