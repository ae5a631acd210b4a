#pragma once
// Stage 2: stacked ASG modules (GCN propagation + self-attention pooling)
// with additive skips, global average pooling and a dense softmax head.

#include <cstdint>
#include <vector>

#include "milg/autodiff.hpp"
#include "milg/checkpoint.hpp"
#include "milg/graph_builder.hpp"
#include "milg/mil_attention.hpp"

namespace milg {

struct AsgConfig {
  std::size_t num_modules = 8;
  std::size_t hidden = 64;
  double pool_ratio = 0.8;
  std::size_t n_classes = 2;
  std::size_t input_dim = 64;
  std::uint64_t seed = 0;

  void validate() const;
};

template <typename T>
struct AsgParams {
  std::vector<Tensor<T>> w_gcn;    // module l: [F_in x F]
  std::vector<Tensor<T>> w_score;  // module l: [F x 1]
  Tensor<T> w_fc;                  // [classes x F]

  std::vector<Tensor<T>*> all();
};

/// D^{-1/2} (A + I) D^{-1/2}, with D the degree matrix of A + I.
template <typename T>
Tensor<T> normalized_adjacency(const Adjacency& a);

/// ReLU(D^{-1/2} (A + I) D^{-1/2} G W).
template <typename T>
ad::Var gcn_layer(ad::Tape<T>& tape, ad::Var g, const Adjacency& a, ad::Var w);

/// max(1, ceil(d * n))
std::size_t pooled_size(std::size_t n, double ratio);

struct PoolOutput {
  ad::Var features;  // [n' x F], kept rows gated by their scores
  ad::Var scores;    // [n x 1], all node scores before selection
  Adjacency adjacency;
  std::vector<std::size_t> kept;  // ascending, indices into the input nodes
};

/// Scores nodes with ReLU(D^{-1/2} (A + I) D^{-1/2} G W_T), keeps the
/// pooled_size(n, d) best (ties to the lower index), and gates each kept row
/// by its score. The selection itself carries no gradient.
template <typename T>
PoolOutput sag_pool(ad::Tape<T>& tape, ad::Var g, const Adjacency& a, ad::Var w_score, double ratio);

template <typename T>
class AsgNetwork {
 public:
  explicit AsgNetwork(const AsgConfig& cfg);

  const AsgConfig& config() const { return cfg_; }
  AsgParams<T>& params() { return params_; }
  const AsgParams<T>& params() const { return params_; }

  struct Trace {
    std::vector<std::vector<std::size_t>> kept;  // per module, indices into that module's input
  };

  /// Records the forward pass; returns class probabilities [1 x classes].
  ad::Var forward(ad::Tape<T>& tape, const PatchGraph& graph, Trace* trace = nullptr);

  std::vector<double> predict_proba(const PatchGraph& graph) const;
  std::size_t predict(const PatchGraph& graph) const;

  Checkpoint to_checkpoint() const;
  static AsgNetwork from_checkpoint(const Checkpoint& ck);

 private:
  AsgConfig cfg_;
  AsgParams<T> params_;
};

extern template class AsgNetwork<float>;
extern template class AsgNetwork<double>;

/// Mini-batch training on mean cross-entropy over graphs, starting from `init`.
AsgNetwork<float> train_gcn(const std::vector<PatchGraph>& graphs, AsgNetwork<float> init, const TrainConfig& train,
                            std::vector<EpochStat>* log = nullptr);

/// Same, starting from the seeded initialisation of `cfg`.
AsgNetwork<float> train_gcn(const std::vector<PatchGraph>& graphs, const AsgConfig& cfg, const TrainConfig& train,
                            std::vector<EpochStat>* log = nullptr);

}  // namespace milg
