#pragma once
// Tape-based reverse-mode automatic differentiation.
//
// A Tape records every op in creation order, which is already a topological
// order, so backward() replays nodes last-to-first. Parameters enter the tape
// through param(); after backward() their gradients are accumulated into the
// parameter tensor's grad buffer. One tape belongs to one thread.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "milg/tensor.hpp"

namespace milg::ad {

struct Var {
  std::uint32_t id = 0;
};

template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Constant input. No gradient flows into it.
  Var constant(Tensor<T> value);
  /// Trainable tensor. Must outlive the tape; must have requires_grad set.
  Var param(Tensor<T>& p);

  const Tensor<T>& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient of the last backward() target w.r.t. v; empty before backward.
  std::span<const T> grad(Var v) const { return nodes_[v.id].grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(out)/d(out) = 1 for a single-element output and replays.
  void backward(Var out);

  // Linear algebra. All matrices are rank-2.
  Var matmul(Var a, Var b);     // a[p x q] . b[q x r]
  Var matmul_nt(Var a, Var b);  // a[p x q] . b[r x q]^T
  Var transpose(Var a);

  // Pointwise.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // hadamard
  Var scale(Var a, T s);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var relu(Var a);
  /// x[n x m] + b broadcast over rows, b has m elements.
  Var add_row_bias(Var x, Var b);

  // Shape and indexing.
  Var reshape(Var a, Shape shape);
  Var gather_rows(Var a, std::span<const std::size_t> rows);
  /// Multiplies row i of x[n x m] by s[i]; s has n elements.
  Var scale_rows(Var x, Var s);

  // Reductions.
  Var sum(Var a);
  Var mean(Var a);
  /// Column-wise mean of x[n x m]; result [1 x m].
  Var mean_rows(Var x);
  /// Mean of squared differences over all elements.
  Var mse(Var a, Var b);

  // Probabilities.
  /// Softmax over all elements, max-subtracted. Output keeps the input shape.
  Var softmax(Var logits);
  /// -log(max(probs[target], 1e-12)).
  Var cross_entropy(Var probs, std::size_t target);

  // Images, laid out [batch, channels, height, width].
  /// 3x3 convolution, stride 1, zero padding 1. w: [cout, cin, 3, 3], b: [cout].
  Var conv3x3(Var x, Var w, Var b);
  /// 2x2 average pooling, stride 2. H and W must be even.
  Var avg_pool2(Var x);
  /// 2x nearest-neighbour upsampling.
  Var upsample2(Var x);

 private:
  struct Node {
    Tensor<T> value;
    std::vector<T> grad;
    Tensor<T>* param = nullptr;
    bool needs_grad = false;
    std::function<void(Tape&, std::uint32_t)> backward;
  };

  Var push(Tensor<T> value, bool needs_grad, std::function<void(Tape&, std::uint32_t)> bw);
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  std::vector<T>& g(std::uint32_t id) { return nodes_[id].grad; }
  const Node& node(Var v) const { return nodes_[v.id]; }
  void check_finite(const Tensor<T>& t, const char* op) const;

  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace milg::ad
