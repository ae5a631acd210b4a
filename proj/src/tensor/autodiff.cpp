#include "milg/autodiff.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "milg/kernels.hpp"

namespace milg::ad {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

void require_matrix(const Shape& s, const char* op) {
  require(s.size() == 2, std::string(op) + ": expected a matrix, got " + shape_str(s));
}

void require_same(const Shape& a, const Shape& b, const char* op) {
  require(a == b, std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

template <typename T>
T sigmoid_of(T x) {
  // Split on sign so exp never overflows.
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// cols[(c*9 + ky*3 + kx), y*W + x] = img[c, y+ky-1, x+kx-1], zero outside.
template <typename T>
void im2col3(const T* img, std::size_t channels, std::size_t h, std::size_t w, T* cols) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = img + c * hw;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        T* dst = cols + (c * 9 + ky * 3 + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y + ky) - 1;
          T* drow = dst + y * w;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::fill(drow, drow + w, T(0));
            continue;
          }
          const T* srow = plane + static_cast<std::size_t>(sy) * w;
          for (std::size_t x = 0; x < w; ++x) {
            const long sx = static_cast<long>(x + kx) - 1;
            drow[x] = (sx < 0 || sx >= static_cast<long>(w)) ? T(0) : srow[sx];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im3(const T* cols, std::size_t channels, std::size_t h, std::size_t w, T* img) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    T* plane = img + c * hw;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const T* src = cols + (c * 9 + ky * 3 + kx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y + ky) - 1;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          T* drow = plane + static_cast<std::size_t>(sy) * w;
          const T* srow = src + y * w;
          for (std::size_t x = 0; x < w; ++x) {
            const long sx = static_cast<long>(x + kx) - 1;
            if (sx >= 0 && sx < static_cast<long>(w)) drow[sx] += srow[x];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void Tape<T>::check_finite(const Tensor<T>& t, const char* op) const {
  if (!t.all_finite()) throw NumericError(std::string("non-finite value produced by ") + op);
}

template <typename T>
Var Tape<T>::push(Tensor<T> value, bool needs_grad, std::function<void(Tape&, std::uint32_t)> bw) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.backward = std::move(bw);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::constant(Tensor<T> value) {
  check_finite(value, "constant");
  return push(std::move(value), false, nullptr);
}

template <typename T>
Var Tape<T>::param(Tensor<T>& p) {
  if (!p.requires_grad()) throw std::invalid_argument("param(): tensor does not require grad");
  check_finite(p, "param");
  Tensor<T> copy(p.shape(), std::vector<T>(p.data().begin(), p.data().end()));
  Var v = push(std::move(copy), true, nullptr);
  nodes_[v.id].param = &p;
  return v;
}

template <typename T>
void Tape<T>::backward(Var out) {
  if (node(out).value.numel() != 1) throw DimensionError("backward(): output must have exactly one element");
  for (auto& n : nodes_) {
    if (n.needs_grad) n.grad.assign(n.value.numel(), T(0));
    else n.grad.clear();
  }
  if (!nodes_[out.id].needs_grad) return;
  nodes_[out.id].grad[0] = T(1);
  for (std::size_t i = out.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad) continue;
    if (n.backward) n.backward(*this, static_cast<std::uint32_t>(i));
  }
  for (auto& n : nodes_) {
    if (!n.param) continue;
    auto pg = n.param->grad();
    for (std::size_t j = 0; j < pg.size(); ++j) pg[j] += n.grad[j];
  }
}

// ---------------------------------------------------------------- linear algebra

template <typename T>
Var Tape<T>::matmul(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  require_matrix(A.shape(), "matmul");
  require_matrix(B.shape(), "matmul");
  require(A.dim(1) == B.dim(0), "matmul: inner dims differ " + shape_str(A.shape()) + " . " + shape_str(B.shape()));
  const std::size_t p = A.dim(0), q = A.dim(1), r = B.dim(1);
  Tensor<T> C({p, r});
  kernels::gemm_nn(p, r, q, A.data().data(), B.data().data(), C.data().data());
  check_finite(C, "matmul");
  return push(std::move(C), needs(a) || needs(b), [a, b, p, q, r](Tape& t, std::uint32_t self) {
    const T* dc = t.g(self).data();
    if (t.needs(a)) kernels::gemm_nt(p, q, r, dc, t.value(b).data().data(), t.g(a.id).data());
    if (t.needs(b)) kernels::gemm_tn(q, r, p, t.value(a).data().data(), dc, t.g(b.id).data());
  });
}

template <typename T>
Var Tape<T>::matmul_nt(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  require_matrix(A.shape(), "matmul_nt");
  require_matrix(B.shape(), "matmul_nt");
  require(A.dim(1) == B.dim(1), "matmul_nt: inner dims differ " + shape_str(A.shape()) + " . " +
                                    shape_str(B.shape()) + "^T");
  const std::size_t p = A.dim(0), q = A.dim(1), r = B.dim(0);
  Tensor<T> C({p, r});
  kernels::gemm_nt(p, r, q, A.data().data(), B.data().data(), C.data().data());
  check_finite(C, "matmul_nt");
  return push(std::move(C), needs(a) || needs(b), [a, b, p, q, r](Tape& t, std::uint32_t self) {
    const T* dc = t.g(self).data();
    if (t.needs(a)) kernels::gemm_nn(p, q, r, dc, t.value(b).data().data(), t.g(a.id).data());
    if (t.needs(b)) kernels::gemm_tn(r, q, p, dc, t.value(a).data().data(), t.g(b.id).data());
  });
}

template <typename T>
Var Tape<T>::transpose(Var a) {
  const auto& A = value(a);
  require_matrix(A.shape(), "transpose");
  const std::size_t n = A.dim(0), m = A.dim(1);
  Tensor<T> out({m, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = A[i * m + j];
  return push(std::move(out), needs(a), [a, n, m](Tape& t, std::uint32_t self) {
    const auto& d = t.g(self);
    auto& ga = t.g(a.id);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += d[j * n + i];
  });
}

// ---------------------------------------------------------------- pointwise

template <typename T>
Var Tape<T>::add(Var a, Var b) {
  require_same(value(a).shape(), value(b).shape(), "add");
  Tensor<T> out = value(a);
  const auto& B = value(b);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += B[i];
  check_finite(out, "add");
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, std::uint32_t self) {
    const auto& d = t.g(self);
    for (Var v : {a, b}) {
      if (!t.needs(v)) continue;
      auto& gv = t.g(v.id);
      for (std::size_t i = 0; i < d.size(); ++i) gv[i] += d[i];
    }
  });
}

template <typename T>
Var Tape<T>::sub(Var a, Var b) {
  require_same(value(a).shape(), value(b).shape(), "sub");
  Tensor<T> out = value(a);
  const auto& B = value(b);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= B[i];
  check_finite(out, "sub");
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, std::uint32_t self) {
    const auto& d = t.g(self);
    if (t.needs(a)) {
      auto& ga = t.g(a.id);
      for (std::size_t i = 0; i < d.size(); ++i) ga[i] += d[i];
    }
    if (t.needs(b)) {
      auto& gb = t.g(b.id);
      for (std::size_t i = 0; i < d.size(); ++i) gb[i] -= d[i];
    }
  });
}

template <typename T>
Var Tape<T>::mul(Var a, Var b) {
  require_same(value(a).shape(), value(b).shape(), "mul");
  Tensor<T> out = value(a);
  const auto& B = value(b);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= B[i];
  check_finite(out, "mul");
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, std::uint32_t self) {
    const auto& d = t.g(self);
    const auto& A = t.value(a);
    const auto& B = t.value(b);
    if (t.needs(a)) {
      auto& ga = t.g(a.id);
      for (std::size_t i = 0; i < d.size(); ++i) ga[i] += d[i] * B[i];
    }
    if (t.needs(b)) {
      auto& gb = t.g(b.id);
      for (std::size_t i = 0; i < d.size(); ++i) gb[i] += d[i] * A[i];
    }
  });
}

template <typename T>
Var Tape<T>::scale(Var a, T s) {
  Tensor<T> out = value(a);
  for (auto& v : out.data()) v *= s;
  check_finite(out, "scale");
  return push(std::move(out), needs(a), [a, s](Tape& t, std::uint32_t self) {
    const auto& d = t.g(self);
    auto& ga = t.g(a.id);
    for (std::size_t i = 0; i < d.size(); ++i) ga[i] += d[i] * s;
  });
}

template <typename T>
Var Tape<T>::tanh(Var a) {
  Tensor<T> out = value(a);
  for (auto& v : out.data()) v = std::tanh(v);
  return push(std::move(out), needs(a), [a](Tape& t, std::uint32_t self) {
    const auto& d = t.g(self);
    const auto& y = t.nodes_[self].value;
    auto& ga = t.g(a.id);
    for (std::size_t i = 0; i < d.size(); ++i) ga[i] += d[i] * (T(1) - y[i] * y[i]);
  });
}

template <typename T>
Var Tape<T>::sigmoid(Var a) {
  Tensor<T> out = value(a);
  for (auto& v : out.data()) v = sigmoid_of(v);
  return push(std::move(out), needs(a), [a](Tape& t, std::uint32_t self) {
    const auto& d = t.g(self);
    const auto& y = t.nodes_[self].value;
    auto& ga = t.g(a.id);
    for (std::size_t i = 0; i < d.size(); ++i) ga[i] += d[i] * y[i] * (T(1) - y[i]);
  });
}

template <typename T>
Var Tape<T>::relu(Var a) {
  Tensor<T> out = value(a);
  for (auto& v : out.data()) v = v > T(0) ? v : T(0);
  return push(std::move(out), needs(a), [a](Tape& t, std::uint32_t self) {
    const auto& d = t.g(self);
    const auto& x = t.value(a);
    auto& ga = t.g(a.id);
    for (std::size_t i = 0; i < d.size(); ++i)
      if (x[i] > T(0)) ga[i] += d[i];
  });
}

template <typename T>
Var Tape<T>::add_row_bias(Var x, Var b) {
  const auto& X = value(x);
  const auto& B = value(b);
  require_matrix(X.shape(), "add_row_bias");
  require(B.numel() == X.dim(1), "add_row_bias: bias length " + std::to_string(B.numel()) + " vs " +
                                     std::to_string(X.dim(1)) + " columns");
  const std::size_t n = X.dim(0), m = X.dim(1);
  Tensor<T> out = X;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] += B[j];
  check_finite(out, "add_row_bias");
  return push(std::move(out), needs(x) || needs(b), [x, b, n, m](Tape& t, std::uint32_t self) {
    const auto& d = t.g(self);
    if (t.needs(x)) {
      auto& gx = t.g(x.id);
      for (std::size_t i = 0; i < d.size(); ++i) gx[i] += d[i];
    }
    if (t.needs(b)) {
      auto& gb = t.g(b.id);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) gb[j] += d[i * m + j];
    }
  });
}

// ---------------------------------------------------------------- shape and indexing

template <typename T>
Var Tape<T>::reshape(Var a, Shape shape) {
  Tensor<T> out = value(a).reshaped(std::move(shape));
  return push(std::move(out), needs(a), [a](Tape& t, std::uint32_t self) {
    const auto& d = t.g(self);
    auto& ga = t.g(a.id);
    for (std::size_t i = 0; i < d.size(); ++i) ga[i] += d[i];
  });
}

template <typename T>
Var Tape<T>::gather_rows(Var a, std::span<const std::size_t> rows) {
  const auto& A = value(a);
  require(A.rank() == 1 || A.rank() == 2, "gather_rows: expected rank 1 or 2, got " + shape_str(A.shape()));
  const std::size_t n = A.rows(), m = A.cols();
  for (std::size_t r : rows) require(r < n, "gather_rows: row " + std::to_string(r) + " out of range");
  Shape shape = A.rank() == 1 ? Shape{rows.size()} : Shape{rows.size(), m};
  Tensor<T> out(shape);
  for (std::size_t k = 0; k < rows.size(); ++k)
    std::copy_n(A.data().begin() + rows[k] * m, m, out.data().begin() + k * m);
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return push(std::move(out), needs(a), [a, idx = std::move(idx), m](Tape& t, std::uint32_t self) {
    const auto& d = t.g(self);
    auto& ga = t.g(a.id);
    for (std::size_t k = 0; k < idx.size(); ++k)
      for (std::size_t j = 0; j < m; ++j) ga[idx[k] * m + j] += d[k * m + j];
  });
}

template <typename T>
Var Tape<T>::scale_rows(Var x, Var s) {
  const auto& X = value(x);
  const auto& S = value(s);
  require_matrix(X.shape(), "scale_rows");
  require(S.numel() == X.dim(0), "scale_rows: " + std::to_string(S.numel()) + " scales for " +
                                     std::to_string(X.dim(0)) + " rows");
  const std::size_t n = X.dim(0), m = X.dim(1);
  Tensor<T> out = X;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] *= S[i];
  check_finite(out, "scale_rows");
  return push(std::move(out), needs(x) || needs(s), [x, s, n, m](Tape& t, std::uint32_t self) {
    const auto& d = t.g(self);
    const auto& X = t.value(x);
    const auto& S = t.value(s);
    if (t.needs(x)) {
      auto& gx = t.g(x.id);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += d[i * m + j] * S[i];
    }
    if (t.needs(s)) {
      auto& gs = t.g(s.id);
      for (std::size_t i = 0; i < n; ++i) {
        T acc = 0;
        for (std::size_t j = 0; j < m; ++j) acc += d[i * m + j] * X[i * m + j];
        gs[i] += acc;
      }
    }
  });
}

// ---------------------------------------------------------------- reductions

template <typename T>
Var Tape<T>::sum(Var a) {
  T acc = 0;
  for (T v : value(a).data()) acc += v;
  Tensor<T> out({1}, std::vector<T>{acc});
  check_finite(out, "sum");
  return push(std::move(out), needs(a), [a](Tape& t, std::uint32_t self) {
    const T d = t.g(self)[0];
    for (auto& v : t.g(a.id)) v += d;
  });
}

template <typename T>
Var Tape<T>::mean(Var a) {
  const std::size_t n = value(a).numel();
  require(n > 0, "mean: empty tensor");
  T acc = 0;
  for (T v : value(a).data()) acc += v;
  Tensor<T> out({1}, std::vector<T>{acc / static_cast<T>(n)});
  check_finite(out, "mean");
  return push(std::move(out), needs(a), [a, n](Tape& t, std::uint32_t self) {
    const T d = t.g(self)[0] / static_cast<T>(n);
    for (auto& v : t.g(a.id)) v += d;
  });
}

template <typename T>
Var Tape<T>::mean_rows(Var x) {
  const auto& X = value(x);
  require_matrix(X.shape(), "mean_rows");
  const std::size_t n = X.dim(0), m = X.dim(1);
  require(n > 0, "mean_rows: no rows");
  Tensor<T> out({1, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j] += X[i * m + j];
  for (auto& v : out.data()) v /= static_cast<T>(n);
  check_finite(out, "mean_rows");
  return push(std::move(out), needs(x), [x, n, m](Tape& t, std::uint32_t self) {
    const auto& d = t.g(self);
    auto& gx = t.g(x.id);
    const T inv = T(1) / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += d[j] * inv;
  });
}

template <typename T>
Var Tape<T>::mse(Var a, Var b) {
  require_same(value(a).shape(), value(b).shape(), "mse");
  const auto& A = value(a);
  const auto& B = value(b);
  const std::size_t n = A.numel();
  require(n > 0, "mse: empty tensor");
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T diff = A[i] - B[i];
    acc += diff * diff;
  }
  Tensor<T> out({1}, std::vector<T>{acc / static_cast<T>(n)});
  check_finite(out, "mse");
  return push(std::move(out), needs(a) || needs(b), [a, b, n](Tape& t, std::uint32_t self) {
    const T d = t.g(self)[0] * T(2) / static_cast<T>(n);
    const auto& A = t.value(a);
    const auto& B = t.value(b);
    if (t.needs(a)) {
      auto& ga = t.g(a.id);
      for (std::size_t i = 0; i < n; ++i) ga[i] += d * (A[i] - B[i]);
    }
    if (t.needs(b)) {
      auto& gb = t.g(b.id);
      for (std::size_t i = 0; i < n; ++i) gb[i] -= d * (A[i] - B[i]);
    }
  });
}

// ---------------------------------------------------------------- probabilities

template <typename T>
Var Tape<T>::softmax(Var logits) {
  const auto& X = value(logits);
  require(X.numel() > 0, "softmax: empty input");
  Tensor<T> out = X;
  T mx = out[0];
  for (T v : out.data()) mx = std::max(mx, v);
  T z = 0;
  for (auto& v : out.data()) {
    v = std::exp(v - mx);
    z += v;
  }
  for (auto& v : out.data()) v /= z;
  check_finite(out, "softmax");
  return push(std::move(out), needs(logits), [logits](Tape& t, std::uint32_t self) {
    const auto& d = t.g(self);
    const auto& y = t.nodes_[self].value;
    T dot = 0;
    for (std::size_t i = 0; i < d.size(); ++i) dot += d[i] * y[i];
    auto& gx = t.g(logits.id);
    for (std::size_t i = 0; i < d.size(); ++i) gx[i] += y[i] * (d[i] - dot);
  });
}

template <typename T>
Var Tape<T>::cross_entropy(Var probs, std::size_t target) {
  const auto& P = value(probs);
  if (target >= P.numel())
    throw std::out_of_range("cross_entropy: target " + std::to_string(target) + " out of range for " +
                            std::to_string(P.numel()) + " classes");
  constexpr T floor = T(1e-12);
  const T p = P[target];
  Tensor<T> out({1}, std::vector<T>{-std::log(std::max(p, floor))});
  return push(std::move(out), needs(probs), [probs, target, p](Tape& t, std::uint32_t self) {
    if (p > floor) t.g(probs.id)[target] += -t.g(self)[0] / p;
  });
}

// ---------------------------------------------------------------- images

template <typename T>
Var Tape<T>::conv3x3(Var x, Var w, Var b) {
  const auto& X = value(x);
  const auto& W = value(w);
  const auto& B = value(b);
  require(X.rank() == 4, "conv3x3: input must be [B,C,H,W], got " + shape_str(X.shape()));
  require(W.rank() == 4 && W.dim(2) == 3 && W.dim(3) == 3, "conv3x3: weight must be [Co,Ci,3,3], got " +
                                                               shape_str(W.shape()));
  require(W.dim(1) == X.dim(1), "conv3x3: channel mismatch " + shape_str(X.shape()) + " vs " + shape_str(W.shape()));
  require(B.numel() == W.dim(0), "conv3x3: bias length mismatch");
  const std::size_t batch = X.dim(0), cin = X.dim(1), h = X.dim(2), wd = X.dim(3), cout = W.dim(0);
  const std::size_t hw = h * wd, ck = cin * 9;

  auto cols = std::make_shared<std::vector<T>>(batch * ck * hw);
  Tensor<T> out({batch, cout, h, wd});
  for (std::size_t n = 0; n < batch; ++n) {
    T* col = cols->data() + n * ck * hw;
    im2col3(X.data().data() + n * cin * hw, cin, h, wd, col);
    T* o = out.data().data() + n * cout * hw;
    for (std::size_t c = 0; c < cout; ++c) std::fill(o + c * hw, o + (c + 1) * hw, B[c]);
    kernels::gemm_nn(cout, hw, ck, W.data().data(), col, o);
  }
  check_finite(out, "conv3x3");
  return push(std::move(out), needs(x) || needs(w) || needs(b),
              [x, w, b, cols, batch, cin, h, wd, cout, hw, ck](Tape& t, std::uint32_t self) {
                const auto& d = t.g(self);
                const T* wdata = t.value(w).data().data();
                std::vector<T> dcol(t.needs(x) ? ck * hw : 0);
                for (std::size_t n = 0; n < batch; ++n) {
                  const T* dn = d.data() + n * cout * hw;
                  if (t.needs(w)) kernels::gemm_nt(cout, ck, hw, dn, cols->data() + n * ck * hw, t.g(w.id).data());
                  if (t.needs(b)) {
                    auto& gb = t.g(b.id);
                    for (std::size_t c = 0; c < cout; ++c) {
                      T acc = 0;
                      for (std::size_t i = 0; i < hw; ++i) acc += dn[c * hw + i];
                      gb[c] += acc;
                    }
                  }
                  if (t.needs(x)) {
                    std::fill(dcol.begin(), dcol.end(), T(0));
                    kernels::gemm_tn(ck, hw, cout, wdata, dn, dcol.data());
                    col2im3(dcol.data(), cin, h, wd, t.g(x.id).data() + n * cin * hw);
                  }
                }
              });
}

template <typename T>
Var Tape<T>::avg_pool2(Var x) {
  const auto& X = value(x);
  require(X.rank() == 4, "avg_pool2: input must be [B,C,H,W]");
  require(X.dim(2) % 2 == 0 && X.dim(3) % 2 == 0, "avg_pool2: H and W must be even, got " + shape_str(X.shape()));
  const std::size_t planes = X.dim(0) * X.dim(1), h = X.dim(2), w = X.dim(3), oh = h / 2, ow = w / 2;
  Tensor<T> out({X.dim(0), X.dim(1), oh, ow});
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = X.data().data() + p * h * w;
    T* dst = out.data().data() + p * oh * ow;
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx)
        dst[y * ow + xx] = T(0.25) * (src[2 * y * w + 2 * xx] + src[2 * y * w + 2 * xx + 1] +
                                      src[(2 * y + 1) * w + 2 * xx] + src[(2 * y + 1) * w + 2 * xx + 1]);
  }
  return push(std::move(out), needs(x), [x, planes, h, w, oh, ow](Tape& t, std::uint32_t self) {
    const auto& d = t.g(self);
    auto& gx = t.g(x.id);
    for (std::size_t p = 0; p < planes; ++p) {
      const T* src = d.data() + p * oh * ow;
      T* dst = gx.data() + p * h * w;
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          const T v = T(0.25) * src[y * ow + xx];
          dst[2 * y * w + 2 * xx] += v;
          dst[2 * y * w + 2 * xx + 1] += v;
          dst[(2 * y + 1) * w + 2 * xx] += v;
          dst[(2 * y + 1) * w + 2 * xx + 1] += v;
        }
    }
  });
}

template <typename T>
Var Tape<T>::upsample2(Var x) {
  const auto& X = value(x);
  require(X.rank() == 4, "upsample2: input must be [B,C,H,W]");
  const std::size_t planes = X.dim(0) * X.dim(1), h = X.dim(2), w = X.dim(3), oh = 2 * h, ow = 2 * w;
  Tensor<T> out({X.dim(0), X.dim(1), oh, ow});
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = X.data().data() + p * h * w;
    T* dst = out.data().data() + p * oh * ow;
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) dst[y * ow + xx] = src[(y / 2) * w + xx / 2];
  }
  return push(std::move(out), needs(x), [x, planes, h, w, oh, ow](Tape& t, std::uint32_t self) {
    const auto& d = t.g(self);
    auto& gx = t.g(x.id);
    for (std::size_t p = 0; p < planes; ++p) {
      const T* src = d.data() + p * oh * ow;
      T* dst = gx.data() + p * h * w;
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) dst[(y / 2) * w + xx / 2] += src[y * ow + xx];
    }
  });
}

template class Tape<float>;
template class Tape<double>;

}  // namespace milg::ad
