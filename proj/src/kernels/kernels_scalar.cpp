#include "milg/kernels.hpp"

namespace milg::kernels::scalar {

namespace {

template <typename T>
void gemm_nn_impl(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * k + p];
      if (aip == T(0)) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

template <typename T>
void gemm_tn_impl(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = a + p * m;
    const T* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T api = arow[i];
      if (api == T(0)) continue;
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

template <typename T>
void gemm_nt_impl(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

template <typename T>
void axpy_impl(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
T dot_impl(std::size_t n, const T* x, const T* y) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c) { gemm_nn_impl(m, n, k, a, b, c); }
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) { gemm_nn_impl(m, n, k, a, b, c); }
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c) { gemm_tn_impl(m, n, k, a, b, c); }
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) { gemm_tn_impl(m, n, k, a, b, c); }
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c) { gemm_nt_impl(m, n, k, a, b, c); }
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) { gemm_nt_impl(m, n, k, a, b, c); }
void axpy(std::size_t n, float alpha, const float* x, float* y) { axpy_impl(n, alpha, x, y); }
void axpy(std::size_t n, double alpha, const double* x, double* y) { axpy_impl(n, alpha, x, y); }
float dot(std::size_t n, const float* x, const float* y) { return dot_impl(n, x, y); }
double dot(std::size_t n, const double* x, const double* y) { return dot_impl(n, x, y); }

}  // namespace milg::kernels::scalar
