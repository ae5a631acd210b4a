// Compiled with -mavx2 -mfma. Nothing in here may run before the dispatcher
// has confirmed CPU support.
#include <immintrin.h>

#include "milg/kernels.hpp"

namespace milg::kernels::avx2 {

namespace {

// y[0..n) += s * x[0..n)
inline void fma_row(std::size_t n, float s, const float* x, float* y) {
  const __m256 vs = _mm256_set1_ps(s);
  std::size_t j = 0;
  for (; j + 32 <= n; j += 32) {
    __m256 y0 = _mm256_loadu_ps(y + j);
    __m256 y1 = _mm256_loadu_ps(y + j + 8);
    __m256 y2 = _mm256_loadu_ps(y + j + 16);
    __m256 y3 = _mm256_loadu_ps(y + j + 24);
    y0 = _mm256_fmadd_ps(vs, _mm256_loadu_ps(x + j), y0);
    y1 = _mm256_fmadd_ps(vs, _mm256_loadu_ps(x + j + 8), y1);
    y2 = _mm256_fmadd_ps(vs, _mm256_loadu_ps(x + j + 16), y2);
    y3 = _mm256_fmadd_ps(vs, _mm256_loadu_ps(x + j + 24), y3);
    _mm256_storeu_ps(y + j, y0);
    _mm256_storeu_ps(y + j + 8, y1);
    _mm256_storeu_ps(y + j + 16, y2);
    _mm256_storeu_ps(y + j + 24, y3);
  }
  for (; j + 8 <= n; j += 8) {
    _mm256_storeu_ps(y + j, _mm256_fmadd_ps(vs, _mm256_loadu_ps(x + j), _mm256_loadu_ps(y + j)));
  }
  for (; j < n; ++j) y[j] += s * x[j];
}

inline void fma_row(std::size_t n, double s, const double* x, double* y) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t j = 0;
  for (; j + 16 <= n; j += 16) {
    __m256d y0 = _mm256_loadu_pd(y + j);
    __m256d y1 = _mm256_loadu_pd(y + j + 4);
    __m256d y2 = _mm256_loadu_pd(y + j + 8);
    __m256d y3 = _mm256_loadu_pd(y + j + 12);
    y0 = _mm256_fmadd_pd(vs, _mm256_loadu_pd(x + j), y0);
    y1 = _mm256_fmadd_pd(vs, _mm256_loadu_pd(x + j + 4), y1);
    y2 = _mm256_fmadd_pd(vs, _mm256_loadu_pd(x + j + 8), y2);
    y3 = _mm256_fmadd_pd(vs, _mm256_loadu_pd(x + j + 12), y3);
    _mm256_storeu_pd(y + j, y0);
    _mm256_storeu_pd(y + j + 4, y1);
    _mm256_storeu_pd(y + j + 8, y2);
    _mm256_storeu_pd(y + j + 12, y3);
  }
  for (; j + 4 <= n; j += 4) {
    _mm256_storeu_pd(y + j, _mm256_fmadd_pd(vs, _mm256_loadu_pd(x + j), _mm256_loadu_pd(y + j)));
  }
  for (; j < n; ++j) y[j] += s * x[j];
}

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d high64 = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
}

float dot_impl(std::size_t n, const float* x, const float* y) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8) acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
  float acc = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double dot_impl(std::size_t n, const double* x, const double* y) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <typename T>
void gemm_nn_impl(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      if (arow[p] == T(0)) continue;
      fma_row(n, arow[p], b + p * n, crow);
    }
  }
}

template <typename T>
void gemm_tn_impl(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = a + p * m;
    const T* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      if (arow[i] == T(0)) continue;
      fma_row(n, arow[i], brow, c + i * n);
    }
  }
}

template <typename T>
void gemm_nt_impl(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot_impl(k, arow, b + j * k);
  }
}

}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c) { gemm_nn_impl(m, n, k, a, b, c); }
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) { gemm_nn_impl(m, n, k, a, b, c); }
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c) { gemm_tn_impl(m, n, k, a, b, c); }
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) { gemm_tn_impl(m, n, k, a, b, c); }
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c) { gemm_nt_impl(m, n, k, a, b, c); }
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) { gemm_nt_impl(m, n, k, a, b, c); }
void axpy(std::size_t n, float alpha, const float* x, float* y) { fma_row(n, alpha, x, y); }
void axpy(std::size_t n, double alpha, const double* x, double* y) { fma_row(n, alpha, x, y); }
float dot(std::size_t n, const float* x, const float* y) { return dot_impl(n, x, y); }
double dot(std::size_t n, const double* x, const double* y) { return dot_impl(n, x, y); }

}  // namespace milg::kernels::avx2
