#pragma once
// Dense arithmetic kernels used by the autodiff tape.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The variant is chosen once at first use from cpuid and
// can be overridden with MILG_KERNELS=scalar|avx2 or force_isa().
//
// All matrices are row-major and densely packed. The gemm kernels accumulate
// into C (C += op(A) * op(B)); callers zero C when they want a plain product.

#include <cstddef>
#include <string_view>

namespace milg::kernels {

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa);

/// True when this binary carries the AVX2 variant and the CPU supports it.
bool avx2_available();

/// Currently dispatched instruction set.
Isa active_isa();

/// Pin the dispatch target. Throws std::invalid_argument when the requested
/// variant is unavailable on this machine.
void force_isa(Isa isa);

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c);
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);

// C[m x n] += A^T * B, A stored k x m, B stored k x n
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);

// C[m x n] += A * B^T, A stored m x k, B stored n x k
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);

// y += alpha * x
void axpy(std::size_t n, float alpha, const float* x, float* y);
void axpy(std::size_t n, double alpha, const double* x, double* y);

float dot(std::size_t n, const float* x, const float* y);
double dot(std::size_t n, const double* x, const double* y);

// Per-ISA entry points. Exposed so tests can check the variants against each
// other directly; production code goes through the dispatching functions above.
#define MILG_DECLARE_KERNEL_SET(ns)                                                                  \
  namespace ns {                                                                                     \
  void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c);       \
  void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);    \
  void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c);       \
  void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);    \
  void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c);       \
  void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);    \
  void axpy(std::size_t n, float alpha, const float* x, float* y);                                  \
  void axpy(std::size_t n, double alpha, const double* x, double* y);                               \
  float dot(std::size_t n, const float* x, const float* y);                                          \
  double dot(std::size_t n, const double* x, const double* y);                                       \
  }

MILG_DECLARE_KERNEL_SET(scalar)
#if defined(MILG_WITH_AVX2)
MILG_DECLARE_KERNEL_SET(avx2)
#endif

#undef MILG_DECLARE_KERNEL_SET

}  // namespace milg::kernels
