#include "milg/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace milg::kernels {

namespace {

Isa detect() {
  if (const char* env = std::getenv("MILG_KERNELS")) {
    const std::string want(env);
    if (want == "scalar") return Isa::Scalar;
    if (want == "avx2" && avx2_available()) return Isa::Avx2;
  }
  return avx2_available() ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<int>& isa_slot() {
  static std::atomic<int> slot{static_cast<int>(detect())};
  return slot;
}

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

bool avx2_available() {
#if defined(MILG_WITH_AVX2)
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok;
#else
  return false;
#endif
}

Isa active_isa() { return static_cast<Isa>(isa_slot().load(std::memory_order_relaxed)); }

void force_isa(Isa isa) {
  if (isa == Isa::Avx2 && !avx2_available()) throw std::invalid_argument("AVX2 kernels unavailable on this machine");
  isa_slot().store(static_cast<int>(isa), std::memory_order_relaxed);
}

#if defined(MILG_WITH_AVX2)
#define MILG_DISPATCH(call)                              \
  do {                                                   \
    if (active_isa() == Isa::Avx2) return avx2::call;    \
    return scalar::call;                                 \
  } while (0)
#else
#define MILG_DISPATCH(call) return scalar::call
#endif

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c) { MILG_DISPATCH(gemm_nn(m, n, k, a, b, c)); }
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) { MILG_DISPATCH(gemm_nn(m, n, k, a, b, c)); }
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c) { MILG_DISPATCH(gemm_tn(m, n, k, a, b, c)); }
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) { MILG_DISPATCH(gemm_tn(m, n, k, a, b, c)); }
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c) { MILG_DISPATCH(gemm_nt(m, n, k, a, b, c)); }
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) { MILG_DISPATCH(gemm_nt(m, n, k, a, b, c)); }
void axpy(std::size_t n, float alpha, const float* x, float* y) { MILG_DISPATCH(axpy(n, alpha, x, y)); }
void axpy(std::size_t n, double alpha, const double* x, double* y) { MILG_DISPATCH(axpy(n, alpha, x, y)); }
float dot(std::size_t n, const float* x, const float* y) { MILG_DISPATCH(dot(n, x, y)); }
double dot(std::size_t n, const double* x, const double* y) { MILG_DISPATCH(dot(n, x, y)); }

#undef MILG_DISPATCH

}  // namespace milg::kernels
