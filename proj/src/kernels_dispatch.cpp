#include "flowsr/kernels.hpp"

#include <string>

#include "flowsr/error.hpp"
#include "kernels_internal.hpp"

namespace flowsr::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend g_backend = detect_backend();

}  // namespace

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
  }
  return "?";
}

bool backend_supported(Backend b) {
  if (b == Backend::scalar) return true;
  return avx2::compiled() && cpu_has_avx2();
}

Backend detect_backend() {
  return backend_supported(Backend::avx2) ? Backend::avx2 : Backend::scalar;
}

Backend active_backend() { return g_backend; }

void set_backend(Backend b) {
  if (!backend_supported(b))
    fail_contract(std::string("kernel backend not supported on this host: ") +
                  backend_name(b));
  g_backend = b;
}

void add(const float* a, const float* b, float* out, std::size_t n) {
  if (g_backend == Backend::avx2) return avx2::add(a, b, out, n);
  add_ref(a, b, out, n);
}

void sub(const float* a, const float* b, float* out, std::size_t n) {
  if (g_backend == Backend::avx2) return avx2::sub(a, b, out, n);
  sub_ref(a, b, out, n);
}

void mul(const float* a, const float* b, float* out, std::size_t n) {
  if (g_backend == Backend::avx2) return avx2::mul(a, b, out, n);
  mul_ref(a, b, out, n);
}

void fmadd(const float* a, const float* b, float* acc, std::size_t n) {
  if (g_backend == Backend::avx2) return avx2::fmadd(a, b, acc, n);
  fmadd_ref(a, b, acc, n);
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
  if (g_backend == Backend::avx2) return avx2::axpy(alpha, x, y, n);
  axpy_ref(alpha, x, y, n);
}

void scale(float alpha, const float* x, float* out, std::size_t n) {
  if (g_backend == Backend::avx2) return avx2::scale(alpha, x, out, n);
  scale_ref(alpha, x, out, n);
}

float sum(const float* a, std::size_t n) {
  if (g_backend == Backend::avx2) return avx2::sum(a, n);
  return sum_ref(a, n);
}

float dot(const float* a, const float* b, std::size_t n) {
  if (g_backend == Backend::avx2) return avx2::dot(a, b, n);
  return dot_ref(a, b, n);
}

float sqnorm(const float* a, std::size_t n) {
  if (g_backend == Backend::avx2) return avx2::sqnorm(a, n);
  return sqnorm_ref(a, n);
}

void gemm_nn(int M, int N, int K, const float* A, const float* B, float* C, bool acc) {
  if (g_backend == Backend::avx2) return avx2::gemm_nn(M, N, K, A, B, C, acc);
  gemm_nn_ref(M, N, K, A, B, C, acc);
}

void gemm_nt(int M, int N, int K, const float* A, const float* B, float* C, bool acc) {
  if (g_backend == Backend::avx2) return avx2::gemm_nt(M, N, K, A, B, C, acc);
  gemm_nt_ref(M, N, K, A, B, C, acc);
}

void gemm_tn(int M, int N, int K, const float* A, const float* B, float* C, bool acc) {
  if (g_backend == Backend::avx2) return avx2::gemm_tn(M, N, K, A, B, C, acc);
  gemm_tn_ref(M, N, K, A, B, C, acc);
}

}  // namespace flowsr::kernels
