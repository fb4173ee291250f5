#pragma once

// Arithmetic inner loops used by the tensor/autodiff layer.
//
// Every kernel exists as a portable scalar reference (templated on the
// element type) and, for float, optionally as an AVX2+FMA variant. The
// active float backend is picked once at startup by CPU detection and can
// be overridden programmatically (tests use this to compare backends).
// Double always runs the scalar reference path.
//
// Determinism: for a fixed backend every kernel accumulates in a fixed
// order, so results are bit-reproducible run to run on the same machine.
// Backends may differ from each other by normal rounding (reductions and
// GEMM accumulate in different orders); equivalence tests bound that gap.

#include <cstddef>
#include <cstdint>

namespace flowsr::kernels {

enum class Backend { scalar = 0, avx2 = 1 };

const char* backend_name(Backend b);
bool backend_supported(Backend b);
Backend detect_backend();       // best supported backend for this CPU
Backend active_backend();
void set_backend(Backend b);    // throws flowsr::Error if unsupported

// ---------------------------------------------------------------------------
// Dispatched float API (hot path)
// ---------------------------------------------------------------------------

void add(const float* a, const float* b, float* out, std::size_t n);
void sub(const float* a, const float* b, float* out, std::size_t n);
void mul(const float* a, const float* b, float* out, std::size_t n);
// acc[i] += a[i] * b[i]
void fmadd(const float* a, const float* b, float* acc, std::size_t n);
// y[i] += alpha * x[i]
void axpy(float alpha, const float* x, float* y, std::size_t n);
void scale(float alpha, const float* x, float* out, std::size_t n);
float sum(const float* a, std::size_t n);
float dot(const float* a, const float* b, std::size_t n);
float sqnorm(const float* a, std::size_t n);

// Row-major GEMM, contiguous operands. accumulate=false overwrites C.
//   nn: C[M,N] (+)= A[M,K] * B[K,N]
//   nt: C[M,N] (+)= A[M,K] * B[N,K]^T
//   tn: C[M,N] (+)= A[K,M]^T * B[K,N]
void gemm_nn(int M, int N, int K, const float* A, const float* B, float* C,
             bool accumulate);
void gemm_nt(int M, int N, int K, const float* A, const float* B, float* C,
             bool accumulate);
void gemm_tn(int M, int N, int K, const float* A, const float* B, float* C,
             bool accumulate);

// ---------------------------------------------------------------------------
// Scalar reference kernels (any element type; also the "scalar" float backend)
// ---------------------------------------------------------------------------

template <class T> void add_ref(const T* a, const T* b, T* out, std::size_t n);
template <class T> void sub_ref(const T* a, const T* b, T* out, std::size_t n);
template <class T> void mul_ref(const T* a, const T* b, T* out, std::size_t n);
template <class T> void fmadd_ref(const T* a, const T* b, T* acc, std::size_t n);
template <class T> void axpy_ref(T alpha, const T* x, T* y, std::size_t n);
template <class T> void scale_ref(T alpha, const T* x, T* out, std::size_t n);
template <class T> T sum_ref(const T* a, std::size_t n);  // pairwise, fixed order
template <class T> T dot_ref(const T* a, const T* b, std::size_t n);
template <class T> T sqnorm_ref(const T* a, std::size_t n);
template <class T>
void gemm_nn_ref(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate);
template <class T>
void gemm_nt_ref(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate);
template <class T>
void gemm_tn_ref(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate);

extern template void add_ref<float>(const float*, const float*, float*, std::size_t);
extern template void add_ref<double>(const double*, const double*, double*, std::size_t);
extern template void sub_ref<float>(const float*, const float*, float*, std::size_t);
extern template void sub_ref<double>(const double*, const double*, double*, std::size_t);
extern template void mul_ref<float>(const float*, const float*, float*, std::size_t);
extern template void mul_ref<double>(const double*, const double*, double*, std::size_t);
extern template void fmadd_ref<float>(const float*, const float*, float*, std::size_t);
extern template void fmadd_ref<double>(const double*, const double*, double*, std::size_t);
extern template void axpy_ref<float>(float, const float*, float*, std::size_t);
extern template void axpy_ref<double>(double, const double*, double*, std::size_t);
extern template void scale_ref<float>(float, const float*, float*, std::size_t);
extern template void scale_ref<double>(double, const double*, double*, std::size_t);
extern template float sum_ref<float>(const float*, std::size_t);
extern template double sum_ref<double>(const double*, std::size_t);
extern template float dot_ref<float>(const float*, const float*, std::size_t);
extern template double dot_ref<double>(const double*, const double*, std::size_t);
extern template float sqnorm_ref<float>(const float*, std::size_t);
extern template double sqnorm_ref<double>(const double*, std::size_t);
extern template void gemm_nn_ref<float>(int, int, int, const float*, const float*, float*, bool);
extern template void gemm_nn_ref<double>(int, int, int, const double*, const double*, double*, bool);
extern template void gemm_nt_ref<float>(int, int, int, const float*, const float*, float*, bool);
extern template void gemm_nt_ref<double>(int, int, int, const double*, const double*, double*, bool);
extern template void gemm_tn_ref<float>(int, int, int, const float*, const float*, float*, bool);
extern template void gemm_tn_ref<double>(int, int, int, const double*, const double*, double*, bool);

// ---------------------------------------------------------------------------
// Type-routed facade: K<float> goes through the dispatch table, any other
// element type runs the scalar reference directly.
// ---------------------------------------------------------------------------

template <class T>
struct K {
  static void add(const T* a, const T* b, T* o, std::size_t n) { add_ref(a, b, o, n); }
  static void sub(const T* a, const T* b, T* o, std::size_t n) { sub_ref(a, b, o, n); }
  static void mul(const T* a, const T* b, T* o, std::size_t n) { mul_ref(a, b, o, n); }
  static void fmadd(const T* a, const T* b, T* acc, std::size_t n) { fmadd_ref(a, b, acc, n); }
  static void axpy(T alpha, const T* x, T* y, std::size_t n) { axpy_ref(alpha, x, y, n); }
  static void scale(T alpha, const T* x, T* o, std::size_t n) { scale_ref(alpha, x, o, n); }
  static T sum(const T* a, std::size_t n) { return sum_ref(a, n); }
  static T dot(const T* a, const T* b, std::size_t n) { return dot_ref(a, b, n); }
  static T sqnorm(const T* a, std::size_t n) { return sqnorm_ref(a, n); }
  static void gemm_nn(int M, int N, int Kd, const T* A, const T* B, T* C, bool acc) {
    gemm_nn_ref(M, N, Kd, A, B, C, acc);
  }
  static void gemm_nt(int M, int N, int Kd, const T* A, const T* B, T* C, bool acc) {
    gemm_nt_ref(M, N, Kd, A, B, C, acc);
  }
  static void gemm_tn(int M, int N, int Kd, const T* A, const T* B, T* C, bool acc) {
    gemm_tn_ref(M, N, Kd, A, B, C, acc);
  }
};

template <>
struct K<float> {
  static void add(const float* a, const float* b, float* o, std::size_t n) {
    kernels::add(a, b, o, n);
  }
  static void sub(const float* a, const float* b, float* o, std::size_t n) {
    kernels::sub(a, b, o, n);
  }
  static void mul(const float* a, const float* b, float* o, std::size_t n) {
    kernels::mul(a, b, o, n);
  }
  static void fmadd(const float* a, const float* b, float* acc, std::size_t n) {
    kernels::fmadd(a, b, acc, n);
  }
  static void axpy(float alpha, const float* x, float* y, std::size_t n) {
    kernels::axpy(alpha, x, y, n);
  }
  static void scale(float alpha, const float* x, float* o, std::size_t n) {
    kernels::scale(alpha, x, o, n);
  }
  static float sum(const float* a, std::size_t n) { return kernels::sum(a, n); }
  static float dot(const float* a, const float* b, std::size_t n) {
    return kernels::dot(a, b, n);
  }
  static float sqnorm(const float* a, std::size_t n) { return kernels::sqnorm(a, n); }
  static void gemm_nn(int M, int N, int Kd, const float* A, const float* B, float* C, bool acc) {
    kernels::gemm_nn(M, N, Kd, A, B, C, acc);
  }
  static void gemm_nt(int M, int N, int Kd, const float* A, const float* B, float* C, bool acc) {
    kernels::gemm_nt(M, N, Kd, A, B, C, acc);
  }
  static void gemm_tn(int M, int N, int Kd, const float* A, const float* B, float* C, bool acc) {
    kernels::gemm_tn(M, N, Kd, A, B, C, acc);
  }
};

}  // namespace flowsr::kernels
