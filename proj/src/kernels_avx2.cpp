// AVX2+FMA float kernels. Compiled with -mavx2 -mfma in its own TU; the
// dispatcher only routes here after a runtime cpuid check.
//
// Accumulation orders differ from the scalar reference (8-lane partial sums,
// FMA rounding), so cross-backend agreement is tolerance-checked, not
// bit-exact, for reductions and GEMM. Elementwise kernels are bit-exact.

#include "kernels_internal.hpp"

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

namespace flowsr::kernels::avx2 {

bool compiled() { return true; }

void add(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void fmadd(const float* a, const float* b, float* acc, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 v = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i),
                               _mm256_loadu_ps(acc + i));
    _mm256_storeu_ps(acc + i, v);
  }
  // Tail mirrors the FMA rounding of the vector body.
  for (; i < n; ++i) acc[i] = __builtin_fmaf(a[i], b[i], acc[i]);
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 v = _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i));
    _mm256_storeu_ps(y + i, v);
  }
  for (; i < n; ++i) y[i] = __builtin_fmaf(alpha, x[i], y[i]);
}

void scale(float alpha, const float* x, float* out, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  __m128 s = _mm_add_ps(lo, hi);
  s = _mm_add_ps(s, _mm_movehl_ps(s, s));
  s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 1));
  return _mm_cvtss_f32(s);
}

}  // namespace

float sum(const float* a, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(a + i));
  float s = hsum(acc);
  for (; i < n; ++i) s += a[i];
  return s;
}

float dot(const float* a, const float* b, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc);
  float s = hsum(acc);
  for (; i < n; ++i) s = __builtin_fmaf(a[i], b[i], s);
  return s;
}

float sqnorm(const float* a, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 v = _mm256_loadu_ps(a + i);
    acc = _mm256_fmadd_ps(v, v, acc);
  }
  float s = hsum(acc);
  for (; i < n; ++i) s = __builtin_fmaf(a[i], a[i], s);
  return s;
}

// --------------------------------------------------------------------------
// GEMM
// --------------------------------------------------------------------------

namespace {

// 4x16 panel: rows i..i+3 of C against a 16-wide column strip, k innermost.
inline void nn_panel4x16(int K, int N, const float* A, int lda, const float* B,
                         float* C, bool acc) {
  __m256 c00, c01, c10, c11, c20, c21, c30, c31;
  if (acc) {
    c00 = _mm256_loadu_ps(C + 0 * N);     c01 = _mm256_loadu_ps(C + 0 * N + 8);
    c10 = _mm256_loadu_ps(C + 1 * N);     c11 = _mm256_loadu_ps(C + 1 * N + 8);
    c20 = _mm256_loadu_ps(C + 2 * N);     c21 = _mm256_loadu_ps(C + 2 * N + 8);
    c30 = _mm256_loadu_ps(C + 3 * N);     c31 = _mm256_loadu_ps(C + 3 * N + 8);
  } else {
    c00 = c01 = c10 = c11 = c20 = c21 = c30 = c31 = _mm256_setzero_ps();
  }
  for (int k = 0; k < K; ++k) {
    const __m256 b0 = _mm256_loadu_ps(B + static_cast<std::size_t>(k) * N);
    const __m256 b1 = _mm256_loadu_ps(B + static_cast<std::size_t>(k) * N + 8);
    __m256 a0 = _mm256_broadcast_ss(A + 0 * lda + k);
    __m256 a1 = _mm256_broadcast_ss(A + 1 * lda + k);
    __m256 a2 = _mm256_broadcast_ss(A + 2 * lda + k);
    __m256 a3 = _mm256_broadcast_ss(A + 3 * lda + k);
    c00 = _mm256_fmadd_ps(a0, b0, c00);   c01 = _mm256_fmadd_ps(a0, b1, c01);
    c10 = _mm256_fmadd_ps(a1, b0, c10);   c11 = _mm256_fmadd_ps(a1, b1, c11);
    c20 = _mm256_fmadd_ps(a2, b0, c20);   c21 = _mm256_fmadd_ps(a2, b1, c21);
    c30 = _mm256_fmadd_ps(a3, b0, c30);   c31 = _mm256_fmadd_ps(a3, b1, c31);
  }
  _mm256_storeu_ps(C + 0 * N, c00);       _mm256_storeu_ps(C + 0 * N + 8, c01);
  _mm256_storeu_ps(C + 1 * N, c10);       _mm256_storeu_ps(C + 1 * N + 8, c11);
  _mm256_storeu_ps(C + 2 * N, c20);       _mm256_storeu_ps(C + 2 * N + 8, c21);
  _mm256_storeu_ps(C + 3 * N, c30);       _mm256_storeu_ps(C + 3 * N + 8, c31);
}

// One row, 8-wide strip.
inline void nn_panel1x8(int K, int N, const float* A, const float* B, float* C,
                        bool acc) {
  __m256 c0 = acc ? _mm256_loadu_ps(C) : _mm256_setzero_ps();
  for (int k = 0; k < K; ++k) {
    const __m256 b0 = _mm256_loadu_ps(B + static_cast<std::size_t>(k) * N);
    c0 = _mm256_fmadd_ps(_mm256_broadcast_ss(A + k), b0, c0);
  }
  _mm256_storeu_ps(C, c0);
}

inline void nn_scalar_cell(int K, int N, const float* arow, const float* B, int j,
                           float* cj, bool acc) {
  float s = acc ? *cj : 0.0f;
  for (int k = 0; k < K; ++k)
    s = __builtin_fmaf(arow[k], B[static_cast<std::size_t>(k) * N + j], s);
  *cj = s;
}

}  // namespace

void gemm_nn(int M, int N, int K, const float* A, const float* B, float* C, bool acc) {
  int i = 0;
  for (; i + 4 <= M; i += 4) {
    const float* arow = A + static_cast<std::size_t>(i) * K;
    float* crow = C + static_cast<std::size_t>(i) * N;
    int j = 0;
    for (; j + 16 <= N; j += 16) nn_panel4x16(K, N, arow, K, B + j, crow + j, acc);
    for (int r = 0; r < 4; ++r) {
      int jj = j;
      for (; jj + 8 <= N; jj += 8)
        nn_panel1x8(K, N, arow + static_cast<std::size_t>(r) * K, B + jj,
                    crow + static_cast<std::size_t>(r) * N + jj, acc);
      for (; jj < N; ++jj)
        nn_scalar_cell(K, N, arow + static_cast<std::size_t>(r) * K, B, jj,
                       crow + static_cast<std::size_t>(r) * N + jj, acc);
    }
  }
  for (; i < M; ++i) {
    const float* arow = A + static_cast<std::size_t>(i) * K;
    float* crow = C + static_cast<std::size_t>(i) * N;
    int j = 0;
    for (; j + 8 <= N; j += 8) nn_panel1x8(K, N, arow, B + j, crow + j, acc);
    for (; j < N; ++j) nn_scalar_cell(K, N, arow, B, j, crow + j, acc);
  }
}

void gemm_nt(int M, int N, int K, const float* A, const float* B, float* C, bool acc) {
  // C[i,j] = dot(A_i, B_j); 1x4 blocks of j share the A row loads.
  for (int i = 0; i < M; ++i) {
    const float* arow = A + static_cast<std::size_t>(i) * K;
    float* crow = C + static_cast<std::size_t>(i) * N;
    int j = 0;
    for (; j + 4 <= N; j += 4) {
      const float* b0 = B + static_cast<std::size_t>(j + 0) * K;
      const float* b1 = B + static_cast<std::size_t>(j + 1) * K;
      const float* b2 = B + static_cast<std::size_t>(j + 2) * K;
      const float* b3 = B + static_cast<std::size_t>(j + 3) * K;
      __m256 s0 = _mm256_setzero_ps(), s1 = _mm256_setzero_ps();
      __m256 s2 = _mm256_setzero_ps(), s3 = _mm256_setzero_ps();
      int k = 0;
      for (; k + 8 <= K; k += 8) {
        const __m256 av = _mm256_loadu_ps(arow + k);
        s0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b0 + k), s0);
        s1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b1 + k), s1);
        s2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b2 + k), s2);
        s3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b3 + k), s3);
      }
      float r0 = hsum(s0), r1 = hsum(s1), r2 = hsum(s2), r3 = hsum(s3);
      for (; k < K; ++k) {
        r0 = __builtin_fmaf(arow[k], b0[k], r0);
        r1 = __builtin_fmaf(arow[k], b1[k], r1);
        r2 = __builtin_fmaf(arow[k], b2[k], r2);
        r3 = __builtin_fmaf(arow[k], b3[k], r3);
      }
      if (acc) { r0 += crow[j]; r1 += crow[j + 1]; r2 += crow[j + 2]; r3 += crow[j + 3]; }
      crow[j] = r0; crow[j + 1] = r1; crow[j + 2] = r2; crow[j + 3] = r3;
    }
    for (; j < N; ++j) {
      const float* brow = B + static_cast<std::size_t>(j) * K;
      float r = dot(arow, brow, static_cast<std::size_t>(K));
      crow[j] = acc ? crow[j] + r : r;
    }
  }
}

void gemm_tn(int M, int N, int K, const float* A, const float* B, float* C, bool acc) {
  // C[i,j] = sum_k A[k,i] B[k,j]; same j-vectorized shape as nn with strided A.
  for (int i = 0; i < M; ++i) {
    float* crow = C + static_cast<std::size_t>(i) * N;
    int j = 0;
    for (; j + 8 <= N; j += 8) {
      __m256 c0 = acc ? _mm256_loadu_ps(crow + j) : _mm256_setzero_ps();
      for (int k = 0; k < K; ++k) {
        const __m256 b0 = _mm256_loadu_ps(B + static_cast<std::size_t>(k) * N + j);
        c0 = _mm256_fmadd_ps(_mm256_broadcast_ss(A + static_cast<std::size_t>(k) * M + i), b0, c0);
      }
      _mm256_storeu_ps(crow + j, c0);
    }
    for (; j < N; ++j) {
      float s = acc ? crow[j] : 0.0f;
      for (int k = 0; k < K; ++k)
        s = __builtin_fmaf(A[static_cast<std::size_t>(k) * M + i],
                           B[static_cast<std::size_t>(k) * N + j], s);
      crow[j] = s;
    }
  }
}

}  // namespace flowsr::kernels::avx2

#else  // no AVX2 at compile time: stubs, dispatcher never selects this backend

namespace flowsr::kernels::avx2 {

bool compiled() { return false; }

void add(const float*, const float*, float*, std::size_t) {}
void sub(const float*, const float*, float*, std::size_t) {}
void mul(const float*, const float*, float*, std::size_t) {}
void fmadd(const float*, const float*, float*, std::size_t) {}
void axpy(float, const float*, float*, std::size_t) {}
void scale(float, const float*, float*, std::size_t) {}
float sum(const float*, std::size_t) { return 0.0f; }
float dot(const float*, const float*, std::size_t) { return 0.0f; }
float sqnorm(const float*, std::size_t) { return 0.0f; }
void gemm_nn(int, int, int, const float*, const float*, float*, bool) {}
void gemm_nt(int, int, int, const float*, const float*, float*, bool) {}
void gemm_tn(int, int, int, const float*, const float*, float*, bool) {}

}  // namespace flowsr::kernels::avx2

#endif
