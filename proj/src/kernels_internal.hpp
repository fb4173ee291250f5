#pragma once

// Internal: per-backend entry points wired up by the dispatcher.

#include <cstddef>

namespace flowsr::kernels::avx2 {

bool compiled();  // true when this build carries AVX2 bodies

void add(const float* a, const float* b, float* out, std::size_t n);
void sub(const float* a, const float* b, float* out, std::size_t n);
void mul(const float* a, const float* b, float* out, std::size_t n);
void fmadd(const float* a, const float* b, float* acc, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void scale(float alpha, const float* x, float* out, std::size_t n);
float sum(const float* a, std::size_t n);
float dot(const float* a, const float* b, std::size_t n);
float sqnorm(const float* a, std::size_t n);
void gemm_nn(int M, int N, int K, const float* A, const float* B, float* C, bool acc);
void gemm_nt(int M, int N, int K, const float* A, const float* B, float* C, bool acc);
void gemm_tn(int M, int N, int K, const float* A, const float* B, float* C, bool acc);

}  // namespace flowsr::kernels::avx2
