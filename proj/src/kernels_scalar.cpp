// Scalar reference kernels. These define the semantics every other backend
// is tested against: plain loops, k-ascending GEMM accumulation, pairwise
// reductions with a fixed split rule.

#include "flowsr/kernels.hpp"

namespace flowsr::kernels {

template <class T>
void add_ref(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <class T>
void sub_ref(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <class T>
void mul_ref(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <class T>
void fmadd_ref(const T* a, const T* b, T* acc, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) acc[i] += a[i] * b[i];
}

template <class T>
void axpy_ref(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void scale_ref(T alpha, const T* x, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

namespace {

// Pairwise summation over a fixed binary split; base case sequential.
// The split rule depends only on n, so the order is reproducible.
template <class T, class F>
T pairwise(const F& leaf, std::size_t lo, std::size_t hi) {
  constexpr std::size_t kBase = 64;
  if (hi - lo <= kBase) return leaf(lo, hi);
  std::size_t mid = lo + (hi - lo) / 2;
  return pairwise<T>(leaf, lo, mid) + pairwise<T>(leaf, mid, hi);
}

}  // namespace

template <class T>
T sum_ref(const T* a, std::size_t n) {
  auto leaf = [a](std::size_t lo, std::size_t hi) {
    T s = T(0);
    for (std::size_t i = lo; i < hi; ++i) s += a[i];
    return s;
  };
  return pairwise<T>(leaf, 0, n);
}

template <class T>
T dot_ref(const T* a, const T* b, std::size_t n) {
  auto leaf = [a, b](std::size_t lo, std::size_t hi) {
    T s = T(0);
    for (std::size_t i = lo; i < hi; ++i) s += a[i] * b[i];
    return s;
  };
  return pairwise<T>(leaf, 0, n);
}

template <class T>
T sqnorm_ref(const T* a, std::size_t n) {
  auto leaf = [a](std::size_t lo, std::size_t hi) {
    T s = T(0);
    for (std::size_t i = lo; i < hi; ++i) s += a[i] * a[i];
    return s;
  };
  return pairwise<T>(leaf, 0, n);
}

template <class T>
void gemm_nn_ref(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
  for (int i = 0; i < M; ++i) {
    T* c = C + static_cast<std::size_t>(i) * N;
    if (!accumulate) {
      for (int j = 0; j < N; ++j) c[j] = T(0);
    }
    const T* arow = A + static_cast<std::size_t>(i) * K;
    for (int k = 0; k < K; ++k) {
      const T aik = arow[k];
      const T* brow = B + static_cast<std::size_t>(k) * N;
      for (int j = 0; j < N; ++j) c[j] += aik * brow[j];
    }
  }
}

template <class T>
void gemm_nt_ref(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
  for (int i = 0; i < M; ++i) {
    const T* arow = A + static_cast<std::size_t>(i) * K;
    T* c = C + static_cast<std::size_t>(i) * N;
    for (int j = 0; j < N; ++j) {
      const T* brow = B + static_cast<std::size_t>(j) * K;
      T s = T(0);
      for (int k = 0; k < K; ++k) s += arow[k] * brow[k];
      c[j] = accumulate ? c[j] + s : s;
    }
  }
}

template <class T>
void gemm_tn_ref(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
  for (int i = 0; i < M; ++i) {
    T* c = C + static_cast<std::size_t>(i) * N;
    if (!accumulate) {
      for (int j = 0; j < N; ++j) c[j] = T(0);
    }
    for (int k = 0; k < K; ++k) {
      const T aki = A[static_cast<std::size_t>(k) * M + i];
      const T* brow = B + static_cast<std::size_t>(k) * N;
      for (int j = 0; j < N; ++j) c[j] += aki * brow[j];
    }
  }
}

template void add_ref<float>(const float*, const float*, float*, std::size_t);
template void add_ref<double>(const double*, const double*, double*, std::size_t);
template void sub_ref<float>(const float*, const float*, float*, std::size_t);
template void sub_ref<double>(const double*, const double*, double*, std::size_t);
template void mul_ref<float>(const float*, const float*, float*, std::size_t);
template void mul_ref<double>(const double*, const double*, double*, std::size_t);
template void fmadd_ref<float>(const float*, const float*, float*, std::size_t);
template void fmadd_ref<double>(const double*, const double*, double*, std::size_t);
template void axpy_ref<float>(float, const float*, float*, std::size_t);
template void axpy_ref<double>(double, const double*, double*, std::size_t);
template void scale_ref<float>(float, const float*, float*, std::size_t);
template void scale_ref<double>(double, const double*, double*, std::size_t);
template float sum_ref<float>(const float*, std::size_t);
template double sum_ref<double>(const double*, std::size_t);
template float dot_ref<float>(const float*, const float*, std::size_t);
template double dot_ref<double>(const double*, const double*, std::size_t);
template float sqnorm_ref<float>(const float*, std::size_t);
template double sqnorm_ref<double>(const double*, std::size_t);
template void gemm_nn_ref<float>(int, int, int, const float*, const float*, float*, bool);
template void gemm_nn_ref<double>(int, int, int, const double*, const double*, double*, bool);
template void gemm_nt_ref<float>(int, int, int, const float*, const float*, float*, bool);
template void gemm_nt_ref<double>(int, int, int, const double*, const double*, double*, bool);
template void gemm_tn_ref<float>(int, int, int, const float*, const float*, float*, bool);
template void gemm_tn_ref<double>(int, int, int, const double*, const double*, double*, bool);

}  // namespace flowsr::kernels
