#pragma once

// Small dense double-precision helpers for the analytic paths: Gram-matrix
// solves behind the Moore-Penrose pseudoinverse, and sign-log-determinants
// for the Jacobian oracle used in tests. Not a general linear algebra
// library; everything here is O(n^3) textbook code on small matrices.

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "flowsr/error.hpp"

namespace flowsr::linalg {

struct Matd {
  int rows = 0, cols = 0;
  std::vector<double> a;  // row-major

  Matd() = default;
  Matd(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}
  Matd(int r, int c, std::vector<double> v) : rows(r), cols(c), a(std::move(v)) {
    if (a.size() != static_cast<std::size_t>(r) * c) fail_contract("Matd: bad data length");
  }

  double& at(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
  double at(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }

  static Matd identity(int n) {
    Matd m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
  }
};

inline Matd matmul(const Matd& A, const Matd& B) {
  if (A.cols != B.rows) fail_contract("Matd matmul: inner dims differ");
  Matd C(A.rows, B.cols);
  for (int i = 0; i < A.rows; ++i)
    for (int k = 0; k < A.cols; ++k) {
      double aik = A.at(i, k);
      for (int j = 0; j < B.cols; ++j) C.at(i, j) += aik * B.at(k, j);
    }
  return C;
}

inline Matd transpose(const Matd& A) {
  Matd T(A.cols, A.rows);
  for (int i = 0; i < A.rows; ++i)
    for (int j = 0; j < A.cols; ++j) T.at(j, i) = A.at(i, j);
  return T;
}

inline std::vector<double> matvec(const Matd& A, const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != A.cols) fail_contract("Matd matvec: size mismatch");
  std::vector<double> y(static_cast<std::size_t>(A.rows), 0.0);
  for (int i = 0; i < A.rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < A.cols; ++j) s += A.at(i, j) * x[static_cast<std::size_t>(j)];
    y[static_cast<std::size_t>(i)] = s;
  }
  return y;
}

// Cholesky factor of a symmetric positive definite matrix; returns false if
// a pivot drops below tol (numerically rank deficient).
inline bool cholesky(const Matd& G, Matd& L, double tol = 1e-12) {
  if (G.rows != G.cols) fail_contract("cholesky: square matrix required");
  int n = G.rows;
  L = Matd(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = G.at(i, j);
      for (int k = 0; k < j; ++k) s -= L.at(i, k) * L.at(j, k);
      if (i == j) {
        if (s <= tol) return false;
        L.at(i, i) = std::sqrt(s);
      } else {
        L.at(i, j) = s / L.at(j, j);
      }
    }
  }
  return true;
}

// Solve G X = B for SPD G via Cholesky.
inline Matd solve_spd(const Matd& G, const Matd& B) {
  Matd L;
  if (!cholesky(G, L)) fail_contract("solve_spd: matrix is not positive definite");
  int n = G.rows;
  Matd X(n, B.cols);
  for (int c = 0; c < B.cols; ++c) {
    // forward: L z = b
    std::vector<double> z(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      double s = B.at(i, c);
      for (int k = 0; k < i; ++k) s -= L.at(i, k) * z[static_cast<std::size_t>(k)];
      z[static_cast<std::size_t>(i)] = s / L.at(i, i);
    }
    // backward: L^T x = z
    for (int i = n - 1; i >= 0; --i) {
      double s = z[static_cast<std::size_t>(i)];
      for (int k = i + 1; k < n; ++k) s -= L.at(k, i) * X.at(k, c);
      X.at(i, c) = s / L.at(i, i);
    }
  }
  return X;
}

// A^T (A A^T)^-1 for a full-row-rank A. Throws on rank deficiency.
inline Matd pinv_rows(const Matd& A) {
  Matd G = matmul(A, transpose(A));
  Matd L;
  if (!cholesky(G, L))
    fail_contract("pseudoinverse: matrix is rank deficient (A A^T not positive definite)");
  Matd Ginv = solve_spd(G, Matd::identity(G.rows));
  return matmul(transpose(A), Ginv);
}

// (sign, log|det|) via LU with partial pivoting; sign 0 for singular.
inline std::pair<int, double> slogdet(Matd A) {
  if (A.rows != A.cols) fail_contract("slogdet: square matrix required");
  int n = A.rows, sign = 1;
  double logabs = 0.0;
  for (int k = 0; k < n; ++k) {
    int p = k;
    for (int i = k + 1; i < n; ++i)
      if (std::fabs(A.at(i, k)) > std::fabs(A.at(p, k))) p = i;
    if (A.at(p, k) == 0.0) return {0, -std::numeric_limits<double>::infinity()};
    if (p != k) {
      for (int j = 0; j < n; ++j) std::swap(A.at(p, j), A.at(k, j));
      sign = -sign;
    }
    double piv = A.at(k, k);
    if (piv < 0) {
      sign = -sign;
      logabs += std::log(-piv);
    } else {
      logabs += std::log(piv);
    }
    for (int i = k + 1; i < n; ++i) {
      double f = A.at(i, k) / piv;
      A.at(i, k) = f;
      for (int j = k + 1; j < n; ++j) A.at(i, j) -= f * A.at(k, j);
    }
  }
  return {sign, logabs};
}

}  // namespace flowsr::linalg
