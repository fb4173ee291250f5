#pragma once

// Closed-form reference for the underdetermined linear-Gaussian problem:
// standard normal prior on R^n, exact measurement y = D x with a full
// row-rank D. The posterior is a degenerate Gaussian on the feasibility
// affine subspace: mean D+ y, covariance I - D+ D (an orthogonal projector,
// hence its own square root). Everything here runs in double; this module
// is the trusted reference the stochastic components are validated against.

#include <vector>

#include "flowsr/linalg.hpp"
#include "flowsr/rng.hpp"

namespace flowsr::oracle2d {

struct LinearGaussianProblem {
  linalg::Matd D;          // m x n, full row rank, m <= n
  std::vector<double> y;   // m

  LinearGaussianProblem(linalg::Matd d, std::vector<double> yv);

  int n() const { return D.cols; }
  int m() const { return D.rows; }
};

struct Posterior {
  std::vector<double> mean;  // n
  linalg::Matd cov;          // n x n projector
};

Posterior posterior(const LinearGaussianProblem& p);

// ||D x - y||_2; zero iff x is feasible.
double feasibility_residual(const std::vector<double>& x, const LinearGaussianProblem& p);

// Exact posterior draws: mean + (I - D+ D) xi with xi ~ N(0, I).
std::vector<std::vector<double>> posterior_samples(const LinearGaussianProblem& p,
                                                   RngStream& rng, int count);

}  // namespace flowsr::oracle2d
