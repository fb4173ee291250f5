#include "flowsr/oracle2d.hpp"

#include <cmath>

namespace flowsr::oracle2d {

LinearGaussianProblem::LinearGaussianProblem(linalg::Matd d, std::vector<double> yv)
    : D(std::move(d)), y(std::move(yv)) {
  if (D.rows > D.cols) fail_contract("problem must be (under)determined: m <= n");
  if (static_cast<int>(y.size()) != D.rows)
    fail_contract("measurement length does not match row count");
  linalg::Matd L;
  if (!cholesky(matmul(D, transpose(D)), L))
    fail_contract("degradation matrix is rank deficient");
}

Posterior posterior(const LinearGaussianProblem& p) {
  linalg::Matd pinv = linalg::pinv_rows(p.D);  // n x m
  Posterior post;
  post.mean = matvec(pinv, p.y);
  linalg::Matd proj = matmul(pinv, p.D);  // D+ D
  post.cov = linalg::Matd::identity(p.n());
  for (int i = 0; i < p.n(); ++i)
    for (int j = 0; j < p.n(); ++j) post.cov.at(i, j) -= proj.at(i, j);
  return post;
}

double feasibility_residual(const std::vector<double>& x, const LinearGaussianProblem& p) {
  if (static_cast<int>(x.size()) != p.n())
    fail_contract("feasibility_residual: dimension mismatch");
  std::vector<double> dx = matvec(p.D, x);
  double s = 0.0;
  for (int i = 0; i < p.m(); ++i) {
    double d = dx[static_cast<std::size_t>(i)] - p.y[static_cast<std::size_t>(i)];
    s += d * d;
  }
  return std::sqrt(s);
}

std::vector<std::vector<double>> posterior_samples(const LinearGaussianProblem& p,
                                                   RngStream& rng, int count) {
  Posterior post = posterior(p);
  std::vector<std::vector<double>> out;
  out.reserve(static_cast<std::size_t>(count));
  std::vector<double> xi(static_cast<std::size_t>(p.n()));
  for (int k = 0; k < count; ++k) {
    for (auto& v : xi) v = rng.normal();
    // cov is an orthogonal projector, so cov^(1/2) == cov
    std::vector<double> jitter = matvec(post.cov, xi);
    std::vector<double> x = post.mean;
    for (int i = 0; i < p.n(); ++i) x[static_cast<std::size_t>(i)] += jitter[static_cast<std::size_t>(i)];
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace flowsr::oracle2d
