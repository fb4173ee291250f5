#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "flowsr/oracle2d.hpp"

using namespace flowsr;
using namespace flowsr::oracle2d;

namespace {

LinearGaussianProblem make(std::vector<double> row, double y) {
  const int n = static_cast<int>(row.size());
  return LinearGaussianProblem(linalg::Matd(1, n, std::move(row)), {y});
}

}  // namespace

TEST_CASE("posterior for D = [1 0], y = 2") {
  auto post = posterior(make({1, 0}, 2));
  CHECK(post.mean[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(post.mean[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(post.cov.at(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(post.cov.at(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(post.cov.at(1, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(post.cov.at(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("posterior for D = [0.5 0.5], y = 1") {
  auto post = posterior(make({0.5, 0.5}, 1));
  CHECK(post.mean[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(post.mean[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(post.cov.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(post.cov.at(0, 1) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(post.cov.at(1, 0) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(post.cov.at(1, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("posterior with D = identity collapses onto y") {
  LinearGaussianProblem p(linalg::Matd::identity(2), {0.3, -1.7});
  auto post = posterior(p);
  CHECK(post.mean[0] == doctest::Approx(0.3));
  CHECK(post.mean[1] == doctest::Approx(-1.7));
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(std::fabs(post.cov.at(i, j)) < 1e-12);
}

TEST_CASE("feasibility residual") {
  auto p = make({1, 0}, 2);
  auto post = posterior(p);
  CHECK(feasibility_residual(post.mean, p) == doctest::Approx(0.0));
  CHECK(feasibility_residual({3, 7}, p) == doctest::Approx(1.0));
  // mean plus a kernel vector stays feasible
  CHECK(feasibility_residual({2, 123.0}, p) == doctest::Approx(0.0));
}

TEST_CASE("covariance is a projector") {
  auto post = posterior(make({0.3, -1.1}, 0.7));
  auto sq = matmul(post.cov, post.cov);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(std::fabs(sq.at(i, j) - post.cov.at(i, j)) < 1e-10);
}

TEST_CASE("posterior mean is the minimum-norm feasible point") {
  RngStream rng(11, 1);
  auto p = make({0.8, -0.6}, 1.3);
  auto post = posterior(p);
  double mean_norm = std::hypot(post.mean[0], post.mean[1]);
  for (int k = 0; k < 200; ++k) {
    // random feasible point: mean + kernel direction
    auto s = posterior_samples(p, rng, 1)[0];
    double n = std::hypot(s[0], s[1]);
    CHECK(mean_norm <= n + 1e-12);
  }
}

TEST_CASE("posterior sampler matches closed-form moments") {
  RngStream rng(12, 1);
  auto p = make({1, 0}, 2);
  auto samples = posterior_samples(p, rng, 10000);
  double m0 = 0, m1 = 0, v0 = 0, v1 = 0;
  for (const auto& s : samples) {
    m0 += s[0];
    m1 += s[1];
  }
  m0 /= samples.size();
  m1 /= samples.size();
  for (const auto& s : samples) {
    v0 += (s[0] - m0) * (s[0] - m0);
    v1 += (s[1] - m1) * (s[1] - m1);
  }
  v0 /= samples.size();
  v1 /= samples.size();
  CHECK(std::fabs(m0 - 2.0) < 0.05);
  CHECK(std::fabs(m1 - 0.0) < 0.05);
  CHECK(std::fabs(v0) < 1e-20);  // first coordinate is pinned
  CHECK(std::fabs(v1 - 1.0) < 0.05);

  for (const auto& s : samples)
    CHECK(feasibility_residual(s, p) < 1e-5);
}

TEST_CASE("degenerate covariance: all samples equal the mean") {
  RngStream rng(13, 1);
  LinearGaussianProblem p(linalg::Matd::identity(2), {1.0, 2.0});
  auto samples = posterior_samples(p, rng, 50);
  for (const auto& s : samples) {
    CHECK(s[0] == doctest::Approx(1.0));
    CHECK(s[1] == doctest::Approx(2.0));
  }
}

// Brute-force agreement: the grid-restricted prior conditioned on
// |Dx - y| < h converges to the closed form as h shrinks.
TEST_CASE("grid oracle converges to the analytic posterior") {
  auto p = make({0.5, 0.5}, 1.0);
  auto post = posterior(p);

  auto grid_moments = [&](double h, double* mean_out, double* var_out) {
    const int steps = 801;
    const double lo = -4.0, hi = 4.0;
    const double dx = (hi - lo) / (steps - 1);
    double wsum = 0, m0 = 0, m1 = 0;
    std::vector<std::pair<double, std::pair<double, double>>> kept;
    for (int i = 0; i < steps; ++i)
      for (int j = 0; j < steps; ++j) {
        double x0 = lo + i * dx, x1 = lo + j * dx;
        if (std::fabs(0.5 * x0 + 0.5 * x1 - 1.0) >= h) continue;
        double w = std::exp(-0.5 * (x0 * x0 + x1 * x1));
        wsum += w;
        m0 += w * x0;
        m1 += w * x1;
        kept.push_back({w, {x0, x1}});
      }
    m0 /= wsum;
    m1 /= wsum;
    double v0 = 0, v1 = 0;
    for (auto& [w, xy] : kept) {
      v0 += w * (xy.first - m0) * (xy.first - m0);
      v1 += w * (xy.second - m1) * (xy.second - m1);
    }
    mean_out[0] = m0;
    mean_out[1] = m1;
    var_out[0] = v0 / wsum;
    var_out[1] = v1 / wsum;
  };

  double mean_h[2], var_h[2];
  double err_big = 0, err_small = 0;
  grid_moments(0.20, mean_h, var_h);
  err_big = std::fabs(mean_h[0] - post.mean[0]) + std::fabs(var_h[0] - post.cov.at(0, 0));
  grid_moments(0.05, mean_h, var_h);
  err_small = std::fabs(mean_h[0] - post.mean[0]) + std::fabs(var_h[0] - post.cov.at(0, 0));

  CHECK(std::fabs(mean_h[0] - post.mean[0]) < 0.02);
  CHECK(std::fabs(mean_h[1] - post.mean[1]) < 0.02);
  CHECK(std::fabs(var_h[0] - post.cov.at(0, 0)) < 0.02);
  CHECK(std::fabs(var_h[1] - post.cov.at(1, 1)) < 0.02);
  CHECK(err_small <= err_big + 1e-9);
}

TEST_CASE("rank-deficient problems are rejected") {
  CHECK_THROWS_AS(make({0, 0}, 1.0), Error);
  CHECK_THROWS_AS(LinearGaussianProblem(linalg::Matd(3, 2, {1, 0, 0, 1, 1, 1}), {1, 2, 3}),
                  Error);
}
