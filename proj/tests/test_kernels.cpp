#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "flowsr/kernels.hpp"
#include "flowsr/rng.hpp"

using namespace flowsr;
namespace kn = flowsr::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, RngStream& rng, float scale = 1.0f) {
  std::vector<float> v(n);
  for (auto& x : v) x = rng.normalf() * scale;
  return v;
}

// Relative gap against the magnitude of the reference value.
double rel(double a, double b) {
  return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

struct BackendGuard {
  kn::Backend saved = kn::active_backend();
  ~BackendGuard() { kn::set_backend(saved); }
};

}  // namespace

TEST_CASE("scalar reference basics") {
  BackendGuard guard;
  kn::set_backend(kn::Backend::scalar);

  std::vector<float> a{1, 2, 3}, b{4, 5, 6}, out(3);
  kn::add(a.data(), b.data(), out.data(), 3);
  CHECK(out == std::vector<float>{5, 7, 9});
  kn::sub(a.data(), b.data(), out.data(), 3);
  CHECK(out == std::vector<float>{-3, -3, -3});
  kn::mul(a.data(), b.data(), out.data(), 3);
  CHECK(out == std::vector<float>{4, 10, 18});
  CHECK(kn::sum(a.data(), 3) == doctest::Approx(6.0f));
  CHECK(kn::dot(a.data(), b.data(), 3) == doctest::Approx(32.0f));
  CHECK(kn::sqnorm(b.data(), 3) == doctest::Approx(77.0f));
}

TEST_CASE("gemm reference agrees with hand results") {
  BackendGuard guard;
  kn::set_backend(kn::Backend::scalar);

  // A = [[1,2],[3,4]], B = [[5,6],[7,8]]
  std::vector<float> A{1, 2, 3, 4}, B{5, 6, 7, 8}, C(4, -1.0f);
  kn::gemm_nn(2, 2, 2, A.data(), B.data(), C.data(), false);
  CHECK(C == std::vector<float>{19, 22, 43, 50});
  kn::gemm_nt(2, 2, 2, A.data(), B.data(), C.data(), false);  // A * B^T
  CHECK(C == std::vector<float>{17, 23, 39, 53});
  kn::gemm_tn(2, 2, 2, A.data(), B.data(), C.data(), false);  // A^T * B
  CHECK(C == std::vector<float>{26, 30, 38, 44});

  // accumulate=true adds on top
  std::vector<float> D(4, 1.0f);
  kn::gemm_nn(2, 2, 2, A.data(), B.data(), D.data(), true);
  CHECK(D == std::vector<float>{20, 23, 44, 51});
}

TEST_CASE("avx2 backend matches scalar reference") {
  if (!kn::backend_supported(kn::Backend::avx2)) {
    MESSAGE("avx2 not supported on this host; skipping equivalence checks");
    return;
  }
  BackendGuard guard;
  RngStream rng(42, 1);

  // Elementwise ops without FMA must match bit for bit.
  for (std::size_t n : {1u, 7u, 8u, 9u, 64u, 1000u, 4097u}) {
    auto a = random_vec(n, rng), b = random_vec(n, rng);
    std::vector<float> the_scalar(n), the_avx2(n);
    kn::set_backend(kn::Backend::scalar);
    kn::add(a.data(), b.data(), the_scalar.data(), n);
    kn::set_backend(kn::Backend::avx2);
    kn::add(a.data(), b.data(), the_avx2.data(), n);
    CHECK(the_scalar == the_avx2);

    kn::set_backend(kn::Backend::scalar);
    kn::mul(a.data(), b.data(), the_scalar.data(), n);
    kn::set_backend(kn::Backend::avx2);
    kn::mul(a.data(), b.data(), the_avx2.data(), n);
    CHECK(the_scalar == the_avx2);

    kn::set_backend(kn::Backend::scalar);
    kn::scale(0.37f, a.data(), the_scalar.data(), n);
    kn::set_backend(kn::Backend::avx2);
    kn::scale(0.37f, a.data(), the_avx2.data(), n);
    CHECK(the_scalar == the_avx2);
  }

  // Reductions and FMA-bearing ops: different accumulation order, so
  // tolerance-checked.
  for (std::size_t n : {3u, 100u, 1024u, 10001u}) {
    auto a = random_vec(n, rng), b = random_vec(n, rng);
    kn::set_backend(kn::Backend::scalar);
    double s_sum = kn::sum(a.data(), n);
    double s_dot = kn::dot(a.data(), b.data(), n);
    double s_nrm = kn::sqnorm(a.data(), n);
    kn::set_backend(kn::Backend::avx2);
    CHECK(rel(kn::sum(a.data(), n), s_sum) < 1e-5);
    CHECK(rel(kn::dot(a.data(), b.data(), n), s_dot) < 1e-5);
    CHECK(rel(kn::sqnorm(a.data(), n), s_nrm) < 1e-5);

    auto acc0 = random_vec(n, rng);
    auto acc1 = acc0;
    kn::set_backend(kn::Backend::scalar);
    kn::fmadd(a.data(), b.data(), acc0.data(), n);
    kn::set_backend(kn::Backend::avx2);
    kn::fmadd(a.data(), b.data(), acc1.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(rel(acc0[i], acc1[i]) < 1e-5);
  }
}

TEST_CASE("avx2 gemm matches scalar gemm across shapes") {
  if (!kn::backend_supported(kn::Backend::avx2)) return;
  BackendGuard guard;
  RngStream rng(7, 2);

  struct Case { int M, N, K; };
  // Shapes straddle all the microkernel tails (M%4, N%16, N%8, small K).
  for (Case c : {Case{1, 1, 1}, Case{3, 5, 2}, Case{4, 16, 9}, Case{5, 17, 33},
                 Case{13, 40, 7}, Case{32, 144, 64}, Case{6, 64, 21}}) {
    auto A = random_vec(static_cast<std::size_t>(c.M) * c.K, rng);
    auto B_nn = random_vec(static_cast<std::size_t>(c.K) * c.N, rng);
    auto B_nt = random_vec(static_cast<std::size_t>(c.N) * c.K, rng);
    auto A_tn = random_vec(static_cast<std::size_t>(c.K) * c.M, rng);
    std::size_t cn = static_cast<std::size_t>(c.M) * c.N;
    std::vector<float> C0(cn), C1(cn);

    for (bool acc : {false, true}) {
      auto seed = random_vec(cn, rng);
      C0 = seed;
      C1 = seed;
      kn::set_backend(kn::Backend::scalar);
      kn::gemm_nn(c.M, c.N, c.K, A.data(), B_nn.data(), C0.data(), acc);
      kn::set_backend(kn::Backend::avx2);
      kn::gemm_nn(c.M, c.N, c.K, A.data(), B_nn.data(), C1.data(), acc);
      for (std::size_t i = 0; i < cn; ++i) REQUIRE(rel(C0[i], C1[i]) < 2e-5);

      C0 = seed;
      C1 = seed;
      kn::set_backend(kn::Backend::scalar);
      kn::gemm_nt(c.M, c.N, c.K, A.data(), B_nt.data(), C0.data(), acc);
      kn::set_backend(kn::Backend::avx2);
      kn::gemm_nt(c.M, c.N, c.K, A.data(), B_nt.data(), C1.data(), acc);
      for (std::size_t i = 0; i < cn; ++i) REQUIRE(rel(C0[i], C1[i]) < 2e-5);

      C0 = seed;
      C1 = seed;
      kn::set_backend(kn::Backend::scalar);
      kn::gemm_tn(c.M, c.N, c.K, A_tn.data(), B_nn.data(), C0.data(), acc);
      kn::set_backend(kn::Backend::avx2);
      kn::gemm_tn(c.M, c.N, c.K, A_tn.data(), B_nn.data(), C1.data(), acc);
      for (std::size_t i = 0; i < cn; ++i) REQUIRE(rel(C0[i], C1[i]) < 2e-5);
    }
  }
}

TEST_CASE("float reference tracks double reference") {
  RngStream rng(3, 3);
  const int M = 9, N = 23, K = 31;
  auto A = random_vec(static_cast<std::size_t>(M) * K, rng);
  auto B = random_vec(static_cast<std::size_t>(K) * N, rng);
  std::vector<double> Ad(A.begin(), A.end()), Bd(B.begin(), B.end());
  std::vector<float> Cf(static_cast<std::size_t>(M) * N);
  std::vector<double> Cd(static_cast<std::size_t>(M) * N);
  kn::gemm_nn_ref(M, N, K, A.data(), B.data(), Cf.data(), false);
  kn::gemm_nn_ref(M, N, K, Ad.data(), Bd.data(), Cd.data(), false);
  for (std::size_t i = 0; i < Cf.size(); ++i) CHECK(rel(Cf[i], Cd[i]) < 1e-5);
}

TEST_CASE("rng streams are reproducible and independent") {
  RngStream a(123, 5), b(123, 5), c(123, 6);
  for (int i = 0; i < 100; ++i) {
    auto va = a.next_u64();
    CHECK(va == b.next_u64());
  }
  // Different stream id: sequences should differ somewhere early.
  RngStream a2(123, 5);
  bool differs = false;
  for (int i = 0; i < 16; ++i) differs = differs || (a2.next_u64() != c.next_u64());
  CHECK(differs);

  // uniform() stays in [0,1); normal() has sane moments over many draws.
  RngStream u(9, 1);
  double mean = 0, m2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double x = u.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    mean += x;
    m2 += x * x;
  }
  mean /= n;
  CHECK(std::fabs(mean - 0.5) < 0.005);
  CHECK(std::fabs(m2 / n - 1.0 / 3.0) < 0.005);

  RngStream g(11, 2);
  double gm = 0, gv = 0;
  for (int i = 0; i < n; ++i) {
    double x = g.normal();
    gm += x;
    gv += x * x;
  }
  gm /= n;
  gv = gv / n - gm * gm;
  CHECK(std::fabs(gm) < 0.01);
  CHECK(std::fabs(gv - 1.0) < 0.02);

  // fork() children are reproducible and distinct from the parent stream.
  RngStream parent(77, 1);
  RngStream f1 = parent.fork(4);
  RngStream f2 = parent.fork(4);
  CHECK(f1.next_u64() == f2.next_u64());
  RngStream f3 = parent.fork(5);
  CHECK(f1.next_u64() != f3.next_u64());
}
