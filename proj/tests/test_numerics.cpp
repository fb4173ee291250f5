#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "flowsr/numerics.hpp"

using namespace flowsr;

namespace {

template <class T>
ParamStore<T> single_param(const std::string& name, std::vector<T> v) {
  ParamStore<T> ps;
  const int n = static_cast<int>(v.size());
  ps.set(name, Tensor<T>(Shape{n}, std::move(v)));
  return ps;
}

}  // namespace

TEST_CASE("grad: sum of squares") {
  auto ps = single_param<float>("p", {1.0f, 2.0f});
  LossFn<float> loss = [](ad::Graph<float>& g, const VarMap& vm) {
    ad::Var p = vm.at("p");
    return g.sum_all(g.mul(p, p));
  };
  float lv = 0;
  ParamStore<float> gs = grad(loss, ps, &lv);
  CHECK(lv == doctest::Approx(5.0f));
  CHECK(gs.at("p")[0] == doctest::Approx(2.0f));
  CHECK(gs.at("p")[1] == doctest::Approx(4.0f));
}

TEST_CASE("grad: constant loss gives zero gradients") {
  auto ps = single_param<float>("p", {3.0f, -1.0f});
  LossFn<float> loss = [](ad::Graph<float>& g, const VarMap&) {
    return g.constant(Tensor<float>(Shape{1}, 7.0f));
  };
  ParamStore<float> gs = grad(loss, ps);
  CHECK(gs.at("p")[0] == 0.0f);
  CHECK(gs.at("p")[1] == 0.0f);
}

TEST_CASE("grad: affine-coupling style term exp(0.5 p) * p") {
  // d/dp [p * exp(0.5 p)] at p=1 is e^0.5 * 1.5 = 2.4730819...
  auto ps = single_param<double>("p", {1.0});
  LossFn<double> loss = [](ad::Graph<double>& g, const VarMap& vm) {
    ad::Var p = vm.at("p");
    return g.sum_all(g.mul(g.exp(g.mul_scalar(p, 0.5)), p));
  };
  ParamStore<double> gs = grad(loss, ps);
  CHECK(gs.at("p")[0] == doctest::Approx(2.4730819060501923).epsilon(1e-12));
}

TEST_CASE("grad: non-scalar loss is a contract violation") {
  auto ps = single_param<float>("p", {1.0f, 2.0f});
  LossFn<float> loss = [](ad::Graph<float>& g, const VarMap& vm) {
    return g.mul(vm.at("p"), vm.at("p"));
  };
  CHECK_THROWS_AS(grad(loss, ps), Error);
}

TEST_CASE("grad: non-finite loss names the offending parameter") {
  auto ps = single_param<float>("weights/bad",
                                {std::numeric_limits<float>::infinity()});
  LossFn<float> loss = [](ad::Graph<float>& g, const VarMap& vm) {
    return g.sum_all(vm.at("weights/bad"));
  };
  try {
    grad(loss, ps);
    FAIL("expected numeric error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::numeric);
    CHECK(std::string(e.what()).find("weights/bad") != std::string::npos);
  }
}

TEST_CASE("gradcheck: quadratic passes at tight tolerance") {
  auto ps = single_param<double>("p", {1.0, 2.0});
  LossFn<double> loss = [](ad::Graph<double>& g, const VarMap& vm) {
    ad::Var p = vm.at("p");
    return g.sum_all(g.mul(p, p));
  };
  auto rep = gradcheck<double>(loss, ps, 1e-4, 1e-4);
  CHECK(rep.ok);
}

TEST_CASE("gradcheck: corrupted value path is detected and reported") {
  auto ps = single_param<double>("p", {1.0, 2.0});
  // Value path lies when the graph is not recording, which is exactly what a
  // wrong derivative rule looks like to the checker.
  LossFn<double> loss = [](ad::Graph<double>& g, const VarMap& vm) {
    ad::Var p = vm.at("p");
    ad::Var l = g.sum_all(g.mul(p, p));
    if (!g.recording()) l = g.mul_scalar(l, 1.05);
    return l;
  };
  auto rep = gradcheck<double>(loss, ps, 1e-4, 1e-4);
  CHECK(!rep.ok);
  CHECK(rep.worst_path == "p");
  CHECK(!rep.failures.empty());
}

// Every differentiable primitive against central differences. Float path,
// randomized inputs; eps sits at the top of the allowed range so the f32
// evaluation noise stays well under the 1e-3 gate.
TEST_CASE("gradcheck: primitive coverage in float at 1e-3") {
  RngStream rng(2024, 1);
  const float eps = 1e-2f, tol = 1e-3f;

  auto check = [&](const char* name, const ParamStore<float>& ps, const LossFn<float>& f) {
    auto rep = gradcheck<float>(f, ps, eps, tol);
    INFO(name << ": " << rep.summary());
    CHECK(rep.ok);
  };

  // Mixing weights make reductions sensitive to every coordinate.
  auto mix = [&](ad::Graph<float>& g, ad::Var x, std::uint64_t salt) {
    RngStream r(99, salt);
    Tensor<float> w = Tensor<float>::randn(g.shape(x), r);
    return g.sum_all(g.mul(x, g.constant(w)));
  };

  {
    ParamStore<float> ps;
    ps.set("a", Tensor<float>::randn(Shape{6}, rng));
    ps.set("b", Tensor<float>::randn(Shape{6}, rng));
    check("add", ps, [&](ad::Graph<float>& g, const VarMap& vm) {
      return mix(g, g.add(vm.at("a"), vm.at("b")), 1);
    });
    check("sub", ps, [&](ad::Graph<float>& g, const VarMap& vm) {
      return mix(g, g.sub(vm.at("a"), vm.at("b")), 2);
    });
    check("mul", ps, [&](ad::Graph<float>& g, const VarMap& vm) {
      return mix(g, g.mul(vm.at("a"), vm.at("b")), 3);
    });
  }
  {
    ParamStore<float> ps;
    ps.set("a", Tensor<float>::randn(Shape{5}, rng));
    check("scalar ops", ps, [&](ad::Graph<float>& g, const VarMap& vm) {
      return mix(g, g.add_scalar(g.mul_scalar(vm.at("a"), 1.7f), -0.3f), 4);
    });
    check("exp", ps, [&](ad::Graph<float>& g, const VarMap& vm) {
      return mix(g, g.exp(vm.at("a")), 5);
    });
    check("tanh", ps, [&](ad::Graph<float>& g, const VarMap& vm) {
      return mix(g, g.tanh(vm.at("a")), 6);
    });
    check("silu", ps, [&](ad::Graph<float>& g, const VarMap& vm) {
      return mix(g, g.silu(vm.at("a")), 7);
    });
    check("log of positive", ps, [&](ad::Graph<float>& g, const VarMap& vm) {
      return mix(g, g.log(g.add_scalar(g.exp(vm.at("a")), 0.5f)), 8);
    });
    check("sum_all", ps, [&](ad::Graph<float>& g, const VarMap& vm) {
      return g.sum_all(vm.at("a"));
    });
  }
  {
    ParamStore<float> ps;
    ps.set("x", Tensor<float>::randn(Shape{3, 4}, rng));
    check("sum_per_sample", ps, [&](ad::Graph<float>& g, const VarMap& vm) {
      return mix(g, g.sum_per_sample(vm.at("x")), 9);
    });
    check("sqnorm_per_sample", ps, [&](ad::Graph<float>& g, const VarMap& vm) {
      return mix(g, g.sqnorm_per_sample(vm.at("x")), 10);
    });
    check("reshape", ps, [&](ad::Graph<float>& g, const VarMap& vm) {
      return mix(g, g.reshape(vm.at("x"), Shape{4, 3}), 11);
    });
  }
  {
    ParamStore<float> ps;
    ps.set("x", Tensor<float>::randn(Shape{3, 5}, rng));
    ps.set("w", Tensor<float>::randn(Shape{4, 5}, rng));
    ps.set("b", Tensor<float>::randn(Shape{4}, rng));
    check("matmul_nt + add_bias_rows", ps, [&](ad::Graph<float>& g, const VarMap& vm) {
      return mix(g, g.add_bias_rows(g.matmul_nt(vm.at("x"), vm.at("w")), vm.at("b")), 12);
    });
  }
  {
    ParamStore<float> ps;
    ps.set("x", Tensor<float>::randn(Shape{2, 3, 4, 4}, rng));
    ps.set("w", Tensor<float>::randn(Shape{5, 3, 3, 3}, rng, 0.5f));
    ps.set("cb", Tensor<float>::randn(Shape{5}, rng));
    check("conv2d + add_bias_channels", ps, [&](ad::Graph<float>& g, const VarMap& vm) {
      return mix(g, g.add_bias_channels(g.conv2d(vm.at("x"), vm.at("w")), vm.at("cb")), 13);
    });
  }
  {
    ParamStore<float> ps;
    ps.set("x", Tensor<float>::randn(Shape{2, 3, 4, 4}, rng));
    ps.set("s", Tensor<float>::randn(Shape{2, 3}, rng));
    check("add_channel_offsets", ps, [&](ad::Graph<float>& g, const VarMap& vm) {
      return mix(g, g.add_channel_offsets(vm.at("x"), vm.at("s")), 14);
    });
    check("avg_pool2", ps, [&](ad::Graph<float>& g, const VarMap& vm) {
      return mix(g, g.avg_pool2(vm.at("x")), 15);
    });
    check("upsample_nearest2", ps, [&](ad::Graph<float>& g, const VarMap& vm) {
      return mix(g, g.upsample_nearest2(vm.at("x")), 16);
    });
    check("squeeze2", ps, [&](ad::Graph<float>& g, const VarMap& vm) {
      return mix(g, g.squeeze2(vm.at("x"), 2), 17);
    });
    check("channel gather/merge", ps, [&](ad::Graph<float>& g, const VarMap& vm) {
      ad::Var u = g.channel_gather(vm.at("x"), {0, 2});
      ad::Var v = g.channel_gather(vm.at("x"), {1});
      return mix(g, g.channel_merge(u, v, {0, 2}, {1}), 18);
    });
    check("slice/concat", ps, [&](ad::Graph<float>& g, const VarMap& vm) {
      ad::Var a = g.slice_channels(vm.at("x"), 0, 1);
      ad::Var b = g.slice_channels(vm.at("x"), 1, 2);
      return mix(g, g.concat_channels(b, a), 19);
    });
  }
  {
    ParamStore<float> ps;
    ps.set("x", Tensor<float>::randn(Shape{2, 8, 3, 3}, rng));
    check("unsqueeze2", ps, [&](ad::Graph<float>& g, const VarMap& vm) {
      return mix(g, g.unsqueeze2(vm.at("x"), 2), 20);
    });
  }
}

TEST_CASE("structural ops roundtrip exactly") {
  RngStream rng(5, 5);
  Tensor<float> x = Tensor<float>::randn(Shape{2, 3, 8, 8}, rng);
  ad::Graph<float> g(false);
  ad::Var vx = g.constant(x);
  ad::Var rt = g.unsqueeze2(g.squeeze2(vx, 4), 4);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(g.value(rt)[i] == x[i]);

  // squeeze pixel-to-channel order: channel c*s*s + dy*s + dx.
  Tensor<float> seq(Shape{1, 1, 4, 4});
  for (int i = 0; i < 16; ++i) seq[static_cast<std::size_t>(i)] = static_cast<float>(i);
  ad::Var sq = g.squeeze2(g.constant(seq), 2);
  CHECK(g.shape(sq) == Shape{1, 4, 2, 2});
  // channel 0 holds (even row, even col) pixels: 0, 2, 8, 10
  CHECK(g.value(sq)[0] == 0.0f);
  CHECK(g.value(sq)[1] == 2.0f);
  CHECK(g.value(sq)[2] == 8.0f);
  CHECK(g.value(sq)[3] == 10.0f);
  // channel 1 = (even row, odd col)
  CHECK(g.value(sq)[4] == 1.0f);

  ad::Var u = g.channel_gather(vx, {0, 2});
  ad::Var v = g.channel_gather(vx, {1});
  ad::Var merged = g.channel_merge(u, v, {0, 2}, {1});
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(g.value(merged)[i] == x[i]);
}

TEST_CASE("sgd step") {
  auto ps = single_param<float>("p", {1.0f});
  auto gs = single_param<float>("p", {2.0f});
  sgd_step(ps, gs, 0.1f);
  CHECK(ps.at("p")[0] == doctest::Approx(0.8f));

  // zero gradient leaves parameters unchanged
  auto zs = single_param<float>("p", {0.0f});
  sgd_step(ps, zs, 0.1f);
  CHECK(ps.at("p")[0] == doctest::Approx(0.8f));
}

TEST_CASE("adam first step with defaults moves by about -lr") {
  auto ps = single_param<float>("p", {0.0f});
  auto gs = single_param<float>("p", {1.0f});
  AdamConfig<float> cfg;  // lr 1e-3, beta1 0.9, beta2 0.999, eps 1e-8
  adam_step(ps, gs, cfg);
  CHECK(ps.at("p")[0] == doctest::Approx(-1e-3f).epsilon(1e-4));
  CHECK(ps.has("__opt__/adam_m/p"));
  CHECK(ps.has("__opt__/adam_v/p"));
  // reserved state is not learnable
  CHECK(ps.learnable_paths() == std::vector<std::string>{"p"});
}

TEST_CASE("optimizer rejects shape mismatches") {
  auto ps = single_param<float>("p", {0.0f, 1.0f});
  auto gs = single_param<float>("p", {1.0f});
  CHECK_THROWS_AS(sgd_step(ps, gs, 0.1f), Error);
  AdamConfig<float> cfg;
  CHECK_THROWS_AS(adam_step(ps, gs, cfg), Error);
}

TEST_CASE("global norm clipping") {
  ParamStore<float> gs;
  gs.set("a", Tensor<float>(Shape{2}, {3.0f, 0.0f}));
  gs.set("b", Tensor<float>(Shape{1}, {4.0f}));
  float norm = clip_global_norm(gs, 1.0f);
  CHECK(norm == doctest::Approx(5.0f));
  CHECK(gs.at("a")[0] == doctest::Approx(0.6f));
  CHECK(gs.at("b")[0] == doctest::Approx(0.8f));
  // under the cap: untouched
  float n2 = clip_global_norm(gs, 10.0f);
  CHECK(n2 == doctest::Approx(1.0f));
  CHECK(gs.at("b")[0] == doctest::Approx(0.8f));
}
