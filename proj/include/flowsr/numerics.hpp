#pragma once

// Gradient entry points and optimizer steps on top of the autodiff graph.

#include <cmath>
#include <functional>
#include <string>

#include "flowsr/autodiff.hpp"
#include "flowsr/params.hpp"

namespace flowsr {

// Leaves created for each learnable parameter, addressable by path.
struct VarMap {
  std::map<std::string, ad::Var> vars;

  ad::Var at(const std::string& path) const {
    auto it = vars.find(path);
    if (it == vars.end()) fail_contract("loss function references unknown parameter: " + path);
    return it->second;
  }
};

template <class T>
using LossFn = std::function<ad::Var(ad::Graph<T>&, const VarMap&)>;

namespace detail {

template <class T>
VarMap make_leaves(ad::Graph<T>& g, const ParamStore<T>& params, bool requires_grad) {
  VarMap vm;
  for (const std::string& path : params.learnable_paths())
    vm.vars[path] = g.leaf(params.at(path), requires_grad);
  return vm;
}

template <class T>
void check_scalar_loss(const ad::Graph<T>& g, ad::Var loss) {
  if (g.value(loss).numel() != 1)
    fail_contract("loss must be scalar, got shape " + shape_str(g.shape(loss)));
}

template <class T>
void check_finite_loss(T loss_value, const ParamStore<T>& params) {
  if (std::isfinite(static_cast<double>(loss_value))) return;
  for (const std::string& path : params.learnable_paths())
    if (!params.at(path).all_finite())
      fail_numeric("non-finite loss; parameter '" + path + "' contains non-finite values");
  fail_numeric("non-finite loss with finite parameters (diverged forward pass)");
}

}  // namespace detail

// Loss value only, no tape.
template <class T>
T eval_loss(const LossFn<T>& f, const ParamStore<T>& params) {
  ad::Graph<T> g(/*recording=*/false);
  VarMap vm = detail::make_leaves(g, params, false);
  ad::Var loss = f(g, vm);
  detail::check_scalar_loss(g, loss);
  return g.value(loss)[0];
}

// Reverse-mode gradient of a scalar loss; one tensor per learnable path.
template <class T>
ParamStore<T> grad(const LossFn<T>& f, const ParamStore<T>& params, T* loss_out = nullptr) {
  ad::Graph<T> g(/*recording=*/true);
  VarMap vm = detail::make_leaves(g, params, true);
  ad::Var loss = f(g, vm);
  detail::check_scalar_loss(g, loss);
  T lv = g.value(loss)[0];
  detail::check_finite_loss(lv, params);
  g.backward(loss);
  if (loss_out) *loss_out = lv;
  ParamStore<T> out;
  for (const auto& [path, var] : vm.vars) out.set(path, g.grad(var));
  return out;
}

// ---------------------------------------------------------------------------
// Gradient checking against central finite differences
// ---------------------------------------------------------------------------

struct GradCheckReport {
  bool ok = true;
  double worst_rel = 0.0;
  std::string worst_path;
  std::size_t worst_index = 0;
  double worst_ad = 0.0;
  double worst_fd = 0.0;
  std::vector<std::string> failures;  // "path[i]: ad=... fd=... rel=..."

  std::string summary() const {
    if (ok) return "gradcheck ok (worst rel " + std::to_string(worst_rel) + ")";
    return "gradcheck FAILED at " + worst_path + "[" + std::to_string(worst_index) +
           "]: ad=" + std::to_string(worst_ad) + " fd=" + std::to_string(worst_fd) +
           " rel=" + std::to_string(worst_rel);
  }
};

// Every coordinate must satisfy |ad - fd| <= tol * max(1, |ad|, |fd|).
template <class T>
GradCheckReport gradcheck(const LossFn<T>& f, const ParamStore<T>& params, T eps, T tol) {
  if (!(eps > T(0) && static_cast<double>(eps) <= 1e-2))
    fail_contract("gradcheck eps must be in (0, 1e-2]");
  ParamStore<T> analytic = grad(f, params);
  GradCheckReport rep;
  for (const std::string& path : params.learnable_paths()) {
    const Tensor<T>& p = params.at(path);
    const Tensor<T>& ga = analytic.at(path);
    for (std::size_t i = 0; i < p.numel(); ++i) {
      ParamStore<T> shifted = params;  // shares tensors; replace one below
      Tensor<T> plus = p.clone();
      plus[i] += eps;
      shifted.set(path, std::move(plus));
      T f_plus = eval_loss(f, shifted);
      Tensor<T> minus = p.clone();
      minus[i] -= eps;
      shifted.set(path, std::move(minus));
      T f_minus = eval_loss(f, shifted);
      double fd = (static_cast<double>(f_plus) - static_cast<double>(f_minus)) /
                  (2.0 * static_cast<double>(eps));
      double av = static_cast<double>(ga[i]);
      double scale = std::max({1.0, std::fabs(av), std::fabs(fd)});
      double rel = std::fabs(av - fd) / scale;
      if (rel > rep.worst_rel) {
        rep.worst_rel = rel;
        rep.worst_path = path;
        rep.worst_index = i;
        rep.worst_ad = av;
        rep.worst_fd = fd;
      }
      if (rel > static_cast<double>(tol)) {
        rep.ok = false;
        if (rep.failures.size() < 32)
          rep.failures.push_back(path + "[" + std::to_string(i) + "]: ad=" +
                                 std::to_string(av) + " fd=" + std::to_string(fd) +
                                 " rel=" + std::to_string(rel));
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Optimizer steps (in place; caller owns the store during a step)
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void check_grad_shapes(const ParamStore<T>& params, const ParamStore<T>& grads) {
  for (const std::string& path : params.learnable_paths()) {
    if (!grads.has(path)) fail_contract("missing gradient for parameter: " + path);
    if (!grads.at(path).same_shape(params.at(path)))
      fail_contract("gradient shape mismatch for " + path + ": " +
                    shape_str(grads.at(path).shape()) + " vs " +
                    shape_str(params.at(path).shape()));
  }
}

}  // namespace detail

template <class T>
void sgd_step(ParamStore<T>& params, const ParamStore<T>& grads, T lr) {
  detail::check_grad_shapes(params, grads);
  for (const std::string& path : params.learnable_paths()) {
    Tensor<T>& p = params.at(path);
    kernels::K<T>::axpy(-lr, grads.at(path).data(), p.data(), p.numel());
  }
  params.bump_version();
}

template <class T>
struct AdamConfig {
  T lr = T(1e-3);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

// Moment state lives in the store under __opt__/adam_{m,v}/<path> plus a
// shared step counter, so checkpoints can resume mid-run.
template <class T>
void adam_step(ParamStore<T>& params, const ParamStore<T>& grads, const AdamConfig<T>& cfg) {
  detail::check_grad_shapes(params, grads);
  const std::string tpath = std::string(kOptPrefix) + "adam_t";
  if (!params.has(tpath)) params.set(tpath, Tensor<T>(Shape{1}, T(0)));
  Tensor<T>& tstate = params.at(tpath);
  tstate[0] += T(1);
  const double t = static_cast<double>(tstate[0]);
  const T bc1 = static_cast<T>(1.0 - std::pow(static_cast<double>(cfg.beta1), t));
  const T bc2 = static_cast<T>(1.0 - std::pow(static_cast<double>(cfg.beta2), t));
  for (const std::string& path : params.learnable_paths()) {
    const std::string mpath = std::string(kOptPrefix) + "adam_m/" + path;
    const std::string vpath = std::string(kOptPrefix) + "adam_v/" + path;
    if (!params.has(mpath)) params.set(mpath, Tensor<T>::zeros(params.at(path).shape()));
    if (!params.has(vpath)) params.set(vpath, Tensor<T>::zeros(params.at(path).shape()));
    Tensor<T>& p = params.at(path);
    Tensor<T>& m = params.at(mpath);
    Tensor<T>& v = params.at(vpath);
    const Tensor<T>& g = grads.at(path);
    for (std::size_t i = 0; i < p.numel(); ++i) {
      m[i] = cfg.beta1 * m[i] + (T(1) - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (T(1) - cfg.beta2) * g[i] * g[i];
      T mhat = m[i] / bc1;
      T vhat = v[i] / bc2;
      p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
  params.bump_version();
}

// Scales gradients in place so the global L2 norm is at most max_norm;
// returns the pre-clip norm. Parameter order is sorted, so the reduction
// order is fixed.
template <class T>
T clip_global_norm(ParamStore<T>& grads, T max_norm) {
  double total = 0.0;
  for (const std::string& path : grads.learnable_paths()) {
    const Tensor<T>& g = grads.at(path);
    total += static_cast<double>(kernels::K<T>::sqnorm(g.data(), g.numel()));
  }
  T norm = static_cast<T>(std::sqrt(total));
  if (norm > max_norm && norm > T(0)) {
    T s = max_norm / norm;
    for (const std::string& path : grads.learnable_paths()) {
      Tensor<T>& g = grads.at(path);
      kernels::K<T>::scale(s, g.data(), g.data(), g.numel());
    }
  }
  return norm;
}

}  // namespace flowsr
