#pragma once

// Eager reverse-mode autodiff over Tensor<T>. Ops execute immediately and,
// when the graph is recording, push a backward closure onto the tape.
// backward() walks the tape in reverse creation order (a valid topological
// order, since ops only reference earlier nodes).
//
// The primitive set is exactly what the flow and diffusion models need:
// elementwise arithmetic, exp/log/tanh/silu, reductions, dense matmul,
// conv2d (stride 1, same padding), pooling/upsampling, channel
// gather/merge/slice/concat, space-to-depth, reshape.

#include <cstring>
#include <functional>
#include <utility>
#include <vector>

#include "flowsr/kernels.hpp"
#include "flowsr/tensor.hpp"

namespace flowsr::ad {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

template <class T>
class Graph {
 public:
  explicit Graph(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  int size() const { return static_cast<int>(nodes_.size()); }

  Var leaf(Tensor<T> v, bool requires_grad) {
    Node n;
    n.value = std::move(v);
    n.needs = requires_grad;
    nodes_.push_back(std::move(n));
    grads_.emplace_back();
    return Var{size() - 1};
  }

  Var constant(Tensor<T> v) { return leaf(std::move(v), false); }

  const Tensor<T>& value(Var v) const { return nodes_.at(check(v)).value; }
  const Shape& shape(Var v) const { return value(v).shape(); }

  // Gradient accumulated at a node after backward(); zeros if untouched.
  Tensor<T> grad(Var v) const {
    const auto& g = grads_.at(check(v));
    return g.defined() ? g : Tensor<T>::zeros(shape(v));
  }

  // ------------------------------------------------------------------
  // Elementwise
  // ------------------------------------------------------------------

  Var add(Var a, Var b) {
    same_shape(a, b, "add");
    Tensor<T> out(shape(a));
    km::add(value(a).data(), value(b).data(), out.data(), out.numel());
    return record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor<T>& go) {
      g.accum(a, go);
      g.accum(b, go);
    });
  }

  Var sub(Var a, Var b) {
    same_shape(a, b, "sub");
    Tensor<T> out(shape(a));
    km::sub(value(a).data(), value(b).data(), out.data(), out.numel());
    return record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor<T>& go) {
      g.accum(a, go);
      g.accum_scaled(b, go, T(-1));
    });
  }

  Var mul(Var a, Var b) {
    same_shape(a, b, "mul");
    Tensor<T> out(shape(a));
    km::mul(value(a).data(), value(b).data(), out.data(), out.numel());
    return record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor<T>& go) {
      if (g.needs(a)) {
        Tensor<T> da(go.shape());
        km::mul(go.data(), g.value(b).data(), da.data(), da.numel());
        g.accum_move(a, std::move(da));
      }
      if (g.needs(b)) {
        Tensor<T> db(go.shape());
        km::mul(go.data(), g.value(a).data(), db.data(), db.numel());
        g.accum_move(b, std::move(db));
      }
    });
  }

  Var add_scalar(Var a, T c) {
    Tensor<T> out = value(a).clone();
    T* p = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) p[i] += c;
    return record(std::move(out), {a},
                  [a](Graph& g, const Tensor<T>& go) { g.accum(a, go); });
  }

  Var mul_scalar(Var a, T c) {
    Tensor<T> out(shape(a));
    km::scale(c, value(a).data(), out.data(), out.numel());
    return record(std::move(out), {a}, [a, c](Graph& g, const Tensor<T>& go) {
      g.accum_scaled(a, go, c);
    });
  }

  Var neg(Var a) { return mul_scalar(a, T(-1)); }

  Var exp(Var a) {
    Tensor<T> out(shape(a));
    const T* x = value(a).data();
    T* p = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) p[i] = std::exp(x[i]);
    int self = size();
    return record(std::move(out), {a}, [a, self](Graph& g, const Tensor<T>& go) {
      Tensor<T> da(go.shape());
      km::mul(go.data(), g.nodes_[self].value.data(), da.data(), da.numel());
      g.accum_move(a, std::move(da));
    });
  }

  Var log(Var a) {
    Tensor<T> out(shape(a));
    const T* x = value(a).data();
    T* p = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) p[i] = std::log(x[i]);
    return record(std::move(out), {a}, [a](Graph& g, const Tensor<T>& go) {
      const T* x2 = g.value(a).data();
      Tensor<T> da(go.shape());
      T* d = da.data();
      const T* gp = go.data();
      for (std::size_t i = 0; i < da.numel(); ++i) d[i] = gp[i] / x2[i];
      g.accum_move(a, std::move(da));
    });
  }

  Var tanh(Var a) {
    Tensor<T> out(shape(a));
    const T* x = value(a).data();
    T* p = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) p[i] = std::tanh(x[i]);
    int self = size();
    return record(std::move(out), {a}, [a, self](Graph& g, const Tensor<T>& go) {
      const T* y = g.nodes_[self].value.data();
      const T* gp = go.data();
      Tensor<T> da(go.shape());
      T* d = da.data();
      for (std::size_t i = 0; i < da.numel(); ++i) d[i] = gp[i] * (T(1) - y[i] * y[i]);
      g.accum_move(a, std::move(da));
    });
  }

  Var silu(Var a) {
    Tensor<T> out(shape(a));
    const T* x = value(a).data();
    T* p = out.data();
    for (std::size_t i = 0; i < out.numel(); ++i) {
      T s = T(1) / (T(1) + std::exp(-x[i]));
      p[i] = x[i] * s;
    }
    return record(std::move(out), {a}, [a](Graph& g, const Tensor<T>& go) {
      const T* x2 = g.value(a).data();
      const T* gp = go.data();
      Tensor<T> da(go.shape());
      T* d = da.data();
      for (std::size_t i = 0; i < da.numel(); ++i) {
        T s = T(1) / (T(1) + std::exp(-x2[i]));
        d[i] = gp[i] * s * (T(1) + x2[i] * (T(1) - s));
      }
      g.accum_move(a, std::move(da));
    });
  }

  // ------------------------------------------------------------------
  // Reductions
  // ------------------------------------------------------------------

  Var sum_all(Var a) {
    Tensor<T> out(Shape{1});
    out[0] = km::sum(value(a).data(), value(a).numel());
    return record(std::move(out), {a}, [a](Graph& g, const Tensor<T>& go) {
      Tensor<T> da(g.shape(a), go[0]);
      g.accum_move(a, std::move(da));
    });
  }

  // [N, ...] -> [N], summing all trailing dims per sample.
  Var sum_per_sample(Var a) {
    const Shape& s = shape(a);
    if (s.empty()) fail_contract("sum_per_sample needs a batch dim");
    int N = s[0];
    std::size_t R = value(a).numel() / static_cast<std::size_t>(N);
    Tensor<T> out(Shape{N});
    for (int n = 0; n < N; ++n)
      out[static_cast<std::size_t>(n)] = km::sum(value(a).data() + n * R, R);
    return record(std::move(out), {a}, [a, N, R](Graph& g, const Tensor<T>& go) {
      Tensor<T> da(g.shape(a));
      T* d = da.data();
      for (int n = 0; n < N; ++n) {
        T gn = go[static_cast<std::size_t>(n)];
        for (std::size_t i = 0; i < R; ++i) d[n * R + i] = gn;
      }
      g.accum_move(a, std::move(da));
    });
  }

  // [N, ...] -> [N], squared L2 norm of each sample.
  Var sqnorm_per_sample(Var a) {
    const Shape& s = shape(a);
    if (s.empty()) fail_contract("sqnorm_per_sample needs a batch dim");
    int N = s[0];
    std::size_t R = value(a).numel() / static_cast<std::size_t>(N);
    Tensor<T> out(Shape{N});
    for (int n = 0; n < N; ++n)
      out[static_cast<std::size_t>(n)] = km::sqnorm(value(a).data() + n * R, R);
    return record(std::move(out), {a}, [a, N, R](Graph& g, const Tensor<T>& go) {
      const T* x = g.value(a).data();
      Tensor<T> da(g.shape(a));
      T* d = da.data();
      for (int n = 0; n < N; ++n) {
        T gn = T(2) * go[static_cast<std::size_t>(n)];
        for (std::size_t i = 0; i < R; ++i) d[n * R + i] = gn * x[n * R + i];
      }
      g.accum_move(a, std::move(da));
    });
  }

  // ------------------------------------------------------------------
  // Dense layers
  // ------------------------------------------------------------------

  // x [N,in] times w [out,in] transposed -> [N,out].
  Var matmul_nt(Var x, Var w) {
    const Shape& xs = shape(x);
    const Shape& ws = shape(w);
    if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[1])
      fail_contract("matmul_nt shape mismatch: x " + shape_str(xs) + " w " + shape_str(ws));
    int N = xs[0], in = xs[1], out_f = ws[0];
    Tensor<T> out(Shape{N, out_f});
    km::gemm_nt(N, out_f, in, value(x).data(), value(w).data(), out.data(), false);
    return record(std::move(out), {x, w},
                  [x, w, N, in, out_f](Graph& g, const Tensor<T>& go) {
      if (g.needs(x)) {
        Tensor<T> dx(Shape{N, in});
        km::gemm_nn(N, in, out_f, go.data(), g.value(w).data(), dx.data(), false);
        g.accum_move(x, std::move(dx));
      }
      if (g.needs(w)) {
        Tensor<T> dw(Shape{out_f, in});
        km::gemm_tn(out_f, in, N, go.data(), g.value(x).data(), dw.data(), false);
        g.accum_move(w, std::move(dw));
      }
    });
  }

  // x [N,F] + b [F]
  Var add_bias_rows(Var x, Var b) {
    const Shape& xs = shape(x);
    const Shape& bs = shape(b);
    if (xs.size() != 2 || bs.size() != 1 || bs[0] != xs[1])
      fail_contract("add_bias_rows shape mismatch");
    int N = xs[0], F = xs[1];
    Tensor<T> out(xs);
    const T* xp = value(x).data();
    const T* bp = value(b).data();
    T* op = out.data();
    for (int n = 0; n < N; ++n)
      km::add(xp + static_cast<std::size_t>(n) * F, bp, op + static_cast<std::size_t>(n) * F,
              static_cast<std::size_t>(F));
    return record(std::move(out), {x, b}, [x, b, N, F](Graph& g, const Tensor<T>& go) {
      g.accum(x, go);
      if (g.needs(b)) {
        Tensor<T> db(Shape{F});
        for (int n = 0; n < N; ++n)
          km::add(db.data(), go.data() + static_cast<std::size_t>(n) * F, db.data(),
                  static_cast<std::size_t>(F));
        g.accum_move(b, std::move(db));
      }
    });
  }

  // ------------------------------------------------------------------
  // Channel-indexed ops; tensors treated as [N, C, R] with R the product
  // of trailing dims (R = 1 for plain [N, C] matrices).
  // ------------------------------------------------------------------

  // x [N,C,*] + b [C]
  Var add_bias_channels(Var x, Var b) {
    int N, C;
    std::size_t R;
    ncr(shape(x), N, C, R);
    if (shape(b) != Shape{C}) fail_contract("add_bias_channels: bias must be [C]");
    Tensor<T> out = value(x).clone();
    T* op = out.data();
    const T* bp = value(b).data();
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        T bc = bp[c];
        T* row = op + (static_cast<std::size_t>(n) * C + c) * R;
        for (std::size_t i = 0; i < R; ++i) row[i] += bc;
      }
    return record(std::move(out), {x, b}, [x, b, N, C, R](Graph& g, const Tensor<T>& go) {
      g.accum(x, go);
      if (g.needs(b)) {
        Tensor<T> db(Shape{C});
        const T* gp = go.data();
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c)
            db[static_cast<std::size_t>(c)] +=
                km::sum(gp + (static_cast<std::size_t>(n) * C + c) * R, R);
        g.accum_move(b, std::move(db));
      }
    });
  }

  // x [N,C,*] + s [N,C] broadcast over trailing dims (time-embedding inject).
  Var add_channel_offsets(Var x, Var s) {
    int N, C;
    std::size_t R;
    ncr(shape(x), N, C, R);
    if (shape(s) != Shape{N, C}) fail_contract("add_channel_offsets: offsets must be [N,C]");
    Tensor<T> out = value(x).clone();
    T* op = out.data();
    const T* sp = value(s).data();
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        T sc = sp[static_cast<std::size_t>(n) * C + c];
        T* row = op + (static_cast<std::size_t>(n) * C + c) * R;
        for (std::size_t i = 0; i < R; ++i) row[i] += sc;
      }
    return record(std::move(out), {x, s}, [x, s, N, C, R](Graph& g, const Tensor<T>& go) {
      g.accum(x, go);
      if (g.needs(s)) {
        Tensor<T> ds(Shape{N, C});
        const T* gp = go.data();
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c)
            ds[static_cast<std::size_t>(n) * C + c] =
                km::sum(gp + (static_cast<std::size_t>(n) * C + c) * R, R);
        g.accum_move(s, std::move(ds));
      }
    });
  }

  Var channel_gather(Var x, std::vector<int> idx) {
    int N, C;
    std::size_t R;
    ncr(shape(x), N, C, R);
    for (int c : idx)
      if (c < 0 || c >= C) fail_contract("channel_gather: index out of range");
    int Co = static_cast<int>(idx.size());
    Shape os = shape(x);
    os[1] = Co;
    Tensor<T> out(os);
    const T* xp = value(x).data();
    T* op = out.data();
    for (int n = 0; n < N; ++n)
      for (int k = 0; k < Co; ++k)
        std::memcpy(op + (static_cast<std::size_t>(n) * Co + k) * R,
                    xp + (static_cast<std::size_t>(n) * C + idx[k]) * R, R * sizeof(T));
    return record(std::move(out), {x},
                  [x, idx = std::move(idx), N, C, R](Graph& g, const Tensor<T>& go) {
      Tensor<T> dx(g.shape(x));
      T* d = dx.data();
      const T* gp = go.data();
      int Co2 = static_cast<int>(idx.size());
      for (int n = 0; n < N; ++n)
        for (int k = 0; k < Co2; ++k)
          km::add(d + (static_cast<std::size_t>(n) * C + idx[k]) * R,
                  gp + (static_cast<std::size_t>(n) * Co2 + k) * R,
                  d + (static_cast<std::size_t>(n) * C + idx[k]) * R, R);
      g.accum_move(x, std::move(dx));
    });
  }

  // Inverse of two gathers: place u's channels at idx_u and v's at idx_v.
  Var channel_merge(Var u, Var v, std::vector<int> idx_u, std::vector<int> idx_v) {
    int N, Cu, Cv;
    std::size_t R, Rv;
    ncr(shape(u), N, Cu, R);
    int Nv;
    ncr(shape(v), Nv, Cv, Rv);
    if (N != Nv || R != Rv) fail_contract("channel_merge: incompatible operands");
    if (static_cast<int>(idx_u.size()) != Cu || static_cast<int>(idx_v.size()) != Cv)
      fail_contract("channel_merge: index count mismatch");
    int C = Cu + Cv;
    Shape os = shape(u);
    os[1] = C;
    Tensor<T> out(os);
    T* op = out.data();
    const T* up = value(u).data();
    const T* vp = value(v).data();
    for (int n = 0; n < N; ++n) {
      for (int k = 0; k < Cu; ++k)
        std::memcpy(op + (static_cast<std::size_t>(n) * C + idx_u[k]) * R,
                    up + (static_cast<std::size_t>(n) * Cu + k) * R, R * sizeof(T));
      for (int k = 0; k < Cv; ++k)
        std::memcpy(op + (static_cast<std::size_t>(n) * C + idx_v[k]) * R,
                    vp + (static_cast<std::size_t>(n) * Cv + k) * R, R * sizeof(T));
    }
    return record(std::move(out), {u, v},
                  [u, v, iu = std::move(idx_u), iv = std::move(idx_v), N, C,
                   R](Graph& g, const Tensor<T>& go) {
      const T* gp = go.data();
      if (g.needs(u)) {
        int Cu2 = static_cast<int>(iu.size());
        Tensor<T> du(g.shape(u));
        for (int n = 0; n < N; ++n)
          for (int k = 0; k < Cu2; ++k)
            std::memcpy(du.data() + (static_cast<std::size_t>(n) * Cu2 + k) * R,
                        gp + (static_cast<std::size_t>(n) * C + iu[k]) * R, R * sizeof(T));
        g.accum_move(u, std::move(du));
      }
      if (g.needs(v)) {
        int Cv2 = static_cast<int>(iv.size());
        Tensor<T> dv(g.shape(v));
        for (int n = 0; n < N; ++n)
          for (int k = 0; k < Cv2; ++k)
            std::memcpy(dv.data() + (static_cast<std::size_t>(n) * Cv2 + k) * R,
                        gp + (static_cast<std::size_t>(n) * C + iv[k]) * R, R * sizeof(T));
        g.accum_move(v, std::move(dv));
      }
    });
  }

  Var slice_channels(Var x, int c0, int len) {
    int N, C;
    std::size_t R;
    ncr(shape(x), N, C, R);
    if (c0 < 0 || len <= 0 || c0 + len > C) fail_contract("slice_channels out of range");
    std::vector<int> idx(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) idx[static_cast<std::size_t>(i)] = c0 + i;
    return channel_gather(x, std::move(idx));
  }

  Var concat_channels(Var a, Var b) {
    int N, Ca, Cb;
    std::size_t R, Rb;
    ncr(shape(a), N, Ca, R);
    int Nb;
    ncr(shape(b), Nb, Cb, Rb);
    if (N != Nb || R != Rb) fail_contract("concat_channels: incompatible operands");
    std::vector<int> iu(static_cast<std::size_t>(Ca)), iv(static_cast<std::size_t>(Cb));
    for (int i = 0; i < Ca; ++i) iu[static_cast<std::size_t>(i)] = i;
    for (int i = 0; i < Cb; ++i) iv[static_cast<std::size_t>(i)] = Ca + i;
    return channel_merge(a, b, std::move(iu), std::move(iv));
  }

  // ------------------------------------------------------------------
  // Spatial ops (NCHW)
  // ------------------------------------------------------------------

  // Space-to-depth: [N,C,H,W] -> [N,C*s*s,H/s,W/s]; output channel
  // c*s*s + dy*s + dx holds input pixel (y*s+dy, x*s+dx) of channel c.
  Var squeeze2(Var x, int s) {
    const Shape& xs = shape(x);
    if (xs.size() != 4) fail_contract("squeeze2 expects NCHW");
    int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    if (s < 1 || H % s || W % s) fail_contract("squeeze2: spatial dims not divisible by factor");
    if (s == 1) return x;
    int h = H / s, w = W / s;
    Tensor<T> out(Shape{N, C * s * s, h, w});
    squeeze_copy(value(x).data(), out.data(), N, C, H, W, s, false);
    return record(std::move(out), {x}, [x, N, C, H, W, s](Graph& g, const Tensor<T>& go) {
      Tensor<T> dx(g.shape(x));
      squeeze_copy(dx.data(), const_cast<T*>(go.data()), N, C, H, W, s, true);
      g.accum_move(x, std::move(dx));
    });
  }

  Var unsqueeze2(Var x, int s) {
    const Shape& xs = shape(x);
    if (xs.size() != 4) fail_contract("unsqueeze2 expects NCHW");
    int N = xs[0], Cs = xs[1], h = xs[2], w = xs[3];
    if (s < 1 || Cs % (s * s)) fail_contract("unsqueeze2: channels not divisible by factor^2");
    if (s == 1) return x;
    int C = Cs / (s * s), H = h * s, W = w * s;
    Tensor<T> out(Shape{N, C, H, W});
    squeeze_copy(out.data(), const_cast<T*>(value(x).data()), N, C, H, W, s, true);
    return record(std::move(out), {x}, [x, N, C, H, W, s](Graph& g, const Tensor<T>& go) {
      Tensor<T> dx(g.shape(x));
      squeeze_copy(go.data(), dx.data(), N, C, H, W, s, false);
      g.accum_move(x, std::move(dx));
    });
  }

  Var avg_pool2(Var x) {
    const Shape& xs = shape(x);
    if (xs.size() != 4 || xs[2] % 2 || xs[3] % 2) fail_contract("avg_pool2 expects even NCHW");
    int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    int h = H / 2, w = W / 2;
    Tensor<T> out(Shape{N, C, h, w});
    const T* xp = value(x).data();
    T* op = out.data();
    for (int nc = 0; nc < N * C; ++nc) {
      const T* in = xp + static_cast<std::size_t>(nc) * H * W;
      T* o = op + static_cast<std::size_t>(nc) * h * w;
      for (int y = 0; y < h; ++y)
        for (int xw = 0; xw < w; ++xw)
          o[y * w + xw] = (in[(2 * y) * W + 2 * xw] + in[(2 * y) * W + 2 * xw + 1] +
                           in[(2 * y + 1) * W + 2 * xw] + in[(2 * y + 1) * W + 2 * xw + 1]) *
                          T(0.25);
    }
    return record(std::move(out), {x}, [x, N, C, H, W](Graph& g, const Tensor<T>& go) {
      int h2 = H / 2, w2 = W / 2;
      Tensor<T> dx(g.shape(x));
      T* d = dx.data();
      const T* gp = go.data();
      for (int nc = 0; nc < N * C; ++nc) {
        T* dxp = d + static_cast<std::size_t>(nc) * H * W;
        const T* gq = gp + static_cast<std::size_t>(nc) * h2 * w2;
        for (int y = 0; y < h2; ++y)
          for (int xw = 0; xw < w2; ++xw) {
            T v = gq[y * w2 + xw] * T(0.25);
            dxp[(2 * y) * W + 2 * xw] = v;
            dxp[(2 * y) * W + 2 * xw + 1] = v;
            dxp[(2 * y + 1) * W + 2 * xw] = v;
            dxp[(2 * y + 1) * W + 2 * xw + 1] = v;
          }
      }
      g.accum_move(x, std::move(dx));
    });
  }

  Var upsample_nearest2(Var x) {
    const Shape& xs = shape(x);
    if (xs.size() != 4) fail_contract("upsample_nearest2 expects NCHW");
    int N = xs[0], C = xs[1], h = xs[2], w = xs[3];
    int H = h * 2, W = w * 2;
    Tensor<T> out(Shape{N, C, H, W});
    const T* xp = value(x).data();
    T* op = out.data();
    for (int nc = 0; nc < N * C; ++nc) {
      const T* in = xp + static_cast<std::size_t>(nc) * h * w;
      T* o = op + static_cast<std::size_t>(nc) * H * W;
      for (int y = 0; y < h; ++y)
        for (int xw = 0; xw < w; ++xw) {
          T v = in[y * w + xw];
          o[(2 * y) * W + 2 * xw] = v;
          o[(2 * y) * W + 2 * xw + 1] = v;
          o[(2 * y + 1) * W + 2 * xw] = v;
          o[(2 * y + 1) * W + 2 * xw + 1] = v;
        }
    }
    return record(std::move(out), {x}, [x, N, C, h, w](Graph& g, const Tensor<T>& go) {
      int W2 = w * 2;
      Tensor<T> dx(g.shape(x));
      T* d = dx.data();
      const T* gp = go.data();
      for (int nc = 0; nc < N * C; ++nc) {
        T* dxp = d + static_cast<std::size_t>(nc) * h * w;
        const T* gq = gp + static_cast<std::size_t>(nc) * h * w * 4;
        for (int y = 0; y < h; ++y)
          for (int xw = 0; xw < w; ++xw)
            dxp[y * w + xw] = gq[(2 * y) * W2 + 2 * xw] + gq[(2 * y) * W2 + 2 * xw + 1] +
                              gq[(2 * y + 1) * W2 + 2 * xw] + gq[(2 * y + 1) * W2 + 2 * xw + 1];
      }
      g.accum_move(x, std::move(dx));
    });
  }

  // Stride-1 'same' convolution, odd square kernels: x [N,Ci,H,W],
  // w [Co,Ci,k,k] -> [N,Co,H,W]. Runs as im2col + GEMM; backward
  // recomputes the column matrix instead of caching it.
  Var conv2d(Var x, Var w) {
    const Shape& xs = shape(x);
    const Shape& ws = shape(w);
    if (xs.size() != 4 || ws.size() != 4 || ws[1] != xs[1] || ws[2] != ws[3] || !(ws[2] % 2))
      fail_contract("conv2d shapes: x " + shape_str(xs) + " w " + shape_str(ws));
    int N = xs[0], Ci = xs[1], H = xs[2], W = xs[3];
    int Co = ws[0], k = ws[2];
    std::size_t cols = static_cast<std::size_t>(N) * H * W;
    std::size_t rows = static_cast<std::size_t>(Ci) * k * k;
    std::vector<T> col(rows * cols);
    im2col(value(x).data(), col.data(), N, Ci, H, W, k);
    std::vector<T> ymat(static_cast<std::size_t>(Co) * cols);
    km::gemm_nn(Co, static_cast<int>(cols), static_cast<int>(rows), value(w).data(),
                col.data(), ymat.data(), false);
    Tensor<T> out(Shape{N, Co, H, W});
    comat_to_nchw(ymat.data(), out.data(), N, Co, static_cast<std::size_t>(H) * W);
    return record(std::move(out), {x, w},
                  [x, w, N, Ci, H, W, Co, k](Graph& g, const Tensor<T>& go) {
      std::size_t hw = static_cast<std::size_t>(H) * W;
      std::size_t cols2 = static_cast<std::size_t>(N) * hw;
      std::size_t rows2 = static_cast<std::size_t>(Ci) * k * k;
      std::vector<T> gmat(static_cast<std::size_t>(Co) * cols2);
      nchw_to_comat(go.data(), gmat.data(), N, Co, hw);
      if (g.needs(w)) {
        std::vector<T> col2(rows2 * cols2);
        im2col(g.value(x).data(), col2.data(), N, Ci, H, W, k);
        Tensor<T> dw(g.shape(w));
        km::gemm_nt(Co, static_cast<int>(rows2), static_cast<int>(cols2), gmat.data(),
                    col2.data(), dw.data(), false);
        g.accum_move(w, std::move(dw));
      }
      if (g.needs(x)) {
        std::vector<T> dcol(rows2 * cols2);
        km::gemm_tn(static_cast<int>(rows2), static_cast<int>(cols2), Co,
                    g.value(w).data(), gmat.data(), dcol.data(), false);
        Tensor<T> dx(g.shape(x));
        col2im(dcol.data(), dx.data(), N, Ci, H, W, k);
        g.accum_move(x, std::move(dx));
      }
    });
  }

  Var reshape(Var x, Shape s) {
    Tensor<T> out = value(x).reshaped(std::move(s));
    return record(std::move(out), {x}, [x](Graph& g, const Tensor<T>& go) {
      g.accum(x, go.reshaped(g.shape(x)));
    });
  }

  // ------------------------------------------------------------------
  // Backward
  // ------------------------------------------------------------------

  void backward(Var loss) {
    if (!recording_) fail_contract("backward() on a non-recording graph");
    if (value(loss).numel() != 1) fail_contract("backward() requires a scalar loss");
    grads_.at(check(loss)) = Tensor<T>(Shape{1}, T(1));
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.back || !n.needs) continue;
      const Tensor<T>& g = grads_[static_cast<std::size_t>(id)];
      if (!g.defined()) continue;  // not on any path to the loss
      n.back(*this, g);
    }
  }

  bool needs(Var v) const { return nodes_.at(check(v)).needs; }

 private:
  using km = kernels::K<T>;

  struct Node {
    Tensor<T> value;
    bool needs = false;
    std::function<void(Graph&, const Tensor<T>&)> back;
  };

  std::vector<Node> nodes_;
  std::vector<Tensor<T>> grads_;
  bool recording_;

  std::size_t check(Var v) const {
    if (!v.valid() || v.id >= size()) fail_contract("invalid graph variable");
    return static_cast<std::size_t>(v.id);
  }

  static void ncr(const Shape& s, int& N, int& C, std::size_t& R) {
    if (s.size() < 2) fail_contract("channel op expects at least [N,C]");
    N = s[0];
    C = s[1];
    R = 1;
    for (std::size_t i = 2; i < s.size(); ++i) R *= static_cast<std::size_t>(s[i]);
  }

  void same_shape(Var a, Var b, const char* op) const {
    if (!value(a).same_shape(value(b)))
      fail_contract(std::string(op) + ": shape mismatch " + shape_str(shape(a)) + " vs " +
                    shape_str(shape(b)));
  }

  template <class F>
  Var record(Tensor<T> out, std::initializer_list<Var> parents, F&& back) {
    Node n;
    n.value = std::move(out);
    for (Var p : parents) n.needs = n.needs || nodes_.at(check(p)).needs;
    if (recording_ && n.needs) n.back = std::forward<F>(back);
    nodes_.push_back(std::move(n));
    grads_.emplace_back();
    return Var{size() - 1};
  }

  void accum(Var v, const Tensor<T>& contribution) {
    if (!nodes_[check(v)].needs) return;
    Tensor<T>& g = grads_[check(v)];
    if (!g.defined()) {
      g = contribution.clone();
    } else {
      km::add(g.data(), contribution.data(), g.data(), g.numel());
    }
  }

  void accum_move(Var v, Tensor<T>&& contribution) {
    if (!nodes_[check(v)].needs) return;
    Tensor<T>& g = grads_[check(v)];
    if (!g.defined()) {
      g = std::move(contribution);
    } else {
      km::add(g.data(), contribution.data(), g.data(), g.numel());
    }
  }

  void accum_scaled(Var v, const Tensor<T>& contribution, T scale) {
    if (!nodes_[check(v)].needs) return;
    Tensor<T>& g = grads_[check(v)];
    if (!g.defined()) g = Tensor<T>::zeros(nodes_[check(v)].value.shape());
    km::axpy(scale, contribution.data(), g.data(), g.numel());
  }

  // Shared space-to-depth walker. scatter=false: read big, write small
  // (squeeze); scatter=true: write big from small (unsqueeze / grads).
  static void squeeze_copy(const T* big_or_dst, T* small_or_src, int N, int C, int H,
                           int W, int s, bool scatter) {
    // big tensor: [N,C,H,W]; small tensor: [N,C*s*s,H/s,W/s]
    int h = H / s, w = W / s;
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int dy = 0; dy < s; ++dy)
          for (int dx = 0; dx < s; ++dx) {
            int sc = (c * s + dy) * s + dx;
            for (int y = 0; y < h; ++y) {
              std::size_t big0 =
                  ((static_cast<std::size_t>(n) * C + c) * H + (y * s + dy)) * W + dx;
              std::size_t small0 =
                  ((static_cast<std::size_t>(n) * C * s * s + sc) * h + y) * w;
              if (scatter) {
                T* dst = const_cast<T*>(big_or_dst) + big0;
                const T* src = small_or_src + small0;
                for (int xw = 0; xw < w; ++xw) dst[static_cast<std::size_t>(xw) * s] = src[xw];
              } else {
                const T* src = big_or_dst + big0;
                T* dst = small_or_src + small0;
                for (int xw = 0; xw < w; ++xw) dst[xw] = src[static_cast<std::size_t>(xw) * s];
              }
            }
          }
  }

  static void im2col(const T* x, T* col, int N, int Ci, int H, int W, int k) {
    int p = k / 2;
    std::size_t cols = static_cast<std::size_t>(N) * H * W;
    for (int ci = 0; ci < Ci; ++ci)
      for (int dy = 0; dy < k; ++dy)
        for (int dx = 0; dx < k; ++dx) {
          T* dst = col + ((static_cast<std::size_t>(ci) * k + dy) * k + dx) * cols;
          for (int n = 0; n < N; ++n) {
            const T* src = x + (static_cast<std::size_t>(n) * Ci + ci) * H * W;
            for (int y = 0; y < H; ++y) {
              int sy = y + dy - p;
              T* drow = dst + (static_cast<std::size_t>(n) * H + y) * W;
              if (sy < 0 || sy >= H) {
                for (int xw = 0; xw < W; ++xw) drow[xw] = T(0);
                continue;
              }
              const T* srow = src + static_cast<std::size_t>(sy) * W;
              for (int xw = 0; xw < W; ++xw) {
                int sx = xw + dx - p;
                drow[xw] = (sx < 0 || sx >= W) ? T(0) : srow[sx];
              }
            }
          }
        }
  }

  static void col2im(const T* col, T* x, int N, int Ci, int H, int W, int k) {
    int p = k / 2;
    std::size_t cols = static_cast<std::size_t>(N) * H * W;
    for (int ci = 0; ci < Ci; ++ci)
      for (int dy = 0; dy < k; ++dy)
        for (int dx = 0; dx < k; ++dx) {
          const T* src = col + ((static_cast<std::size_t>(ci) * k + dy) * k + dx) * cols;
          for (int n = 0; n < N; ++n) {
            T* dst = x + (static_cast<std::size_t>(n) * Ci + ci) * H * W;
            for (int y = 0; y < H; ++y) {
              int sy = y + dy - p;
              if (sy < 0 || sy >= H) continue;
              const T* srow = src + (static_cast<std::size_t>(n) * H + y) * W;
              T* drow = dst + static_cast<std::size_t>(sy) * W;
              for (int xw = 0; xw < W; ++xw) {
                int sx = xw + dx - p;
                if (sx >= 0 && sx < W) drow[sx] += srow[xw];
              }
            }
          }
        }
  }

  // [Co, N*HW] (column-major in (n, pixel)) <-> [N, Co, HW]
  static void comat_to_nchw(const T* m, T* out, int N, int Co, std::size_t hw) {
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < Co; ++c)
        std::memcpy(out + (static_cast<std::size_t>(n) * Co + c) * hw,
                    m + (static_cast<std::size_t>(c) * N + n) * hw, hw * sizeof(T));
  }

  static void nchw_to_comat(const T* x, T* m, int N, int Co, std::size_t hw) {
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < Co; ++c)
        std::memcpy(m + (static_cast<std::size_t>(c) * N + n) * hw,
                    x + (static_cast<std::size_t>(n) * Co + c) * hw, hw * sizeof(T));
  }
};

}  // namespace flowsr::ad
