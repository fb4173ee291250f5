#pragma once

// Invertible coupling flow f: X <-> Y x Z.
//
// Geometry: image problems squeeze [N,C,H,W] by the SR factor s into
// [N, C*s*s, H/s, W/s] and run couplings on the squeezed channels; vector
// problems run couplings directly on the coordinates. The output partition
// is fixed and versioned with the checkpoint format: the first C squeezed
// channels (first m coordinates) are y, the rest are z, so y has exactly
// the measurement grid's shape.
//
// One layer applies both affine half-steps: u' = exp(psi~(v)) u + phi(v),
// then v' = exp(rho~(u')) v + eta(u'), with psi~ = c tanh(psi / c) (same
// for rho). The reported log-det is the sum of the effective log-scales
// psi~ and rho~ actually applied, which makes it exact under clamping.
//
// Partitions: "checkerboard" takes even-indexed channels/coordinates as u
// and odd as v (through the squeeze this is the spatial checkerboard when
// s = 2); "channel-split" takes the first half vs the rest. Layers
// alternate between the two rules; both halves are transformed every
// layer, so no mask flipping is needed.

#include <cstdio>
#include <string>
#include <vector>

#include "flowsr/numerics.hpp"

namespace flowsr {

enum class PartitionRule { checkerboard, channel_split };

inline const char* partition_rule_name(PartitionRule r) {
  return r == PartitionRule::checkerboard ? "checkerboard" : "channel-split";
}

inline PartitionRule partition_rule_from_name(const std::string& s) {
  if (s == "checkerboard") return PartitionRule::checkerboard;
  if (s == "channel-split") return PartitionRule::channel_split;
  fail_config("unknown partition rule: " + s);
}

struct FlowSpec {
  bool image = true;

  // image problems
  int channels = 1;
  int height = 32;
  int width = 32;
  int scale = 4;

  // vector problems
  int dim = 0;
  int measure_dim = 0;

  int layers = 8;
  int hidden = 64;
  double clamp = 2.0;
  PartitionRule first_partition = PartitionRule::checkerboard;
  bool check_finite = true;

  static FlowSpec for_image(int channels, int height, int width, int scale) {
    FlowSpec s;
    s.image = true;
    s.channels = channels;
    s.height = height;
    s.width = width;
    s.scale = scale;
    return s;
  }

  static FlowSpec for_vector(int dim, int measure_dim) {
    FlowSpec s;
    s.image = false;
    s.dim = dim;
    s.measure_dim = measure_dim;
    return s;
  }

  int squeezed_channels() const { return image ? channels * scale * scale : dim; }
  int y_channels() const { return image ? channels : measure_dim; }
  int z_channels() const { return squeezed_channels() - y_channels(); }
  int grid_h() const { return image ? height / scale : 1; }
  int grid_w() const { return image ? width / scale : 1; }

  Shape x_shape() const { return image ? Shape{channels, height, width} : Shape{dim}; }
  Shape y_shape() const {
    return image ? Shape{channels, grid_h(), grid_w()} : Shape{measure_dim};
  }
  Shape z_shape() const {
    return image ? Shape{z_channels(), grid_h(), grid_w()} : Shape{dim - measure_dim};
  }

  void validate() const {
    if (layers < 1) fail_config("flow: need at least one coupling layer");
    if (hidden < 1) fail_config("flow: hidden width must be positive");
    if (!(clamp > 0)) fail_config("flow: clamp must be positive");
    if (image) {
      if (scale < 2) fail_config("flow: image problems need scale >= 2");
      if (channels < 1 || height < scale || width < scale || height % scale || width % scale)
        fail_config("flow: scale must divide the image extents");
    } else {
      if (dim < 2 || measure_dim < 1 || measure_dim >= dim)
        fail_config("flow: vector problems need 1 <= measure_dim < dim");
    }
  }
};

template <class T>
class CouplingFlow {
 public:
  explicit CouplingFlow(FlowSpec spec) : spec_(spec) {
    spec_.validate();
    const int S = spec_.squeezed_channels();
    layers_.resize(static_cast<std::size_t>(spec_.layers));
    for (int i = 0; i < spec_.layers; ++i) {
      PartitionRule rule = (i % 2 == 0) ? spec_.first_partition
                           : (spec_.first_partition == PartitionRule::checkerboard
                                  ? PartitionRule::channel_split
                                  : PartitionRule::checkerboard);
      Layer& L = layers_[static_cast<std::size_t>(i)];
      L.rule = rule;
      if (rule == PartitionRule::checkerboard) {
        for (int c = 0; c < S; ++c) (c % 2 == 0 ? L.iu : L.iv).push_back(c);
      } else {
        int half = (S + 1) / 2;
        for (int c = 0; c < S; ++c) (c < half ? L.iu : L.iv).push_back(c);
      }
    }
  }

  const FlowSpec& spec() const { return spec_; }
  int layer_count() const { return spec_.layers; }

  // --------------------------------------------------------------
  // Parameters
  // --------------------------------------------------------------

  void init_params(ParamStore<T>& store, RngStream& rng) const {
    for (int i = 0; i < spec_.layers; ++i) {
      const Layer& L = layers_[static_cast<std::size_t>(i)];
      int cu = static_cast<int>(L.iu.size()), cv = static_cast<int>(L.iv.size());
      init_subnet(store, rng, net_prefix(i, "phi"), cv, cu);
      init_subnet(store, rng, net_prefix(i, "psi"), cv, cu);
      init_subnet(store, rng, net_prefix(i, "eta"), cu, cv);
      init_subnet(store, rng, net_prefix(i, "rho"), cu, cv);
    }
  }

  // --------------------------------------------------------------
  // Graph passes
  // --------------------------------------------------------------

  struct Forward {
    ad::Var y, z, logdet;  // logdet per sample, shape [N]
  };

  Forward forward(ad::Graph<T>& g, ad::Var x, const VarMap& vm) const {
    ad::Var cur = spec_.image ? g.squeeze2(x, spec_.scale) : x;
    int N = g.shape(cur)[0];
    ad::Var logdet = g.constant(Tensor<T>::zeros(Shape{N}));
    for (int i = 0; i < spec_.layers; ++i) {
      const Layer& L = layers_[static_cast<std::size_t>(i)];
      ad::Var u = g.channel_gather(cur, L.iu);
      ad::Var v = g.channel_gather(cur, L.iv);
      auto [uo, vo, ld] = layer_forward(g, i, u, v, vm);
      cur = g.channel_merge(uo, vo, L.iu, L.iv);
      logdet = g.add(logdet, ld);
    }
    Forward out;
    out.y = g.slice_channels(cur, 0, spec_.y_channels());
    out.z = g.slice_channels(cur, spec_.y_channels(), spec_.z_channels());
    out.logdet = logdet;
    return out;
  }

  ad::Var inverse(ad::Graph<T>& g, ad::Var y, ad::Var z, const VarMap& vm) const {
    ad::Var cur = g.concat_channels(y, z);
    for (int i = spec_.layers - 1; i >= 0; --i) {
      const Layer& L = layers_[static_cast<std::size_t>(i)];
      ad::Var u = g.channel_gather(cur, L.iu);
      ad::Var v = g.channel_gather(cur, L.iv);
      auto [ui, vi] = layer_inverse(g, i, u, v, vm);
      cur = g.channel_merge(ui, vi, L.iu, L.iv);
    }
    return spec_.image ? g.unsqueeze2(cur, spec_.scale) : cur;
  }

  struct LayerOut {
    ad::Var u, v, logdet;
  };

  // Both half-steps of one coupling layer on an explicit (u, v) pair.
  LayerOut layer_forward(ad::Graph<T>& g, int i, ad::Var u, ad::Var v,
                         const VarMap& vm) const {
    ad::Var psi = clamp_scale(g, subnet(g, v, net_prefix(i, "psi"), vm));
    ad::Var phi = subnet(g, v, net_prefix(i, "phi"), vm);
    check(g, psi, i, "psi");
    check(g, phi, i, "phi");
    ad::Var uo = g.add(g.mul(u, g.exp(psi)), phi);
    ad::Var rho = clamp_scale(g, subnet(g, uo, net_prefix(i, "rho"), vm));
    ad::Var eta = subnet(g, uo, net_prefix(i, "eta"), vm);
    check(g, rho, i, "rho");
    check(g, eta, i, "eta");
    ad::Var vo = g.add(g.mul(v, g.exp(rho)), eta);
    ad::Var ld = g.add(g.sum_per_sample(psi), g.sum_per_sample(rho));
    return {uo, vo, ld};
  }

  // Exact algebraic inverse, half-steps in reverse order.
  std::pair<ad::Var, ad::Var> layer_inverse(ad::Graph<T>& g, int i, ad::Var uo,
                                            ad::Var vo, const VarMap& vm) const {
    ad::Var rho = clamp_scale(g, subnet(g, uo, net_prefix(i, "rho"), vm));
    ad::Var eta = subnet(g, uo, net_prefix(i, "eta"), vm);
    check(g, rho, i, "rho");
    check(g, eta, i, "eta");
    ad::Var v = g.mul(g.sub(vo, eta), g.exp(g.neg(rho)));
    ad::Var psi = clamp_scale(g, subnet(g, v, net_prefix(i, "psi"), vm));
    ad::Var phi = subnet(g, v, net_prefix(i, "phi"), vm);
    check(g, psi, i, "psi");
    check(g, phi, i, "phi");
    ad::Var u = g.mul(g.sub(uo, phi), g.exp(g.neg(psi)));
    return {u, v};
  }

  // --------------------------------------------------------------
  // Plain-tensor wrappers (non-recording graph per call)
  // --------------------------------------------------------------

  struct ForwardT {
    Tensor<T> y, z, logdet;
  };

  ForwardT forward_t(const Tensor<T>& x, const ParamStore<T>& params) const {
    ad::Graph<T> g(false);
    VarMap vm = param_leaves(g, params, false);
    Forward f = forward(g, g.constant(x), vm);
    return {g.value(f.y), g.value(f.z), g.value(f.logdet)};
  }

  Tensor<T> inverse_t(const Tensor<T>& y, const Tensor<T>& z,
                      const ParamStore<T>& params) const {
    ad::Graph<T> g(false);
    VarMap vm = param_leaves(g, params, false);
    ad::Var x = inverse(g, g.constant(y), g.constant(z), vm);
    return g.value(x);
  }

  // Hyperparameters for the checkpoint header. The partition mapping is
  // part of the persisted format.
  std::map<std::string, std::string> hyper() const {
    std::map<std::string, std::string> h;
    h["flow.format"] = "1";
    h["flow.kind"] = spec_.image ? "image" : "vector";
    h["flow.layers"] = std::to_string(spec_.layers);
    h["flow.hidden"] = std::to_string(spec_.hidden);
    h["flow.clamp"] = format_double(spec_.clamp);
    h["flow.first_partition"] = partition_rule_name(spec_.first_partition);
    h["flow.y_mapping"] = "first-channels";  // y = channels [0, C) after squeeze
    if (spec_.image) {
      h["flow.channels"] = std::to_string(spec_.channels);
      h["flow.height"] = std::to_string(spec_.height);
      h["flow.width"] = std::to_string(spec_.width);
      h["flow.scale"] = std::to_string(spec_.scale);
    } else {
      h["flow.dim"] = std::to_string(spec_.dim);
      h["flow.measure_dim"] = std::to_string(spec_.measure_dim);
    }
    return h;
  }

  static FlowSpec spec_from_hyper(const std::map<std::string, std::string>& h) {
    auto get = [&](const std::string& k) -> std::string {
      auto it = h.find(k);
      if (it == h.end()) fail_io("checkpoint missing flow hyperparameter: " + k);
      return it->second;
    };
    if (get("flow.format") != "1") fail_io("unsupported flow checkpoint format");
    FlowSpec s;
    s.image = get("flow.kind") == "image";
    s.layers = std::stoi(get("flow.layers"));
    s.hidden = std::stoi(get("flow.hidden"));
    s.clamp = std::stod(get("flow.clamp"));
    s.first_partition = partition_rule_from_name(get("flow.first_partition"));
    if (get("flow.y_mapping") != "first-channels")
      fail_io("unsupported flow y-partition mapping");
    if (s.image) {
      s.channels = std::stoi(get("flow.channels"));
      s.height = std::stoi(get("flow.height"));
      s.width = std::stoi(get("flow.width"));
      s.scale = std::stoi(get("flow.scale"));
    } else {
      s.dim = std::stoi(get("flow.dim"));
      s.measure_dim = std::stoi(get("flow.measure_dim"));
    }
    s.validate();
    return s;
  }

 private:
  struct Layer {
    PartitionRule rule = PartitionRule::checkerboard;
    std::vector<int> iu, iv;
  };

  FlowSpec spec_;
  std::vector<Layer> layers_;

  static std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
  }

  static std::string net_prefix(int layer, const char* net) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "flow/layer%02d/%s", layer, net);
    return buf;
  }

  ad::Var clamp_scale(ad::Graph<T>& g, ad::Var raw) const {
    const T c = static_cast<T>(spec_.clamp);
    return g.mul_scalar(g.tanh(g.mul_scalar(raw, T(1) / c)), c);
  }

  void check(ad::Graph<T>& g, ad::Var v, int layer, const char* net) const {
    if (!spec_.check_finite) return;
    if (!g.value(v).all_finite())
      fail_numeric("coupling layer " + std::to_string(layer) + " subnet " + net +
                   " produced non-finite values");
  }

  void init_subnet(ParamStore<T>& store, RngStream& rng, const std::string& prefix,
                   int in_ch, int out_ch) const {
    const int h = spec_.hidden;
    if (spec_.image) {
      store.set(prefix + "/w0", conv_init(rng, h, in_ch));
      store.set(prefix + "/b0", Tensor<T>::zeros(Shape{h}));
      store.set(prefix + "/w1", conv_init(rng, h, h));
      store.set(prefix + "/b1", Tensor<T>::zeros(Shape{h}));
      store.set(prefix + "/w2", Tensor<T>::zeros(Shape{out_ch, h, 3, 3}));
      store.set(prefix + "/b2", Tensor<T>::zeros(Shape{out_ch}));
    } else {
      store.set(prefix + "/w0", dense_init(rng, h, in_ch));
      store.set(prefix + "/b0", Tensor<T>::zeros(Shape{h}));
      store.set(prefix + "/w1", Tensor<T>::zeros(Shape{out_ch, h}));
      store.set(prefix + "/b1", Tensor<T>::zeros(Shape{out_ch}));
    }
  }

  static Tensor<T> conv_init(RngStream& rng, int out_ch, int in_ch) {
    T std_dev = static_cast<T>(std::sqrt(1.0 / (in_ch * 9)));
    return Tensor<T>::randn(Shape{out_ch, in_ch, 3, 3}, rng, std_dev);
  }

  static Tensor<T> dense_init(RngStream& rng, int out_f, int in_f) {
    T std_dev = static_cast<T>(std::sqrt(1.0 / in_f));
    return Tensor<T>::randn(Shape{out_f, in_f}, rng, std_dev);
  }

  ad::Var subnet(ad::Graph<T>& g, ad::Var x, const std::string& prefix,
                 const VarMap& vm) const {
    if (spec_.image) {
      ad::Var h0 = g.silu(g.add_bias_channels(g.conv2d(x, vm.at(prefix + "/w0")),
                                              vm.at(prefix + "/b0")));
      ad::Var h1 = g.silu(g.add_bias_channels(g.conv2d(h0, vm.at(prefix + "/w1")),
                                              vm.at(prefix + "/b1")));
      return g.add_bias_channels(g.conv2d(h1, vm.at(prefix + "/w2")), vm.at(prefix + "/b2"));
    }
    ad::Var h0 = g.silu(g.add_bias_rows(g.matmul_nt(x, vm.at(prefix + "/w0")),
                                        vm.at(prefix + "/b0")));
    return g.add_bias_rows(g.matmul_nt(h0, vm.at(prefix + "/w1")), vm.at(prefix + "/b1"));
  }
};

}  // namespace flowsr
