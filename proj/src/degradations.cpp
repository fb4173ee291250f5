#include "flowsr/degradations.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "flowsr/kernels.hpp"
#include "flowsr/linalg.hpp"

namespace flowsr {

namespace {

constexpr std::size_t kMaterializeLimit = 16384;

// Catmull-Rom cubic, a = -0.5.
double cubic_kernel(double t) {
  t = std::fabs(t);
  if (t <= 1.0) return (1.5 * t - 2.5) * t * t + 1.0;
  if (t < 2.0) return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0;
  return 0.0;
}

int reflect_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

struct Taps {
  int start = 0;
  std::vector<float> w;  // raw indices start..start+w.size()-1, reflected on use
};

// One output sample's weights for a 1D resize in_n -> out_n; anti-aliased
// when downscaling.
std::vector<Taps> bicubic_taps(int in_n, int out_n) {
  const double ratio = static_cast<double>(in_n) / out_n;
  const double scale = std::max(1.0, ratio);
  const double support = 2.0 * scale;
  std::vector<Taps> taps(static_cast<std::size_t>(out_n));
  for (int i = 0; i < out_n; ++i) {
    const double center = (i + 0.5) * ratio - 0.5;
    int lo = static_cast<int>(std::ceil(center - support));
    int hi = static_cast<int>(std::floor(center + support));
    std::vector<double> w(static_cast<std::size_t>(hi - lo + 1));
    double total = 0.0;
    for (int j = lo; j <= hi; ++j) {
      double v = cubic_kernel((j - center) / scale);
      w[static_cast<std::size_t>(j - lo)] = v;
      total += v;
    }
    Taps& t = taps[static_cast<std::size_t>(i)];
    t.start = lo;
    t.w.resize(w.size());
    for (std::size_t k = 0; k < w.size(); ++k)
      t.w[k] = static_cast<float>(w[k] / total);
  }
  return taps;
}

// Resize the last axis of rows-many contiguous rows of length in_n.
void resample_rows(const float* src, float* dst, int rows, int in_n,
                   const std::vector<Taps>& taps) {
  const int out_n = static_cast<int>(taps.size());
  for (int r = 0; r < rows; ++r) {
    const float* in = src + static_cast<std::size_t>(r) * in_n;
    float* out = dst + static_cast<std::size_t>(r) * out_n;
    for (int i = 0; i < out_n; ++i) {
      const Taps& t = taps[static_cast<std::size_t>(i)];
      float acc = 0.0f;
      for (std::size_t k = 0; k < t.w.size(); ++k)
        acc += t.w[k] * in[reflect_index(t.start + static_cast<int>(k), in_n)];
      out[i] = acc;
    }
  }
}

// Transpose a [rows, cols] plane.
void transpose_plane(const float* src, float* dst, int rows, int cols) {
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      dst[static_cast<std::size_t>(c) * rows + r] = src[static_cast<std::size_t>(r) * cols + c];
}

// Separable bicubic resize of a [C,H,W] sample.
void bicubic_resize_chw(const float* src, float* dst, int C, int H, int W, int oh, int ow) {
  auto taps_w = bicubic_taps(W, ow);
  auto taps_h = bicubic_taps(H, oh);
  std::vector<float> mid(static_cast<std::size_t>(H) * ow);
  std::vector<float> mid_t(static_cast<std::size_t>(ow) * H);
  std::vector<float> out_t(static_cast<std::size_t>(ow) * oh);
  for (int c = 0; c < C; ++c) {
    const float* plane = src + static_cast<std::size_t>(c) * H * W;
    resample_rows(plane, mid.data(), H, W, taps_w);
    transpose_plane(mid.data(), mid_t.data(), H, ow);
    resample_rows(mid_t.data(), out_t.data(), ow, H, taps_h);
    transpose_plane(out_t.data(), dst + static_cast<std::size_t>(c) * oh * ow, ow, oh);
  }
}

struct BatchView {
  int n = 1;            // batch count (1 when no leading batch dim)
  bool batched = false;
  Shape sample_shape;
};

BatchView batch_view(const Tensorf& x, const Shape& sample_shape, const char* what) {
  BatchView v;
  v.sample_shape = sample_shape;
  if (x.shape() == sample_shape) return v;
  if (x.ndim() == static_cast<int>(sample_shape.size()) + 1) {
    Shape tail(x.shape().begin() + 1, x.shape().end());
    if (tail == sample_shape) {
      v.n = x.size(0);
      v.batched = true;
      return v;
    }
  }
  fail_contract(std::string(what) + ": input shape " + shape_str(x.shape()) +
                " does not match operator input " + shape_str(sample_shape));
}

Shape with_batch(const BatchView& v, const Shape& sample_shape) {
  if (!v.batched) return sample_shape;
  Shape s;
  s.push_back(v.n);
  s.insert(s.end(), sample_shape.begin(), sample_shape.end());
  return s;
}

}  // namespace

const char* degradation_kind_name(DegradationKind k) {
  switch (k) {
    case DegradationKind::linear_matrix: return "linear-matrix";
    case DegradationKind::average_pool: return "average-pool";
    case DegradationKind::bicubic_downsample: return "bicubic-downsample";
    case DegradationKind::nearest_subsample: return "nearest-subsample";
  }
  return "?";
}

DegradationKind degradation_kind_from_name(const std::string& name) {
  if (name == "linear-matrix") return DegradationKind::linear_matrix;
  if (name == "average-pool") return DegradationKind::average_pool;
  if (name == "bicubic-downsample") return DegradationKind::bicubic_downsample;
  if (name == "nearest-subsample") return DegradationKind::nearest_subsample;
  fail_config("unknown degradation kind: " + name);
}

DegradationOp DegradationOp::linear(Tensorf A) {
  if (A.ndim() != 2) fail_contract("linear degradation needs a 2-d matrix");
  int m = A.size(0), n = A.size(1);
  // Full row rank check on the Gram matrix, in double.
  linalg::Matd Ad(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) Ad.at(i, j) = A[static_cast<std::size_t>(i) * n + j];
  linalg::Matd L;
  if (!cholesky(matmul(Ad, transpose(Ad)), L))
    fail_contract("linear degradation matrix is rank deficient");
  DegradationOp op;
  op.kind_ = DegradationKind::linear_matrix;
  op.in_shape_ = {n};
  op.out_shape_ = {m};
  op.matrix_ = std::move(A);
  return op;
}

DegradationOp DegradationOp::average_pool(int channels, int height, int width, int s) {
  if (channels <= 0 || height <= 0 || width <= 0 || s < 1 || height % s || width % s)
    fail_contract("average_pool: scale must divide spatial extents");
  DegradationOp op;
  op.kind_ = DegradationKind::average_pool;
  op.scale_ = s;
  op.in_shape_ = {channels, height, width};
  op.out_shape_ = {channels, height / s, width / s};
  return op;
}

DegradationOp DegradationOp::bicubic(int channels, int height, int width, int s) {
  DegradationOp op = average_pool(channels, height, width, s);
  op.kind_ = DegradationKind::bicubic_downsample;
  return op;
}

DegradationOp DegradationOp::nearest(int channels, int height, int width, int s) {
  DegradationOp op = average_pool(channels, height, width, s);
  op.kind_ = DegradationKind::nearest_subsample;
  return op;
}

const Tensorf& DegradationOp::matrix() const {
  if (kind_ != DegradationKind::linear_matrix)
    fail_contract("matrix() is only defined for the linear-matrix kind");
  return matrix_;
}

Tensorf apply(const DegradationOp& op, const Tensorf& x) {
  BatchView v = batch_view(x, op.in_shape(), "apply");
  Tensorf out(with_batch(v, op.out_shape()));
  const std::size_t in_sz = shape_numel(op.in_shape());
  const std::size_t out_sz = shape_numel(op.out_shape());

  switch (op.kind()) {
    case DegradationKind::linear_matrix: {
      const Tensorf& A = op.matrix();
      int m = A.size(0), n0 = A.size(1);
      kernels::gemm_nt(v.n, m, n0, x.data(), A.data(), out.data(), false);
      return out;
    }
    case DegradationKind::average_pool: {
      int C = op.in_shape()[0], H = op.in_shape()[1], W = op.in_shape()[2];
      int s = op.scale(), h = H / s, w = W / s;
      const float inv = 1.0f / static_cast<float>(s * s);
      for (int b = 0; b < v.n; ++b) {
        const float* src = x.data() + static_cast<std::size_t>(b) * in_sz;
        float* dst = out.data() + static_cast<std::size_t>(b) * out_sz;
        for (int c = 0; c < C; ++c)
          for (int y = 0; y < h; ++y)
            for (int xw = 0; xw < w; ++xw) {
              float acc = 0.0f;
              for (int dy = 0; dy < s; ++dy)
                for (int dx = 0; dx < s; ++dx)
                  acc += src[(static_cast<std::size_t>(c) * H + y * s + dy) * W + xw * s + dx];
              dst[(static_cast<std::size_t>(c) * h + y) * w + xw] = acc * inv;
            }
      }
      return out;
    }
    case DegradationKind::bicubic_downsample: {
      int C = op.in_shape()[0], H = op.in_shape()[1], W = op.in_shape()[2];
      int h = op.out_shape()[1], w = op.out_shape()[2];
      for (int b = 0; b < v.n; ++b)
        bicubic_resize_chw(x.data() + static_cast<std::size_t>(b) * in_sz,
                           out.data() + static_cast<std::size_t>(b) * out_sz, C, H, W, h, w);
      return out;
    }
    case DegradationKind::nearest_subsample: {
      int C = op.in_shape()[0], H = op.in_shape()[1], W = op.in_shape()[2];
      int s = op.scale(), h = H / s, w = W / s;
      for (int b = 0; b < v.n; ++b) {
        const float* src = x.data() + static_cast<std::size_t>(b) * in_sz;
        float* dst = out.data() + static_cast<std::size_t>(b) * out_sz;
        for (int c = 0; c < C; ++c)
          for (int y = 0; y < h; ++y)
            for (int xw = 0; xw < w; ++xw)
              dst[(static_cast<std::size_t>(c) * h + y) * w + xw] =
                  src[(static_cast<std::size_t>(c) * H + y * s) * W + xw * s];
      }
      return out;
    }
  }
  fail_contract("unreachable degradation kind");
}

Tensorf materialize(const DegradationOp& op) {
  if (op.kind() == DegradationKind::linear_matrix) return op.matrix().clone();
  const std::size_t n = shape_numel(op.in_shape());
  const std::size_t m = shape_numel(op.out_shape());
  if (n > kMaterializeLimit)
    fail_contract("materialize: input too large (" + std::to_string(n) + " elements)");
  Tensorf A(Shape{static_cast<int>(m), static_cast<int>(n)});
  Tensorf basis(op.in_shape());
  for (std::size_t j = 0; j < n; ++j) {
    basis[j] = 1.0f;
    Tensorf col = apply(op, basis);
    for (std::size_t i = 0; i < m; ++i) A[i * n + j] = col[i];
    basis[j] = 0.0f;
  }
  return A;
}

Tensorf moore_penrose(const DegradationOp& op) {
  if (op.kind() != DegradationKind::linear_matrix &&
      op.kind() != DegradationKind::average_pool)
    fail_contract("moore_penrose supports linear-matrix and average-pool kinds");
  Tensorf A = materialize(op);
  int m = A.size(0), n = A.size(1);
  linalg::Matd Ad(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) Ad.at(i, j) = A[static_cast<std::size_t>(i) * n + j];
  linalg::Matd P = linalg::pinv_rows(Ad);  // [n, m]
  Tensorf out(Shape{n, m});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out[static_cast<std::size_t>(i) * m + j] =
        static_cast<float>(P.at(i, j));
  return out;
}

Tensorf pinv_apply(const Tensorf& pinv_matrix, const Tensorf& y) {
  if (pinv_matrix.ndim() != 2) fail_contract("pinv_apply: matrix must be 2-d");
  int n = pinv_matrix.size(0), m = pinv_matrix.size(1);
  std::size_t ysz = y.numel();
  int batch = 1;
  if (ysz != static_cast<std::size_t>(m)) {
    if (ysz % static_cast<std::size_t>(m))
      fail_contract("pinv_apply: measurement size does not match matrix");
    batch = static_cast<int>(ysz / static_cast<std::size_t>(m));
  }
  Tensorf out(batch == 1 ? Shape{n} : Shape{batch, n});
  kernels::gemm_nt(batch, n, m, y.data(), pinv_matrix.data(), out.data(), false);
  return out;
}

Tensorf nearest_upsample(const Tensorf& y, int s) {
  if (s < 1) fail_contract("nearest_upsample: scale must be >= 1");
  if (y.ndim() != 3 && y.ndim() != 4) fail_contract("nearest_upsample expects [C,h,w] or [N,C,h,w]");
  if (s == 1) return y.clone();
  bool batched = y.ndim() == 4;
  int N = batched ? y.size(0) : 1;
  int C = y.size(batched ? 1 : 0), h = y.size(batched ? 2 : 1), w = y.size(batched ? 3 : 2);
  Shape os = batched ? Shape{N, C, h * s, w * s} : Shape{C, h * s, w * s};
  Tensorf out(os);
  const int H = h * s, W = w * s;
  for (int nc = 0; nc < N * C; ++nc) {
    const float* src = y.data() + static_cast<std::size_t>(nc) * h * w;
    float* dst = out.data() + static_cast<std::size_t>(nc) * H * W;
    for (int yy = 0; yy < H; ++yy)
      for (int xx = 0; xx < W; ++xx)
        dst[static_cast<std::size_t>(yy) * W + xx] = src[static_cast<std::size_t>(yy / s) * w + xx / s];
  }
  return out;
}

Tensorf nearest_subsample_t(const Tensorf& x, int s) {
  if (s < 1) fail_contract("nearest_subsample: scale must be >= 1");
  if (x.ndim() != 3 && x.ndim() != 4) fail_contract("nearest_subsample expects [C,H,W] or [N,C,H,W]");
  if (s == 1) return x.clone();
  bool batched = x.ndim() == 4;
  int N = batched ? x.size(0) : 1;
  int C = x.size(batched ? 1 : 0), H = x.size(batched ? 2 : 1), W = x.size(batched ? 3 : 2);
  if (H % s || W % s) fail_contract("nearest_subsample: scale must divide extents");
  int h = H / s, w = W / s;
  Shape os = batched ? Shape{N, C, h, w} : Shape{C, h, w};
  Tensorf out(os);
  for (int nc = 0; nc < N * C; ++nc) {
    const float* src = x.data() + static_cast<std::size_t>(nc) * H * W;
    float* dst = out.data() + static_cast<std::size_t>(nc) * h * w;
    for (int yy = 0; yy < h; ++yy)
      for (int xx = 0; xx < w; ++xx)
        dst[static_cast<std::size_t>(yy) * w + xx] = src[(static_cast<std::size_t>(yy) * s) * W + xx * s];
  }
  return out;
}

Tensorf bicubic_upsample(const Tensorf& y, int s) {
  if (s < 1) fail_contract("bicubic_upsample: scale must be >= 1");
  if (y.ndim() != 3 && y.ndim() != 4) fail_contract("bicubic_upsample expects [C,h,w] or [N,C,h,w]");
  if (s == 1) return y.clone();
  bool batched = y.ndim() == 4;
  int N = batched ? y.size(0) : 1;
  int C = y.size(batched ? 1 : 0), h = y.size(batched ? 2 : 1), w = y.size(batched ? 3 : 2);
  Shape os = batched ? Shape{N, C, h * s, w * s} : Shape{C, h * s, w * s};
  Tensorf out(os);
  std::size_t in_sz = static_cast<std::size_t>(C) * h * w;
  std::size_t out_sz = in_sz * static_cast<std::size_t>(s) * s;
  for (int b = 0; b < N; ++b)
    bicubic_resize_chw(y.data() + static_cast<std::size_t>(b) * in_sz,
                       out.data() + static_cast<std::size_t>(b) * out_sz, C, h, w, h * s, w * s);
  return out;
}

Tensorf dequantize(const Image8& img, RngStream& rng) {
  Tensorf out(Shape{img.channels, img.height, img.width});
  for (std::size_t i = 0; i < img.numel(); ++i)
    out[i] = (static_cast<float>(img.pixels[i]) + rng.uniformf()) * (1.0f / 256.0f);
  return out;
}

Tensorf dequantize_center(const Image8& img) {
  Tensorf out(Shape{img.channels, img.height, img.width});
  for (std::size_t i = 0; i < img.numel(); ++i)
    out[i] = (static_cast<float>(img.pixels[i]) + 0.5f) * (1.0f / 256.0f);
  return out;
}

Image8 quantize(const Tensorf& x) {
  if (x.ndim() != 3) fail_contract("quantize expects [C,H,W]");
  Image8 im = Image8::make(x.size(0), x.size(1), x.size(2));
  for (std::size_t i = 0; i < x.numel(); ++i) {
    float v = std::floor(x[i] * 256.0f);
    im.pixels[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0f, 255.0f));
  }
  return im;
}

std::string DegradationOp::descriptor() const {
  std::ostringstream os;
  os << "kind=" << degradation_kind_name(kind_);
  if (kind_ == DegradationKind::linear_matrix) {
    os << ";in=" << in_shape_[0] << ";out=" << out_shape_[0];
    if (matrix_.numel() <= 256) {
      os << ";values=";
      for (std::size_t i = 0; i < matrix_.numel(); ++i) {
        if (i) os << ",";
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(matrix_[i]));
        os << buf;
      }
    } else {
      fail_contract("linear descriptor limited to 256 inline values; use matrix_file");
    }
  } else {
    os << ";scale=" << scale_;
    os << ";in=" << in_shape_[0] << "x" << in_shape_[1] << "x" << in_shape_[2];
    os << ";out=" << out_shape_[0] << "x" << out_shape_[1] << "x" << out_shape_[2];
  }
  return os.str();
}

namespace {

Shape parse_dims(const std::string& s, const std::string& context) {
  Shape dims;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    try {
      dims.push_back(std::stoi(part));
    } catch (...) {
      fail_config("bad dimension '" + part + "' in " + context);
    }
  }
  if (dims.empty()) fail_config("empty dimension list in " + context);
  return dims;
}

}  // namespace

DegradationOp DegradationOp::parse(const std::string& descriptor) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(descriptor);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (item.empty()) continue;
    auto eq = item.find('=');
    if (eq == std::string::npos) fail_config("bad degradation descriptor item: " + item);
    kv[item.substr(0, eq)] = item.substr(eq + 1);
  }
  auto take = [&](const std::string& key) -> std::string {
    auto it = kv.find(key);
    if (it == kv.end()) fail_config("degradation descriptor missing '" + key + "'");
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  DegradationKind kind = degradation_kind_from_name(take("kind"));
  DegradationOp op;
  if (kind == DegradationKind::linear_matrix) {
    int n = std::stoi(take("in"));
    int m = std::stoi(take("out"));
    std::vector<float> values;
    if (kv.count("values")) {
      std::stringstream vs(take("values"));
      std::string num;
      while (std::getline(vs, num, ',')) values.push_back(std::stof(num));
    } else if (kv.count("matrix_file")) {
      std::ifstream f(take("matrix_file"));
      if (!f) fail_io("cannot open matrix_file for degradation descriptor");
      double v;
      while (f >> v) values.push_back(static_cast<float>(v));
    } else {
      fail_config("linear-matrix descriptor needs 'values' or 'matrix_file'");
    }
    if (values.size() != static_cast<std::size_t>(m) * n)
      fail_config("linear-matrix descriptor: expected " + std::to_string(m * n) +
                  " values, got " + std::to_string(values.size()));
    op = DegradationOp::linear(Tensorf(Shape{m, n}, std::move(values)));
  } else {
    int s = std::stoi(take("scale"));
    Shape in = parse_dims(take("in"), "degradation in shape");
    Shape out = parse_dims(take("out"), "degradation out shape");
    if (in.size() != 3) fail_config("spatial degradation in shape must be CxHxW");
    switch (kind) {
      case DegradationKind::average_pool:
        op = DegradationOp::average_pool(in[0], in[1], in[2], s);
        break;
      case DegradationKind::bicubic_downsample:
        op = DegradationOp::bicubic(in[0], in[1], in[2], s);
        break;
      case DegradationKind::nearest_subsample:
        op = DegradationOp::nearest(in[0], in[1], in[2], s);
        break;
      default:
        fail_config("unreachable");
    }
    if (op.out_shape() != out)
      fail_config("degradation descriptor out shape mismatch: " + shape_str(out) +
                  " vs derived " + shape_str(op.out_shape()));
  }
  if (!kv.empty()) fail_config("unknown degradation descriptor key: " + kv.begin()->first);
  return op;
}

}  // namespace flowsr
