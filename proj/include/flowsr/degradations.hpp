#pragma once

// Degradation operators D: X -> Y. All kinds are exactly linear; spatial
// kinds can be materialized as explicit matrices on small shapes for the
// pseudoinverse and for oracle tests.
//
// Conventions (fixed, and relied on by tests):
//  - nearest-subsample picks the top-left pixel of each s x s block;
//    nearest_upsample replicates, so subsample(upsample(y)) == y exactly.
//  - bicubic uses the Catmull-Rom kernel (a = -0.5), reflect padding
//    (edge pixel included: -1 -> 0), and anti-aliasing when downscaling
//    (kernel stretched by the scale factor); tap weights are computed in
//    double and normalized to sum to 1 per output sample.
//  - pixel values live in [0, 1): dequantize maps k -> (k + u)/256 with
//    u ~ Uniform[0,1), quantize maps v -> floor(256 v) clamped to [0, 255].

#include <string>

#include "flowsr/image_io.hpp"
#include "flowsr/rng.hpp"
#include "flowsr/tensor.hpp"

namespace flowsr {

enum class DegradationKind {
  linear_matrix,
  average_pool,
  bicubic_downsample,
  nearest_subsample,
};

const char* degradation_kind_name(DegradationKind k);
DegradationKind degradation_kind_from_name(const std::string& name);

class DegradationOp {
 public:
  // Vector problem y = A x with a full-row-rank A [m, n]; rank checked here.
  static DegradationOp linear(Tensorf A);
  static DegradationOp average_pool(int channels, int height, int width, int s);
  static DegradationOp bicubic(int channels, int height, int width, int s);
  static DegradationOp nearest(int channels, int height, int width, int s);

  DegradationKind kind() const { return kind_; }
  int scale() const { return scale_; }
  bool vector_problem() const { return kind_ == DegradationKind::linear_matrix; }
  const Shape& in_shape() const { return in_shape_; }    // [C,H,W] or [n]
  const Shape& out_shape() const { return out_shape_; }  // [C,h,w] or [m]
  const Tensorf& matrix() const;                         // linear kind only

  // Key-value text block, e.g. "kind=average-pool;scale=4;in=1x32x32;out=1x8x8".
  // Linear kind embeds "values=..." row-major (or "matrix_file=..." beyond
  // 256 entries).
  std::string descriptor() const;
  static DegradationOp parse(const std::string& descriptor);

 private:
  DegradationOp() = default;
  DegradationKind kind_ = DegradationKind::average_pool;
  int scale_ = 1;
  Shape in_shape_, out_shape_;
  Tensorf matrix_;
};

// Forward evaluation; accepts one sample ([C,H,W] / [n]) or a batch with a
// leading N. Exactly linear for every kind.
Tensorf apply(const DegradationOp& op, const Tensorf& x);

// Explicit [m, n] matrix; restricted to small inputs (<= 16384 elements).
Tensorf materialize(const DegradationOp& op);

// Moore-Penrose pseudoinverse A^T (A A^T)^-1 as an explicit [n, m] matrix.
// Supported for linear-matrix and average-pool kinds.
Tensorf moore_penrose(const DegradationOp& op);

// x = D+ y, batch-aware like apply().
Tensorf pinv_apply(const Tensorf& pinv_matrix, const Tensorf& y);

// Block replication / top-left subsampling, batch-aware.
Tensorf nearest_upsample(const Tensorf& y, int s);
Tensorf nearest_subsample_t(const Tensorf& x, int s);

// Catmull-Rom upscale used by the evaluation baseline.
Tensorf bicubic_upsample(const Tensorf& y, int s);

Tensorf dequantize(const Image8& img, RngStream& rng);
Tensorf dequantize_center(const Image8& img);  // deterministic (k + 0.5)/256
Image8 quantize(const Tensorf& x);

}  // namespace flowsr
