#pragma once

// Dense row-major tensor with value semantics. Data is shared between
// copies; every operation allocates a fresh output, so shared buffers are
// never mutated except through explicitly in-place optimizer updates that
// own their storage.

#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "flowsr/error.hpp"
#include "flowsr/rng.hpp"

namespace flowsr {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d <= 0) fail_contract("tensor extents must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

template <class T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<T>>(shape_numel(shape_), T(0))) {}

  Tensor(Shape shape, T fill)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<T>>(shape_numel(shape_), fill)) {}

  Tensor(Shape shape, std::vector<T> values)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<T>>(std::move(values))) {
    if (data_->size() != shape_numel(shape_))
      fail_contract("tensor data length " + std::to_string(data_->size()) +
                    " does not match shape " + shape_str(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, T v) { return Tensor(std::move(shape), v); }

  static Tensor randn(Shape shape, RngStream& rng, T stddev = T(1)) {
    Tensor t(std::move(shape));
    for (auto& v : *t.data_) v = static_cast<T>(rng.normal()) * stddev;
    return t;
  }

  static Tensor rand_uniform(Shape shape, RngStream& rng) {
    Tensor t(std::move(shape));
    for (auto& v : *t.data_) v = static_cast<T>(rng.uniform());
    return t;
  }

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int size(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t numel() const { return data_ ? data_->size() : 0; }

  const T* data() const { return data_->data(); }
  T* data() { return data_->data(); }
  T operator[](std::size_t i) const { return (*data_)[i]; }
  T& operator[](std::size_t i) { return (*data_)[i]; }

  // Same buffer, new shape; element count must match.
  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != numel())
      fail_contract("reshape " + shape_str(shape_) + " -> " + shape_str(shape) +
                    " changes element count");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
  }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<T>>(*data_);
    return t;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (const T& v : *data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  void require_finite(const std::string& context) const {
    if (!all_finite()) fail_numeric("non-finite values in " + context);
  }

  // Convert between element types (f32 <-> f64 shadowing).
  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < numel(); ++i)
      out[i] = static_cast<U>((*data_)[i]);
    return out;
  }

 private:
  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;

  template <class U>
  friend class Tensor;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

}  // namespace flowsr
