#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stereo4p/error.hpp"

namespace stereo4p {

struct Shape {
  int height = 0;
  int width = 0;
  int channels = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
           static_cast<std::size_t>(channels);
  }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Dense H x W x C array stored row-major in (y, x, c) order.
///
/// `float` is the production scalar. `double` instantiations exist so that
/// gradient checks can run the very same kernels without single-precision
/// rounding in the way.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  BasicTensor(int height, int width, int channels, T fill = T(0))
      : shape_{checked(height, width, channels)},
        data_(shape_.numel(), fill) {}
  explicit BasicTensor(Shape shape, T fill = T(0))
      : BasicTensor(shape.height, shape.width, shape.channels, fill) {}
  BasicTensor(int height, int width, int channels, std::vector<T> values)
      : shape_{checked(height, width, channels)}, data_(std::move(values)) {
    if (data_.size() != shape_.numel()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_.str());
    }
  }

  const Shape& shape() const { return shape_; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  int channels() const { return shape_.channels; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(shape_.width) +
            static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(shape_.channels) +
           static_cast<std::size_t>(c);
  }

  T& operator()(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
  const T& operator()(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

  T* pixel(int y, int x) { return data_.data() + index(y, x, 0); }
  const T* pixel(int y, int x) const { return data_.data() + index(y, x, 0); }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool operator==(const BasicTensor&) const = default;

  template <class U>
  BasicTensor<U> cast() const {
    BasicTensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  static Shape checked(int h, int w, int c) {
    if (h < 0 || w < 0 || c < 0) {
      throw ShapeError("negative tensor dimension " + Shape{h, w, c}.str());
    }
    return Shape{h, w, c};
  }

  Shape shape_{};
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

}  // namespace stereo4p
