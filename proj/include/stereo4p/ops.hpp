#pragma once

#include <span>
#include <vector>

#include "stereo4p/tensor.hpp"

namespace stereo4p {

enum class Padding { valid, same };
enum class PoolMode { max, mean };

struct ConvGeometry {
  int kernel_h = 1;
  int kernel_w = 1;
  int in_channels = 1;
  int out_channels = 1;
  Padding padding = Padding::valid;

  /// Throws ArgumentError unless both kernel sides are odd and positive.
  void validate() const;
  std::size_t kernel_size() const {
    return static_cast<std::size_t>(kernel_h) * kernel_w * in_channels * out_channels;
  }
  /// Output shape for `in`; throws ShapeError on channel or size mismatch.
  Shape output_shape(const Shape& in) const;

  bool operator==(const ConvGeometry&) const = default;
};

/// Kernel is kH x kW x (Cin*Cout) with Cout varying fastest, so that
/// element (ky, kx, ci, co) sits at ((ky*kW + kx)*Cin + ci)*Cout + co.
template <class T>
struct BasicConvLayer {
  ConvGeometry geometry;
  BasicTensor<T> kernel;
  std::vector<T> bias;

  static BasicConvLayer zeros(const ConvGeometry& g) {
    g.validate();
    return BasicConvLayer{g, BasicTensor<T>(g.kernel_h, g.kernel_w, g.in_channels * g.out_channels),
                          std::vector<T>(static_cast<std::size_t>(g.out_channels), T(0))};
  }
  std::size_t index(int ky, int kx, int ci, int co) const {
    return ((static_cast<std::size_t>(ky) * geometry.kernel_w + kx) * geometry.in_channels + ci) *
               geometry.out_channels +
           co;
  }
  T& weight(int ky, int kx, int ci, int co) { return kernel.data()[index(ky, kx, ci, co)]; }
  T weight(int ky, int kx, int ci, int co) const { return kernel.data()[index(ky, kx, ci, co)]; }
  bool operator==(const BasicConvLayer&) const = default;
};

using ConvLayer = BasicConvLayer<float>;

// ---------------------------------------------------------------- forward

/// Cross-correlation plus bias. Inner products accumulate in double.
template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const ConvGeometry& geometry,
                      std::span<const T> kernel, std::span<const T> bias);

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicConvLayer<T>& layer) {
  return conv2d<T>(input, layer.geometry, layer.kernel.values(), layer.bias);
}

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& input);

/// Stride-1 pooling with an odd `size` x `size` window clipped to the
/// image; output has the input's shape.
template <class T>
BasicTensor<T> pool(const BasicTensor<T>& input, int size, PoolMode mode);

template <class T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>* const> parts);

template <class T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>> parts) {
  std::vector<const BasicTensor<T>*> ptrs;
  ptrs.reserve(parts.size());
  for (const auto& p : parts) ptrs.push_back(&p);
  return concat_channels<T>(std::span<const BasicTensor<T>* const>(ptrs));
}

/// Inverse of concat_channels: slices `input` into consecutive channel
/// groups of the given sizes.
template <class T>
std::vector<BasicTensor<T>> split_channels(const BasicTensor<T>& input,
                                           std::span<const int> channel_counts);

template <class T>
BasicTensor<T> crop(const BasicTensor<T>& input, int y0, int x0, int height, int width);

/// Constant border of `border` pixels on every side.
template <class T>
BasicTensor<T> pad(const BasicTensor<T>& input, int border, T value);

template <class T>
BasicTensor<T> sigmoid(const BasicTensor<T>& input);

// --------------------------------------------------------------- backward

template <class T>
struct ConvGradients {
  BasicTensor<T> input;
  std::vector<T> kernel;
  std::vector<T> bias;
};

template <class T>
ConvGradients<T> conv2d_backward(const BasicTensor<T>& input, const ConvGeometry& geometry,
                                 std::span<const T> kernel, const BasicTensor<T>& upstream);

template <class T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& upstream);

/// Max mode routes each output gradient to the first maximum of its
/// window in row-major scan order; mean mode spreads it uniformly.
template <class T>
BasicTensor<T> pool_backward(const BasicTensor<T>& input, int size, PoolMode mode,
                             const BasicTensor<T>& upstream);

template <class T>
BasicTensor<T> crop_backward(const Shape& input_shape, int y0, int x0,
                             const BasicTensor<T>& upstream);

/// Flat (y, x) index of the first window maximum per output element,
/// shaped like the input. Used for max-pool backward and kink tracking.
template <class T>
std::vector<int> pool_argmax(const BasicTensor<T>& input, int size);

}  // namespace stereo4p
