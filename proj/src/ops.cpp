#include "stereo4p/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <type_traits>

#include "stereo4p/parallel.hpp"
#include "stereo4p/simd.hpp"

namespace stereo4p {

std::string Shape::str() const {
  return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
}

void ConvGeometry::validate() const {
  if (kernel_h < 1 || kernel_w < 1 || kernel_h % 2 == 0 || kernel_w % 2 == 0) {
    throw ArgumentError("convolution kernel sides must be odd and positive, got " +
                        std::to_string(kernel_h) + "x" + std::to_string(kernel_w));
  }
  if (in_channels < 1 || out_channels < 1) {
    throw ArgumentError("convolution channel counts must be positive");
  }
}

Shape ConvGeometry::output_shape(const Shape& in) const {
  validate();
  if (in.channels != in_channels) {
    throw ShapeError("conv2d expects " + std::to_string(in_channels) + " input channels, got " +
                     in.str());
  }
  if (padding == Padding::same) return Shape{in.height, in.width, out_channels};
  if (in.height < kernel_h || in.width < kernel_w) {
    throw ShapeError("conv2d input " + in.str() + " is smaller than the " +
                     std::to_string(kernel_h) + "x" + std::to_string(kernel_w) + " kernel");
  }
  return Shape{in.height - kernel_h + 1, in.width - kernel_w + 1, out_channels};
}

namespace {

// acc[c] += sum_j x[j * xstride] * w[j * n + c], j ascending.
template <class T>
void gemv(const simd::Kernels& k, double* acc, const T* x, std::size_t xstride, std::size_t m,
          const T* w, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) {
    k.gemv_widen(acc, x, xstride, m, w, n);
  } else {
    for (std::size_t j = 0; j < m; ++j) {
      const double a = x[j * xstride];
      for (std::size_t c = 0; c < n; ++c) acc[c] += a * static_cast<double>(w[j * n + c]);
    }
  }
}

template <class T>
void accumulate(const simd::Kernels& k, double* acc, const T* x, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) {
    k.accumulate_widen(acc, x, n);
  } else {
    for (std::size_t i = 0; i < n; ++i) acc[i] += static_cast<double>(x[i]);
  }
}

template <class T>
void max_into(const simd::Kernels& k, T* dst, const T* src, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) {
    k.max_inplace(dst, src, n);
  } else {
    for (std::size_t i = 0; i < n; ++i) dst[i] = dst[i] > src[i] ? dst[i] : src[i];
  }
}

void check_pool_size(int size) {
  if (size < 1 || size % 2 == 0) {
    throw ArgumentError("pool size must be odd and positive, got " + std::to_string(size));
  }
}

void check_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": shape " + a.str() + " vs " + b.str());
}

}  // namespace

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const ConvGeometry& g,
                      std::span<const T> kernel, std::span<const T> bias) {
  const Shape out_shape = g.output_shape(input.shape());
  const auto& kern = simd::kernels();
  if (kernel.size() != g.kernel_size()) {
    throw ShapeError("conv2d kernel holds " + std::to_string(kernel.size()) +
                     " values, geometry needs " + std::to_string(g.kernel_size()));
  }
  if (bias.size() != static_cast<std::size_t>(g.out_channels)) {
    throw ShapeError("conv2d bias length " + std::to_string(bias.size()) + " != " +
                     std::to_string(g.out_channels));
  }

  BasicTensor<T> out(out_shape);
  const int pad_y = g.padding == Padding::same ? (g.kernel_h - 1) / 2 : 0;
  const int pad_x = g.padding == Padding::same ? (g.kernel_w - 1) / 2 : 0;
  const auto cout = static_cast<std::size_t>(g.out_channels);
  const int cin = g.in_channels;

  parallel_for(0, out_shape.height, [&](std::ptrdiff_t yy) {
    const int y = static_cast<int>(yy);
    std::vector<double> acc(cout);
    for (int x = 0; x < out_shape.width; ++x) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int ky = 0; ky < g.kernel_h; ++ky) {
        const int iy = y + ky - pad_y;
        if (iy < 0 || iy >= input.height()) continue;
        // Taps of one kernel row read a contiguous run of input pixels.
        const int kx0 = std::max(0, pad_x - x);
        const int kx1 = std::min(g.kernel_w, input.width() + pad_x - x);
        if (kx0 >= kx1) continue;
        const T* w = kernel.data() + (static_cast<std::size_t>(ky) * g.kernel_w + kx0) * cin * cout;
        gemv<T>(kern, acc.data(), input.pixel(iy, x + kx0 - pad_x), 1,
                static_cast<std::size_t>(kx1 - kx0) * cin, w, cout);
      }
      T* o = out.pixel(y, x);
      for (std::size_t co = 0; co < cout; ++co) {
        o[co] = static_cast<T>(acc[co] + static_cast<double>(bias[co]));
      }
    }
  });
  return out;
}

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  BasicTensor<T> out(input.shape());
  const T* src = input.data();
  T* dst = out.data();
  for (std::size_t i = 0; i < input.size(); ++i) dst[i] = src[i] > T(0) ? src[i] : T(0);
  return out;
}

template <class T>
BasicTensor<T> pool(const BasicTensor<T>& input, int size, PoolMode mode) {
  check_pool_size(size);
  if (size == 1) return input;
  const int r = size / 2;
  const auto& kern = simd::kernels();
  const int H = input.height();
  const int W = input.width();
  const auto C = static_cast<std::size_t>(input.channels());
  BasicTensor<T> out(input.shape());

  if (mode == PoolMode::max) {
    // Separable: row maxima, then column maxima of those.
    BasicTensor<T> rows(input.shape());
    parallel_for(0, H, [&](std::ptrdiff_t yy) {
      const int y = static_cast<int>(yy);
      for (int x = 0; x < W; ++x) {
        T* dst = rows.pixel(y, x);
        const int x0 = std::max(0, x - r);
        const int x1 = std::min(W - 1, x + r);
        std::copy_n(input.pixel(y, x0), C, dst);
        for (int xx = x0 + 1; xx <= x1; ++xx) max_into<T>(kern, dst, input.pixel(y, xx), C);
      }
    });
    parallel_for(0, H, [&](std::ptrdiff_t yy) {
      const int y = static_cast<int>(yy);
      const int y0 = std::max(0, y - r);
      const int y1 = std::min(H - 1, y + r);
      for (int x = 0; x < W; ++x) {
        T* dst = out.pixel(y, x);
        std::copy_n(rows.pixel(y0, x), C, dst);
        for (int ry = y0 + 1; ry <= y1; ++ry) max_into<T>(kern, dst, rows.pixel(ry, x), C);
      }
    });
    return out;
  }

  // Mean over the clipped window; sums kept in double across both passes.
  std::vector<double> rows(input.size());
  parallel_for(0, H, [&](std::ptrdiff_t yy) {
    const int y = static_cast<int>(yy);
    for (int x = 0; x < W; ++x) {
      double* dst = rows.data() + input.index(y, x, 0);
      std::fill_n(dst, C, 0.0);
      const int x0 = std::max(0, x - r);
      const int x1 = std::min(W - 1, x + r);
      for (int xx = x0; xx <= x1; ++xx) accumulate<T>(kern, dst, input.pixel(y, xx), C);
    }
  });
  parallel_for(0, H, [&](std::ptrdiff_t yy) {
    const int y = static_cast<int>(yy);
    const int y0 = std::max(0, y - r);
    const int y1 = std::min(H - 1, y + r);
    std::vector<double> acc(C);
    for (int x = 0; x < W; ++x) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int ry = y0; ry <= y1; ++ry) {
        const double* src = rows.data() + input.index(ry, x, 0);
        for (std::size_t c = 0; c < C; ++c) acc[c] += src[c];
      }
      const int count = (y1 - y0 + 1) * (std::min(W - 1, x + r) - std::max(0, x - r) + 1);
      T* dst = out.pixel(y, x);
      for (std::size_t c = 0; c < C; ++c) dst[c] = static_cast<T>(acc[c] / count);
    }
  });
  return out;
}

template <class T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>* const> parts) {
  if (parts.empty()) throw ShapeError("concat_channels needs at least one part");
  const int H = parts[0]->height();
  const int W = parts[0]->width();
  int total = 0;
  for (const auto* p : parts) {
    if (p->height() != H || p->width() != W) {
      throw ShapeError("concat_channels spatial mismatch: " + parts[0]->shape().str() + " vs " +
                       p->shape().str());
    }
    total += p->channels();
  }
  BasicTensor<T> out(H, W, total);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      T* dst = out.pixel(y, x);
      for (const auto* p : parts) {
        dst = std::copy_n(p->pixel(y, x), p->channels(), dst);
      }
    }
  }
  return out;
}

template <class T>
std::vector<BasicTensor<T>> split_channels(const BasicTensor<T>& input,
                                           std::span<const int> channel_counts) {
  int total = 0;
  for (int c : channel_counts) {
    if (c < 0) throw ShapeError("split_channels: negative channel count");
    total += c;
  }
  if (total != input.channels()) {
    throw ShapeError("split_channels: counts sum to " + std::to_string(total) + ", tensor has " +
                     std::to_string(input.channels()) + " channels");
  }
  std::vector<BasicTensor<T>> parts;
  parts.reserve(channel_counts.size());
  for (int c : channel_counts) parts.emplace_back(input.height(), input.width(), c);
  for (int y = 0; y < input.height(); ++y) {
    for (int x = 0; x < input.width(); ++x) {
      const T* src = input.pixel(y, x);
      for (auto& p : parts) {
        std::copy_n(src, p.channels(), p.pixel(y, x));
        src += p.channels();
      }
    }
  }
  return parts;
}

template <class T>
BasicTensor<T> crop(const BasicTensor<T>& input, int y0, int x0, int height, int width) {
  if (y0 < 0 || x0 < 0 || height < 0 || width < 0 || y0 + height > input.height() ||
      x0 + width > input.width()) {
    throw ShapeError("crop window (" + std::to_string(y0) + "," + std::to_string(x0) + ") " +
                     std::to_string(height) + "x" + std::to_string(width) +
                     " exceeds tensor " + input.shape().str());
  }
  BasicTensor<T> out(height, width, input.channels());
  for (int y = 0; y < height; ++y) {
    std::copy_n(input.pixel(y0 + y, x0), static_cast<std::size_t>(width) * input.channels(),
                out.pixel(y, 0));
  }
  return out;
}

template <class T>
BasicTensor<T> pad(const BasicTensor<T>& input, int border, T value) {
  if (border < 0) throw ArgumentError("pad border must be nonnegative");
  BasicTensor<T> out(input.height() + 2 * border, input.width() + 2 * border, input.channels(),
                     value);
  for (int y = 0; y < input.height(); ++y) {
    std::copy_n(input.pixel(y, 0), static_cast<std::size_t>(input.width()) * input.channels(),
                out.pixel(y + border, border));
  }
  return out;
}

template <class T>
BasicTensor<T> sigmoid(const BasicTensor<T>& input) {
  BasicTensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double z = input.data()[i];
    out.data()[i] = static_cast<T>(1.0 / (1.0 + std::exp(-z)));
  }
  return out;
}

template <class T>
ConvGradients<T> conv2d_backward(const BasicTensor<T>& input, const ConvGeometry& g,
                                 std::span<const T> kernel, const BasicTensor<T>& upstream) {
  const Shape out_shape = g.output_shape(input.shape());
  const auto& kern = simd::kernels();
  check_same_shape(upstream.shape(), out_shape, "conv2d_backward upstream");
  if (kernel.size() != g.kernel_size()) throw ShapeError("conv2d_backward kernel size mismatch");

  const int pad_y = g.padding == Padding::same ? (g.kernel_h - 1) / 2 : 0;
  const int pad_x = g.padding == Padding::same ? (g.kernel_w - 1) / 2 : 0;
  const auto cout = static_cast<std::size_t>(g.out_channels);
  const int cin = g.in_channels;

  std::vector<double> dk(g.kernel_size(), 0.0);
  std::vector<double> db(cout, 0.0);
  // Each kernel entry sums its terms over output pixels in raster order:
  // rows outermost, then one strided gemv along the row per (tap, ci).
  for (int y = 0; y < out_shape.height; ++y) {
    for (int x = 0; x < out_shape.width; ++x) accumulate<T>(kern, db.data(), upstream.pixel(y, x), cout);
    for (int ky = 0; ky < g.kernel_h; ++ky) {
      const int iy = y + ky - pad_y;
      if (iy < 0 || iy >= input.height()) continue;
      for (int kx = 0; kx < g.kernel_w; ++kx) {
        const int x0 = std::max(0, pad_x - kx);
        const int x1 = std::min(out_shape.width, input.width() + pad_x - kx);
        if (x0 >= x1) continue;
        double* dkw = dk.data() + (static_cast<std::size_t>(ky) * g.kernel_w + kx) * cin * cout;
        const T* px = input.pixel(iy, x0 + kx - pad_x);
        for (int ci = 0; ci < cin; ++ci) {
          gemv<T>(kern, dkw + ci * cout, px + ci, static_cast<std::size_t>(cin),
                  static_cast<std::size_t>(x1 - x0), upstream.pixel(y, x0), cout);
        }
      }
    }
  }

  // Input gradient gathered per input pixel so rows are independent. The
  // kernel is stored as (ky, kW-1-kx, co, ci) so that the taps of one
  // kernel row pair with a contiguous run of upstream pixels.
  std::vector<T> kt(kernel.size());
  for (int ky = 0; ky < g.kernel_h; ++ky) {
    for (int kx = 0; kx < g.kernel_w; ++kx) {
      const std::size_t src = static_cast<std::size_t>(ky) * g.kernel_w + kx;
      const std::size_t dst = static_cast<std::size_t>(ky) * g.kernel_w + (g.kernel_w - 1 - kx);
      for (int ci = 0; ci < cin; ++ci) {
        for (std::size_t co = 0; co < cout; ++co) {
          kt[(dst * cout + co) * cin + ci] = kernel[(src * cin + ci) * cout + co];
        }
      }
    }
  }
  BasicTensor<T> din(input.shape());
  parallel_for(0, input.height(), [&](std::ptrdiff_t iyy) {
    const int iy = static_cast<int>(iyy);
    std::vector<double> acc(static_cast<std::size_t>(cin));
    for (int ix = 0; ix < input.width(); ++ix) {
      std::fill(acc.begin(), acc.end(), 0.0);
      // Upstream column x = ix - kx + pad_x; flipped tap f = kW-1-kx.
      const int f0 = std::max(0, g.kernel_w - 1 - ix - pad_x);
      const int f1 = std::min(g.kernel_w, out_shape.width + g.kernel_w - 1 - ix - pad_x);
      for (int ky = 0; ky < g.kernel_h; ++ky) {
        const int y = iy - ky + pad_y;
        if (y < 0 || y >= out_shape.height || f0 >= f1) continue;
        const int x0 = ix - (g.kernel_w - 1 - f0) + pad_x;
        const T* w = kt.data() + (static_cast<std::size_t>(ky) * g.kernel_w + f0) * cout * cin;
        gemv<T>(kern, acc.data(), upstream.pixel(y, x0), 1,
                static_cast<std::size_t>(f1 - f0) * cout, w, static_cast<std::size_t>(cin));
      }
      T* dst = din.pixel(iy, ix);
      for (int ci = 0; ci < cin; ++ci) dst[ci] = static_cast<T>(acc[static_cast<std::size_t>(ci)]);
    }
  });

  ConvGradients<T> grads{std::move(din), std::vector<T>(dk.size()), std::vector<T>(cout)};
  for (std::size_t i = 0; i < dk.size(); ++i) grads.kernel[i] = static_cast<T>(dk[i]);
  for (std::size_t i = 0; i < cout; ++i) grads.bias[i] = static_cast<T>(db[i]);
  return grads;
}

template <class T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& upstream) {
  check_same_shape(input.shape(), upstream.shape(), "relu_backward");
  BasicTensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    out.data()[i] = input.data()[i] > T(0) ? upstream.data()[i] : T(0);
  }
  return out;
}

template <class T>
std::vector<int> pool_argmax(const BasicTensor<T>& input, int size) {
  check_pool_size(size);
  const int r = size / 2;
  const int H = input.height();
  const int W = input.width();
  const int C = input.channels();
  std::vector<int> arg(input.size());
  parallel_for(0, H, [&](std::ptrdiff_t yy) {
    const int y = static_cast<int>(yy);
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < C; ++c) {
        int best = -1;
        T best_v = T(0);
        for (int wy = std::max(0, y - r); wy <= std::min(H - 1, y + r); ++wy) {
          for (int wx = std::max(0, x - r); wx <= std::min(W - 1, x + r); ++wx) {
            const T v = input(wy, wx, c);
            if (best < 0 || v > best_v) {
              best = wy * W + wx;
              best_v = v;
            }
          }
        }
        arg[input.index(y, x, c)] = best;
      }
    }
  });
  return arg;
}

template <class T>
BasicTensor<T> pool_backward(const BasicTensor<T>& input, int size, PoolMode mode,
                             const BasicTensor<T>& upstream) {
  check_pool_size(size);
  check_same_shape(input.shape(), upstream.shape(), "pool_backward");
  if (size == 1) return upstream;
  const int r = size / 2;
  const int H = input.height();
  const int W = input.width();
  const int C = input.channels();

  if (mode == PoolMode::max) {
    const std::vector<int> arg = pool_argmax(input, size);
    std::vector<double> acc(input.size(), 0.0);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        for (int c = 0; c < C; ++c) {
          const std::size_t i = input.index(y, x, c);
          const int a = arg[i];
          acc[input.index(a / W, a % W, c)] += static_cast<double>(upstream.data()[i]);
        }
      }
    }
    BasicTensor<T> out(input.shape());
    for (std::size_t i = 0; i < acc.size(); ++i) out.data()[i] = static_cast<T>(acc[i]);
    return out;
  }

  // Mean: every input pixel receives upstream/count from each window it is in.
  BasicTensor<T> out(input.shape());
  parallel_for(0, H, [&](std::ptrdiff_t qyy) {
    const int qy = static_cast<int>(qyy);
    std::vector<double> acc(static_cast<std::size_t>(C));
    for (int qx = 0; qx < W; ++qx) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int y = std::max(0, qy - r); y <= std::min(H - 1, qy + r); ++y) {
        const int ch = std::min(H - 1, y + r) - std::max(0, y - r) + 1;
        for (int x = std::max(0, qx - r); x <= std::min(W - 1, qx + r); ++x) {
          const int cw = std::min(W - 1, x + r) - std::max(0, x - r) + 1;
          const double inv = 1.0 / (ch * cw);
          const T* up = upstream.pixel(y, x);
          for (int c = 0; c < C; ++c) acc[static_cast<std::size_t>(c)] += up[c] * inv;
        }
      }
      T* dst = out.pixel(qy, qx);
      for (int c = 0; c < C; ++c) dst[c] = static_cast<T>(acc[static_cast<std::size_t>(c)]);
    }
  });
  return out;
}

template <class T>
BasicTensor<T> crop_backward(const Shape& input_shape, int y0, int x0,
                             const BasicTensor<T>& upstream) {
  if (upstream.channels() != input_shape.channels || y0 < 0 || x0 < 0 ||
      y0 + upstream.height() > input_shape.height || x0 + upstream.width() > input_shape.width) {
    throw ShapeError("crop_backward window does not fit " + input_shape.str());
  }
  BasicTensor<T> out(input_shape);
  for (int y = 0; y < upstream.height(); ++y) {
    std::copy_n(upstream.pixel(y, 0),
                static_cast<std::size_t>(upstream.width()) * upstream.channels(),
                out.pixel(y0 + y, x0));
  }
  return out;
}

#define STEREO4P_INSTANTIATE_OPS(T)                                                          \
  template BasicTensor<T> conv2d<T>(const BasicTensor<T>&, const ConvGeometry&,             \
                                    std::span<const T>, std::span<const T>);                \
  template BasicTensor<T> relu<T>(const BasicTensor<T>&);                                   \
  template BasicTensor<T> pool<T>(const BasicTensor<T>&, int, PoolMode);                    \
  template BasicTensor<T> concat_channels<T>(std::span<const BasicTensor<T>* const>);       \
  template std::vector<BasicTensor<T>> split_channels<T>(const BasicTensor<T>&,             \
                                                         std::span<const int>);             \
  template BasicTensor<T> crop<T>(const BasicTensor<T>&, int, int, int, int);               \
  template BasicTensor<T> pad<T>(const BasicTensor<T>&, int, T);                            \
  template BasicTensor<T> sigmoid<T>(const BasicTensor<T>&);                                \
  template ConvGradients<T> conv2d_backward<T>(const BasicTensor<T>&, const ConvGeometry&,  \
                                               std::span<const T>, const BasicTensor<T>&);  \
  template BasicTensor<T> relu_backward<T>(const BasicTensor<T>&, const BasicTensor<T>&);   \
  template BasicTensor<T> pool_backward<T>(const BasicTensor<T>&, int, PoolMode,            \
                                           const BasicTensor<T>&);                          \
  template BasicTensor<T> crop_backward<T>(const Shape&, int, int, const BasicTensor<T>&);  \
  template std::vector<int> pool_argmax<T>(const BasicTensor<T>&, int);

STEREO4P_INSTANTIATE_OPS(float)
STEREO4P_INSTANTIATE_OPS(double)

#undef STEREO4P_INSTANTIATE_OPS

}  // namespace stereo4p
