#include <cstddef>
#include <limits>

#include "stereo4p/simd.hpp"

namespace stereo4p::simd {
namespace {

// Same tie semantics as the vector min/max instructions: the second
// operand wins unless the first is strictly smaller (larger).
inline float vmin(float a, float b) { return a < b ? a : b; }
inline float vmax(float a, float b) { return a > b ? a : b; }

void axpy_widen(double* acc, float a, const float* x, std::size_t n) {
  const double ad = a;
  for (std::size_t i = 0; i < n; ++i) acc[i] += ad * static_cast<double>(x[i]);
}

void accumulate_widen(double* acc, const float* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) acc[i] += static_cast<double>(x[i]);
}

void max_inplace(float* dst, const float* src, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = vmax(dst[i], src[i]);
}

void add_inplace(float* dst, const float* src, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

void add_bias_relu(const float* a, const float* b, const float* bias, float* out,
                   std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = vmax((a[i] + b[i]) + bias[i], 0.0f);
}

void gemv_widen(double* acc, const float* x, std::size_t xstride, std::size_t m, const float* w,
                std::size_t n) {
  for (std::size_t j = 0; j < m; ++j) {
    const double a = x[j * xstride];
    const float* row = w + j * n;
    for (std::size_t c = 0; c < n; ++c) acc[c] += a * static_cast<double>(row[c]);
  }
}

float sgm_step(const float* cost, const float* prev, float prev_min, const float* p1,
               const float* p2, float sentinel, float* out, std::size_t n) {
  float m = std::numeric_limits<float>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const float stay = prev[i];
    const float step = vmin(prev[i - 1] + p1[i], prev[i + 1] + p1[i]);
    const float jump = prev_min + p2[i];
    const float best = vmin(vmin(stay, step), jump);
    const float v = (cost[i] + best) - prev_min;
    out[i] = cost[i] == sentinel ? sentinel : v;
    m = vmin(out[i], m);
  }
  return m;
}

}  // namespace

namespace detail {
const Kernels scalar_kernels{
    &axpy_widen, &gemv_widen, &accumulate_widen, &max_inplace, &add_inplace, &add_bias_relu, &sgm_step,
};
}  // namespace detail

}  // namespace stereo4p::simd
