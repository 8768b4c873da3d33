// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include <cstddef>
#include <limits>

#include "stereo4p/simd.hpp"

namespace stereo4p::simd {
namespace {

inline float vmin(float a, float b) { return a < b ? a : b; }
inline float vmax(float a, float b) { return a > b ? a : b; }

void axpy_widen(double* acc, float a, const float* x, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256d x0 = _mm256_cvtps_pd(_mm_loadu_ps(x + i));
    const __m256d x1 = _mm256_cvtps_pd(_mm_loadu_ps(x + i + 4));
    _mm256_storeu_pd(acc + i, _mm256_fmadd_pd(av, x0, _mm256_loadu_pd(acc + i)));
    _mm256_storeu_pd(acc + i + 4, _mm256_fmadd_pd(av, x1, _mm256_loadu_pd(acc + i + 4)));
  }
  for (; i + 4 <= n; i += 4) {
    const __m256d x0 = _mm256_cvtps_pd(_mm_loadu_ps(x + i));
    _mm256_storeu_pd(acc + i, _mm256_fmadd_pd(av, x0, _mm256_loadu_pd(acc + i)));
  }
  const double ad = a;
  for (; i < n; ++i) acc[i] += ad * static_cast<double>(x[i]);
}

// Sixteen (then four) output columns stay in registers while j runs, so
// each column still sums its terms in ascending j.
void gemv_widen(double* acc, const float* x, std::size_t xstride, std::size_t m, const float* w,
                std::size_t n) {
  std::size_t c = 0;
  for (; c + 16 <= n; c += 16) {
    __m256d a0 = _mm256_loadu_pd(acc + c);
    __m256d a1 = _mm256_loadu_pd(acc + c + 4);
    __m256d a2 = _mm256_loadu_pd(acc + c + 8);
    __m256d a3 = _mm256_loadu_pd(acc + c + 12);
    const float* row = w + c;
    for (std::size_t j = 0; j < m; ++j, row += n) {
      const __m256d xv = _mm256_set1_pd(static_cast<double>(x[j * xstride]));
      a0 = _mm256_fmadd_pd(xv, _mm256_cvtps_pd(_mm_loadu_ps(row)), a0);
      a1 = _mm256_fmadd_pd(xv, _mm256_cvtps_pd(_mm_loadu_ps(row + 4)), a1);
      a2 = _mm256_fmadd_pd(xv, _mm256_cvtps_pd(_mm_loadu_ps(row + 8)), a2);
      a3 = _mm256_fmadd_pd(xv, _mm256_cvtps_pd(_mm_loadu_ps(row + 12)), a3);
    }
    _mm256_storeu_pd(acc + c, a0);
    _mm256_storeu_pd(acc + c + 4, a1);
    _mm256_storeu_pd(acc + c + 8, a2);
    _mm256_storeu_pd(acc + c + 12, a3);
  }
  for (; c + 4 <= n; c += 4) {
    __m256d a0 = _mm256_loadu_pd(acc + c);
    const float* row = w + c;
    for (std::size_t j = 0; j < m; ++j, row += n) {
      const __m256d xv = _mm256_set1_pd(static_cast<double>(x[j * xstride]));
      a0 = _mm256_fmadd_pd(xv, _mm256_cvtps_pd(_mm_loadu_ps(row)), a0);
    }
    _mm256_storeu_pd(acc + c, a0);
  }
  for (; c < n; ++c) {
    double a = acc[c];
    for (std::size_t j = 0; j < m; ++j) a += static_cast<double>(x[j * xstride]) * w[j * n + c];
    acc[c] = a;
  }
}

void accumulate_widen(double* acc, const float* x, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d x0 = _mm256_cvtps_pd(_mm_loadu_ps(x + i));
    _mm256_storeu_pd(acc + i, _mm256_add_pd(_mm256_loadu_pd(acc + i), x0));
  }
  for (; i < n; ++i) acc[i] += static_cast<double>(x[i]);
}

void max_inplace(float* dst, const float* src, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(dst + i, _mm256_max_ps(_mm256_loadu_ps(dst + i), _mm256_loadu_ps(src + i)));
  }
  for (; i < n; ++i) dst[i] = vmax(dst[i], src[i]);
}

void add_inplace(float* dst, const float* src, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(dst + i, _mm256_add_ps(_mm256_loadu_ps(dst + i), _mm256_loadu_ps(src + i)));
  }
  for (; i < n; ++i) dst[i] += src[i];
}

void add_bias_relu(const float* a, const float* b, const float* bias, float* out,
                   std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 s = _mm256_add_ps(_mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)),
                                   _mm256_loadu_ps(bias + i));
    _mm256_storeu_ps(out + i, _mm256_max_ps(s, zero));
  }
  for (; i < n; ++i) out[i] = vmax((a[i] + b[i]) + bias[i], 0.0f);
}

float sgm_step(const float* cost, const float* prev, float prev_min, const float* p1,
               const float* p2, float sentinel, float* out, std::size_t n) {
  const __m256 pmin = _mm256_set1_ps(prev_min);
  const __m256 sent = _mm256_set1_ps(sentinel);
  __m256 mv = _mm256_set1_ps(std::numeric_limits<float>::infinity());
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 c = _mm256_loadu_ps(cost + i);
    const __m256 pen1 = _mm256_loadu_ps(p1 + i);
    const __m256 stay = _mm256_loadu_ps(prev + i);
    const __m256 step = _mm256_min_ps(_mm256_add_ps(_mm256_loadu_ps(prev + i - 1), pen1),
                                      _mm256_add_ps(_mm256_loadu_ps(prev + i + 1), pen1));
    const __m256 jump = _mm256_add_ps(pmin, _mm256_loadu_ps(p2 + i));
    const __m256 best = _mm256_min_ps(_mm256_min_ps(stay, step), jump);
    const __m256 v = _mm256_sub_ps(_mm256_add_ps(c, best), pmin);
    const __m256 is_sent = _mm256_cmp_ps(c, sent, _CMP_EQ_OQ);
    const __m256 r = _mm256_blendv_ps(v, sent, is_sent);
    _mm256_storeu_ps(out + i, r);
    mv = _mm256_min_ps(r, mv);
  }
  alignas(32) float lanes[8];
  _mm256_store_ps(lanes, mv);
  float m = std::numeric_limits<float>::infinity();
  for (float l : lanes) m = vmin(l, m);
  for (; i < n; ++i) {
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
const Kernels avx2_kernels{
    &axpy_widen,  &gemv_widen,    &accumulate_widen, &max_inplace,
    &add_inplace, &add_bias_relu, &sgm_step,
};
}  // namespace detail

}  // namespace stereo4p::simd
