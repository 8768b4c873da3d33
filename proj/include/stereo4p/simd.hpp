#pragma once

#include <cstddef>
#include <string_view>

// Runtime-dispatched inner loops. Every kernel has a scalar reference and
// an AVX2/FMA variant; the variants are bit-identical by construction
// (lane-parallel over independent outputs, same per-element operation
// order, float*float products exact in double so FMA does not round).

namespace stereo4p::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

struct Kernels {
  // acc[i] += double(a) * double(x[i])
  void (*axpy_widen)(double* acc, float a, const float* x, std::size_t n);
  // acc[c] += sum over j ascending of double(x[j * xstride]) * double(w[j * n + c])
  void (*gemv_widen)(double* acc, const float* x, std::size_t xstride, std::size_t m,
                     const float* w, std::size_t n);
  // acc[i] += double(x[i])
  void (*accumulate_widen)(double* acc, const float* x, std::size_t n);
  // dst[i] = max(dst[i], src[i])
  void (*max_inplace)(float* dst, const float* src, std::size_t n);
  // dst[i] += src[i]
  void (*add_inplace)(float* dst, const float* src, std::size_t n);
  // out[i] = max(0, (a[i] + b[i]) + bias[i])
  void (*add_bias_relu)(const float* a, const float* b, const float* bias, float* out,
                        std::size_t n);
  // One step of the semi-global matching recurrence along a path.
  // `prev` points at element 0 of a buffer padded with one +inf entry on
  // each side. Entries whose cost equals `sentinel` are written as
  // `sentinel`. Returns the minimum of `out`.
  float (*sgm_step)(const float* cost, const float* prev, float prev_min, const float* p1,
                    const float* p2, float sentinel, float* out, std::size_t n);
};

Isa best_supported_isa();
Isa active_isa();
/// Throws ArgumentError when the host cannot execute `isa`.
void set_active_isa(Isa isa);
bool isa_supported(Isa isa);

const Kernels& kernels();
const Kernels& kernels_for(Isa isa);

/// Pins the active ISA for the lifetime of the guard.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_active_isa(isa); }
  ~ScopedIsa() { set_active_isa(previous_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

namespace detail {
extern const Kernels scalar_kernels;
#if defined(STEREO4P_HAVE_AVX2)
extern const Kernels avx2_kernels;
#endif
}  // namespace detail

}  // namespace stereo4p::simd
