#include <atomic>
#include <cstdlib>
#include <string>

#include "stereo4p/error.hpp"
#include "stereo4p/simd.hpp"

namespace stereo4p::simd {
namespace {

bool host_has_avx2() {
#if defined(STEREO4P_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() {
  Isa isa = best_supported_isa();
  // STEREO4P_ISA=scalar forces the reference kernels.
  if (const char* env = std::getenv("STEREO4P_ISA")) {
    const std::string v(env);
    if (v == "scalar") isa = Isa::scalar;
  }
  return isa;
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  if (isa == Isa::scalar) return true;
  static const bool avx2 = host_has_avx2();
  return avx2;
}

Isa best_supported_isa() { return isa_supported(Isa::avx2) ? Isa::avx2 : Isa::scalar; }

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw ArgumentError("instruction set " + std::string(isa_name(isa)) +
                        " is not available on this host");
  }
  active().store(isa, std::memory_order_relaxed);
}

const Kernels& kernels_for(Isa isa) {
#if defined(STEREO4P_HAVE_AVX2)
  if (isa == Isa::avx2) return detail::avx2_kernels;
#endif
  (void)isa;
  return detail::scalar_kernels;
}

const Kernels& kernels() { return kernels_for(active_isa()); }

}  // namespace stereo4p::simd
