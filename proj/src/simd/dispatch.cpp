#include "gis/simd/dispatch.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#include "gis/core/error.hpp"

namespace gis::simd {
namespace {

Isa initial_isa() {
  if (const char* env = std::getenv("GIS_SIMD")) {
    if (auto isa = parse_isa(env); isa && isa_available(*isa)) return *isa;
  }
  return best_available_isa();
}

std::atomic<Isa>& active_slot() {
  static std::atomic<Isa> slot{initial_isa()};
  return slot;
}

}  // namespace

const char* isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::avx512: return "avx512";
  }
  return "unknown";
}

std::optional<Isa> parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::scalar;
  if (name == "avx2") return Isa::avx2;
  if (name == "avx512") return Isa::avx512;
  return std::nullopt;
}

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
#if defined(GIS_X86_KERNELS)
    case Isa::avx2:
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    case Isa::avx512:
      return __builtin_cpu_supports("avx512f");
#else
    default:
      return false;
#endif
  }
  return false;
}

Isa best_available_isa() {
  if (isa_available(Isa::avx512)) return Isa::avx512;
  if (isa_available(Isa::avx2)) return Isa::avx2;
  return Isa::scalar;
}

Isa active_isa() { return active_slot().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_available(isa)) {
    throw ConfigError(std::string("SIMD tier not available on this build/CPU: ") +
                      isa_name(isa));
  }
  active_slot().store(isa, std::memory_order_relaxed);
}

}  // namespace gis::simd
