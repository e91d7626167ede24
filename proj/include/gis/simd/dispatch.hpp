#pragma once

#include <optional>
#include <string_view>

namespace gis::simd {

// Instruction-set tiers with dedicated kernel builds. `scalar` is the
// portable reference and always available.
enum class Isa { scalar, avx2, avx512 };

const char* isa_name(Isa isa);
std::optional<Isa> parse_isa(std::string_view name);

// Compiled in and supported by the running CPU.
bool isa_available(Isa isa);
Isa best_available_isa();

// The tier used by dispatching entry points. Defaults to the best available
// tier, or to $GIS_SIMD (scalar|avx2|avx512) when set.
Isa active_isa();
// Throws ConfigError when the tier is not available.
void set_active_isa(Isa isa);

class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_active_isa(isa); }
  ~ScopedIsa() { set_active_isa(previous_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

}  // namespace gis::simd
