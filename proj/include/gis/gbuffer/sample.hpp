#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gis/core/tensor.hpp"

namespace gis {

// Ordered material alphabet. Labels only; appearance parameters live with
// the scene generator and are never part of network input.
struct MaterialPalette {
  struct Entry {
    int id = 0;
    std::string name;
  };
  std::vector<Entry> entries;

  int size() const { return static_cast<int>(entries.size()); }
  // ids 0..n-1 in order, names unique and non-empty; throws ConfigError.
  void validate() const;
  // FNV-1a over "id:name;" records, as 16 hex digits.
  std::string hash() const;
  int find(std::string_view name) const;  // -1 when absent

  static MaterialPalette default_palette();
};

// One conditioning sample. All arrays are (1, C, H, W) planar float.
struct GBufferSample {
  Tensor<float> normals;     // 3 channels, unit length on foreground, 0 elsewhere
  Tensor<float> depth;       // ray distance on foreground, 0 elsewhere
  Tensor<float> materials;   // one-hot over the palette on foreground
  Tensor<float> mask;        // {0,1}
  Tensor<float> background;  // RGB in [0,1]
  std::optional<Tensor<float>> target;
  float z_near = 1.0f;

  int height() const { return mask.h(); }
  int width() const { return mask.w(); }
  int foreground_pixels() const;

  // Zero-filled sample of the given geometry.
  static GBufferSample blank(int height, int width, int materials, float z_near);
};

struct Violation {
  std::string invariant;
  int row = -1;
  int col = -1;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::string str() const;
};

constexpr float kUnitNormalTolerance = 1e-4f;

// Checks every per-pixel invariant, reporting the first offending pixel of
// each. `levels` adds the divisibility requirement by 2^(levels-1).
// Inconsistent array shapes throw ShapeError instead.
ValidationReport validate_sample(const GBufferSample& sample, const MaterialPalette& palette,
                                 int levels = 1);

// Normalized disparity z_near / z on foreground, exactly 0 on background.
// Foreground depth below z_near clamps to 1 (counted in `clamped`); depth <= 0
// on foreground throws ValidationError.
Tensor<float> encode_depth(const Tensor<float>& depth, const Tensor<float>& mask,
                           float z_near, int* clamped = nullptr);

// Box-filter downscale of a mask by `factor` (a power of two dividing H, W),
// producing soft occupancy in [0,1].
template <class T>
Tensor<T> downscale_mask(const Tensor<T>& mask, int factor);

// Which conditioning channels feed the generator. The background image is
// always present; the mask cannot be excluded because the losses use it.
struct Modalities {
  bool normals = true;
  bool depth = true;
  bool materials = true;
  bool mask = true;

  int channels(int palette_size) const {
    return (normals ? 3 : 0) + (depth ? 1 : 0) + (materials ? palette_size : 0) +
           (mask ? 1 : 0) + 3;
  }
  // "none" | "normals" | "depth" | "materials"; "mask" throws ConfigError.
  static Modalities excluding(std::string_view modality);
  std::string excluded_name() const;
  bool operator==(const Modalities&) const = default;
};

// Per-level conditioning input, coarsest first. Level i has resolution
// full / 2^(L-1-i); batch dimension matches the number of stacked samples.
struct InputPyramid {
  std::vector<Tensor<float>> levels;

  int level_count() const { return static_cast<int>(levels.size()); }
  int channels() const { return levels.empty() ? 0 : levels.front().c(); }
  int batch() const { return levels.empty() ? 0 : levels.front().n(); }
};

// Channels are concatenated as normals, disparity, materials, mask,
// background (excluded modalities dropped). Coarser levels are 2x average
// pools of their successor with normals renormalized where the pooled
// magnitude exceeds 1e-6 (zeroed otherwise).
InputPyramid build_pyramid(const GBufferSample& sample, int levels,
                           const Modalities& modalities = {});
InputPyramid stack_pyramids(std::span<const InputPyramid> pyramids);

constexpr float kNormalRenormThreshold = 1e-6f;

}  // namespace gis
