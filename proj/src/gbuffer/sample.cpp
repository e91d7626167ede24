#include "gis/gbuffer/sample.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <set>
#include <sstream>

#include "gis/core/error.hpp"
#include "gis/nn/ops.hpp"

namespace gis {

void MaterialPalette::validate() const {
  std::set<std::string> names;
  for (int i = 0; i < size(); ++i) {
    const auto& e = entries[i];
    if (e.id != i) {
      throw ConfigError("palette ids must be contiguous from 0; entry " +
                        std::to_string(i) + " has id " + std::to_string(e.id));
    }
    if (e.name.empty()) throw ConfigError("palette entry " + std::to_string(i) + " has no name");
    if (!names.insert(e.name).second) throw ConfigError("duplicate palette name: " + e.name);
  }
  if (entries.empty()) throw ConfigError("palette is empty");
}

std::string MaterialPalette::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::string_view s) {
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& e : entries) {
    feed(std::to_string(e.id));
    feed(":");
    feed(e.name);
    feed(";");
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int MaterialPalette::find(std::string_view name) const {
  for (const auto& e : entries) {
    if (e.name == name) return e.id;
  }
  return -1;
}

MaterialPalette MaterialPalette::default_palette() {
  return {{{0, "matte-red"},
           {1, "matte-blue"},
           {2, "matte-green"},
           {3, "glossy-metal"},
           {4, "chrome"},
           {5, "glass"}}};
}

int GBufferSample::foreground_pixels() const {
  int count = 0;
  for (float v : mask.span()) count += v > 0.5f ? 1 : 0;
  return count;
}

GBufferSample GBufferSample::blank(int height, int width, int materials, float z_near) {
  GBufferSample s;
  s.normals = Tensor<float>(1, 3, height, width);
  s.depth = Tensor<float>(1, 1, height, width);
  s.materials = Tensor<float>(1, materials, height, width);
  s.mask = Tensor<float>(1, 1, height, width);
  s.background = Tensor<float>(1, 3, height, width);
  s.z_near = z_near;
  return s;
}

std::string ValidationReport::str() const {
  std::ostringstream os;
  for (const auto& v : violations) os << v.invariant << ": " << v.message << '\n';
  return os.str();
}

namespace {

void check_plane(const Tensor<float>& t, int channels, int h, int w, const char* name) {
  if (t.n() != 1 || t.c() != channels || t.h() != h || t.w() != w) {
    throw ShapeError(std::string(name) + ": expected shape " +
                     Shape4{1, channels, h, w}.str() + ", got " + t.shape().str());
  }
}

std::string at(int r, int c) {
  return "(" + std::to_string(r) + "," + std::to_string(c) + ")";
}

class Reporter {
 public:
  explicit Reporter(ValidationReport& r) : report_(r) {}

  // Records only the first offender per invariant.
  void flag(const std::string& invariant, int r, int c, const std::string& what) {
    if (!seen_.insert(invariant).second) return;
    report_.violations.push_back({invariant, r, c, what + " at " + at(r, c)});
  }

 private:
  ValidationReport& report_;
  std::set<std::string> seen_;
};

void check_unit_range(const Tensor<float>& img, const char* invariant, const char* what,
                      Reporter& rep) {
  for (int c = 0; c < img.c(); ++c) {
    for (int y = 0; y < img.h(); ++y) {
      for (int x = 0; x < img.w(); ++x) {
        const float v = img(0, c, y, x);
        if (!(v >= 0.0f && v <= 1.0f)) {
          rep.flag(invariant, y, x, what);
          return;
        }
      }
    }
  }
}

}  // namespace

ValidationReport validate_sample(const GBufferSample& s, const MaterialPalette& palette,
                                 int levels) {
  const int h = s.mask.h();
  const int w = s.mask.w();
  const int nm = palette.size();
  check_plane(s.mask, 1, h, w, "mask");
  check_plane(s.normals, 3, h, w, "normals");
  check_plane(s.depth, 1, h, w, "depth");
  check_plane(s.materials, nm, h, w, "materials");
  check_plane(s.background, 3, h, w, "background");
  if (s.target) check_plane(*s.target, 3, h, w, "target");

  ValidationReport report;
  Reporter rep(report);
  if (levels > 1) {
    const int div = 1 << (levels - 1);
    if (h % div != 0 || w % div != 0) {
      report.violations.push_back(
          {"divisibility", -1, -1,
           "resolution " + std::to_string(h) + "x" + std::to_string(w) +
               " not divisible by " + std::to_string(div)});
    }
  }
  if (!(s.z_near > 0.0f)) report.violations.push_back({"z-near", -1, -1, "z_near must be positive"});

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float m = s.mask(0, 0, y, x);
      if (m != 0.0f && m != 1.0f) {
        rep.flag("mask-binary", y, x, "mask value not in {0,1}");
        continue;
      }
      const bool fg = m == 1.0f;
      const float nx = s.normals(0, 0, y, x), ny = s.normals(0, 1, y, x),
                  nz = s.normals(0, 2, y, x);
      const float d = s.depth(0, 0, y, x);
      int ones = 0;
      bool clean = true;
      for (int k = 0; k < nm; ++k) {
        const float v = s.materials(0, k, y, x);
        if (v == 1.0f) {
          ++ones;
        } else if (v != 0.0f) {
          clean = false;
        }
      }
      if (!std::isfinite(d)) rep.flag("depth-finite", y, x, "non-finite depth");
      if ((d > 0.0f) != fg) rep.flag("depth-mask", y, x, "depth/mask mismatch");
      if (fg) {
        const float len = std::sqrt(nx * nx + ny * ny + nz * nz);
        if (!(std::fabs(len - 1.0f) <= kUnitNormalTolerance)) {
          rep.flag("unit-normal", y, x, "non-unit normal");
        }
        if (ones != 1 || !clean) rep.flag("one-hot", y, x, "not one-hot");
      } else {
        if (nx != 0.0f || ny != 0.0f || nz != 0.0f) {
          rep.flag("background-normal", y, x, "non-zero background normal");
        }
        if (ones != 0 || !clean) rep.flag("background-material", y, x, "non-zero background material");
      }
    }
  }
  check_unit_range(s.background, "background-range", "background value outside [0,1]", rep);
  if (s.target) check_unit_range(*s.target, "target-range", "target value outside [0,1]", rep);
  return report;
}

Tensor<float> encode_depth(const Tensor<float>& depth, const Tensor<float>& mask, float z_near,
                           int* clamped) {
  require_shape(depth.shape(), mask.shape(), "encode_depth");
  if (!(z_near > 0.0f)) throw ValidationError("encode_depth: z_near must be positive");
  Tensor<float> out(depth.shape());
  int count = 0;
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (mask[i] <= 0.0f) continue;
    const float z = depth[i];
    if (!(z > 0.0f)) {
      throw ValidationError("encode_depth: non-positive foreground depth at index " +
                            std::to_string(i));
    }
    if (z < z_near) {
      out[i] = 1.0f;
      ++count;
    } else {
      out[i] = z_near / z;
    }
  }
  if (clamped) *clamped = count;
  return out;
}

template <class T>
Tensor<T> downscale_mask(const Tensor<T>& mask, int factor) {
  if (factor <= 0 || (factor & (factor - 1)) != 0) {
    throw ShapeError("downscale_mask: factor must be a power of two, got " +
                     std::to_string(factor));
  }
  if (mask.h() % factor != 0 || mask.w() % factor != 0) {
    throw ShapeError("downscale_mask: factor " + std::to_string(factor) +
                     " does not divide " + std::to_string(mask.h()) + "x" +
                     std::to_string(mask.w()));
  }
  const int oh = mask.h() / factor, ow = mask.w() / factor;
  Tensor<T> out(mask.n(), mask.c(), oh, ow);
  const T scale = T(1) / static_cast<T>(factor * factor);
  for (int n = 0; n < mask.n(); ++n) {
    for (int c = 0; c < mask.c(); ++c) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          T acc = T(0);
          for (int dy = 0; dy < factor; ++dy) {
            for (int dx = 0; dx < factor; ++dx) {
              acc += mask(n, c, oy * factor + dy, ox * factor + dx);
            }
          }
          out(n, c, oy, ox) = acc * scale;
        }
      }
    }
  }
  return out;
}

template Tensor<float> downscale_mask<float>(const Tensor<float>&, int);
template Tensor<double> downscale_mask<double>(const Tensor<double>&, int);

Modalities Modalities::excluding(std::string_view modality) {
  Modalities m;
  if (modality == "none" || modality.empty()) return m;
  if (modality == "normals") {
    m.normals = false;
  } else if (modality == "depth") {
    m.depth = false;
  } else if (modality == "materials") {
    m.materials = false;
  } else if (modality == "mask") {
    throw ConfigError("the object mask cannot be excluded: the losses require it");
  } else {
    throw ConfigError("unknown modality: " + std::string(modality));
  }
  return m;
}

std::string Modalities::excluded_name() const {
  if (!normals) return "normals";
  if (!depth) return "depth";
  if (!materials) return "materials";
  return "none";
}

InputPyramid build_pyramid(const GBufferSample& s, int levels, const Modalities& mod) {
  if (levels < 1) throw ConfigError("build_pyramid: levels must be >= 1");
  if (!mod.mask) throw ConfigError("build_pyramid: the mask channel is mandatory");
  const int h = s.height(), w = s.width();
  const int div = 1 << (levels - 1);
  if (h % div != 0 || w % div != 0) {
    throw ShapeError("build_pyramid: resolution " + std::to_string(h) + "x" +
                     std::to_string(w) + " must be divisible by 2^(L-1) = " +
                     std::to_string(div));
  }
  const int nm = s.materials.c();
  Tensor<float> full(1, mod.channels(nm), h, w);
  int c = 0;
  auto put = [&](const Tensor<float>& src) {
    std::copy_n(src.data(), src.size(), full.plane(0, c));
    c += src.c();
  };
  if (mod.normals) put(s.normals);
  if (mod.depth) put(encode_depth(s.depth, s.mask, s.z_near));
  if (mod.materials) put(s.materials);
  put(s.mask);
  put(s.background);

  InputPyramid pyr;
  pyr.levels.resize(levels);
  pyr.levels[levels - 1] = std::move(full);
  for (int i = levels - 2; i >= 0; --i) {
    Tensor<float> pooled;
    nn::avg_pool2x(pyr.levels[i + 1], pooled);
    if (mod.normals) {
      const std::size_t n = pooled.plane_size();
      float* nx = pooled.plane(0, 0);
      float* ny = pooled.plane(0, 1);
      float* nz = pooled.plane(0, 2);
      for (std::size_t p = 0; p < n; ++p) {
        const float len = std::sqrt(nx[p] * nx[p] + ny[p] * ny[p] + nz[p] * nz[p]);
        if (len > kNormalRenormThreshold) {
          nx[p] /= len;
          ny[p] /= len;
          nz[p] /= len;
        } else {
          nx[p] = ny[p] = nz[p] = 0.0f;
        }
      }
    }
    pyr.levels[i] = std::move(pooled);
  }
  return pyr;
}

InputPyramid stack_pyramids(std::span<const InputPyramid> pyramids) {
  InputPyramid out;
  if (pyramids.empty()) return out;
  const int levels = pyramids.front().level_count();
  out.levels.resize(levels);
  for (int l = 0; l < levels; ++l) {
    const Shape4 s0 = pyramids.front().levels[l].shape();
    Tensor<float> stacked(static_cast<int>(pyramids.size()), s0.c, s0.h, s0.w);
    for (std::size_t i = 0; i < pyramids.size(); ++i) {
      if (pyramids[i].level_count() != levels) throw ShapeError("stack_pyramids: level count mismatch");
      const auto& lvl = pyramids[i].levels[l];
      require_shape(lvl.shape(), s0, "stack_pyramids level");
      std::copy_n(lvl.data(), lvl.size(), stacked.sample(static_cast<int>(i)));
    }
    out.levels[l] = std::move(stacked);
  }
  return out;
}

}  // namespace gis
