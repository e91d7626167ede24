#include "gis/scene/scene.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <numbers>

#include "gis/core/error.hpp"
#include "gis/core/rng.hpp"

namespace gis::scene {
using nlohmann::json;

namespace {

constexpr double kRayEpsilon = 1e-9;
constexpr double kShadowEpsilon = 1e-6;

json vec_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
Vec3 vec_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }
json range_json(const Range& r) { return json::array({r.lo, r.hi}); }
Range range_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

double lerp(double a, double b, double t) { return a + (b - a) * t; }
Vec3 lerp(const Vec3& a, const Vec3& b, double t) {
  return {lerp(a.x, b.x, t), lerp(a.y, b.y, t), lerp(a.z, b.z, t)};
}

double lattice_value(std::uint64_t seed, long ix, long iy) {
  const std::uint64_t h =
      mix_seed(seed ^ mix_seed(static_cast<std::uint64_t>(ix) * 0x9E3779B1ULL +
                               static_cast<std::uint64_t>(iy) * 0x85EBCA77ULL));
  return static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

// Smooth value noise in [-1, 1] sampled at pixel centers.
double value_noise(const Backdrop& b, int row, int col) {
  const double cell = static_cast<double>(std::max(b.noise_cell, 1));
  const double fx = (col + 0.5) / cell;
  const double fy = (row + 0.5) / cell;
  const long x0 = static_cast<long>(std::floor(fx));
  const long y0 = static_cast<long>(std::floor(fy));
  auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
  const double tx = smooth(fx - x0);
  const double ty = smooth(fy - y0);
  const double v00 = lattice_value(b.noise_seed, x0, y0);
  const double v10 = lattice_value(b.noise_seed, x0 + 1, y0);
  const double v01 = lattice_value(b.noise_seed, x0, y0 + 1);
  const double v11 = lattice_value(b.noise_seed, x0 + 1, y0 + 1);
  return lerp(lerp(v00, v10, tx), lerp(v01, v11, tx), ty);
}

// Ray parameter of the ground hit, or negative when the ray looks upward.
double ground_hit(const SceneSpec& s, const Vec3& dir) {
  if (dir.y >= -kRayEpsilon) return -1.0;
  return (s.backdrop.ground_y - s.camera.position.y) / dir.y;
}

Vec3 backdrop_color(const SceneSpec& s, int row, int col) {
  const Vec3 dir = s.camera.ray(row, col);
  const Backdrop& b = s.backdrop;
  Vec3 base;
  const double t = ground_hit(s, dir);
  if (t > 0.0) {
    base = lerp(b.ground_near, b.ground_far, std::clamp((t - 2.0) / 20.0, 0.0, 1.0));
  } else {
    base = lerp(b.sky_horizon, b.sky_top, std::clamp(dir.y / 0.35, 0.0, 1.0));
  }
  const double n = b.noise_amplitude * value_noise(b, row, col);
  return {std::clamp(base.x + n, 0.0, 1.0), std::clamp(base.y + n, 0.0, 1.0),
          std::clamp(base.z + n, 0.0, 1.0)};
}

Vec3 shaded_background(const SceneSpec& s, int row, int col) {
  const Vec3 c = backdrop_color(s, row, col);
  return ground_in_shadow(s, row, col) ? c * s.shadow_factor : c;
}

void check_range(const Range& r, const char* name) {
  if (!(r.lo <= r.hi)) throw ConfigError(std::string("scene config: degenerate range ") + name);
}

}  // namespace

Vec3 Camera::ray(int row, int col) const {
  const double u = (col + 0.5 - 0.5 * width) / focal;
  const double v = -(row + 0.5 - 0.5 * height) / focal;
  return Vec3{u, v, -1.0}.normalized();
}

json SceneSpec::to_json() const {
  json prims = json::array();
  for (const auto& p : primitives) {
    prims.push_back({{"shape", p.shape == Shape::sphere ? "sphere" : "box"},
                     {"center", vec_json(p.center)},
                     {"size", vec_json(p.size)},
                     {"material_id", p.material_id}});
  }
  json mats = json::array();
  for (const auto& m : materials) {
    mats.push_back({{"albedo", vec_json(m.albedo)},
                    {"specular_strength", m.specular_strength},
                    {"specular_exponent", m.specular_exponent},
                    {"alpha", m.alpha}});
  }
  return {{"primitives", prims},
          {"light", {{"direction", vec_json(light.direction)},
                     {"intensity", light.intensity},
                     {"ambient", light.ambient}}},
          {"camera", {{"position", vec_json(camera.position)},
                      {"z_near", camera.z_near},
                      {"height", camera.height},
                      {"width", camera.width},
                      {"focal", camera.focal}}},
          {"backdrop", {{"sky_top", vec_json(backdrop.sky_top)},
                        {"sky_horizon", vec_json(backdrop.sky_horizon)},
                        {"ground_near", vec_json(backdrop.ground_near)},
                        {"ground_far", vec_json(backdrop.ground_far)},
                        {"ground_y", backdrop.ground_y},
                        {"noise_amplitude", backdrop.noise_amplitude},
                        {"noise_cell", backdrop.noise_cell},
                        {"noise_seed", backdrop.noise_seed}}},
          {"materials", mats},
          {"shadow_factor", shadow_factor}};
}

std::vector<MaterialPhysics> default_physics() {
  return {
      {{0.85, 0.18, 0.12}, 0.05, 8.0, 1.0},   // matte-red
      {{0.15, 0.25, 0.85}, 0.05, 8.0, 1.0},   // matte-blue
      {{0.20, 0.75, 0.25}, 0.05, 8.0, 1.0},   // matte-green
      {{0.55, 0.55, 0.60}, 0.45, 24.0, 1.0},  // glossy-metal
      {{0.80, 0.80, 0.85}, 0.90, 64.0, 1.0},  // chrome
      {{0.75, 0.90, 0.95}, 0.60, 48.0, 0.4},  // glass
  };
}

void SceneConfig::validate() const {
  if (height <= 0 || width <= 0) throw ConfigError("scene config: image size must be positive");
  if (min_primitives < 0 || min_primitives > max_primitives) {
    throw ConfigError("scene config: degenerate primitive count range");
  }
  check_range(sphere_radius, "sphere_radius");
  check_range(box_half_extent, "box_half_extent");
  check_range(lateral, "lateral");
  check_range(distance, "distance");
  check_range(elevation_deg, "elevation_deg");
  check_range(azimuth_deg, "azimuth_deg");
  check_range(intensity, "intensity");
  check_range(ambient, "ambient");
  if (sphere_radius.lo <= 0 || box_half_extent.lo <= 0) throw ConfigError("scene config: sizes must be positive");
  if (elevation_deg.lo <= 0 || elevation_deg.hi > 90) {
    throw ConfigError("scene config: light elevation must lie in (0, 90] degrees");
  }
  if (intensity.lo < 0 || ambient.lo < 0 || ambient.hi > 1) throw ConfigError("scene config: light ranges out of bounds");
  if (z_near <= 0 || focal_scale <= 0) throw ConfigError("scene config: z_near and focal must be positive");
  if (distance.lo - std::max(sphere_radius.hi, box_half_extent.hi) <= z_near) {
    throw ConfigError("scene config: primitives may intersect the near plane");
  }
  if (!(box_probability >= 0 && box_probability <= 1)) throw ConfigError("scene config: box_probability outside [0,1]");
  palette.validate();
  if (static_cast<int>(physics.size()) != palette.size()) {
    throw ConfigError("scene config: physics table must match the palette size");
  }
  for (const auto& m : physics) {
    if (!(m.alpha > 0 && m.alpha <= 1)) throw ConfigError("scene config: material alpha outside (0,1]");
  }
}

json SceneConfig::to_json() const {
  json mats = json::array();
  for (const auto& m : physics) {
    mats.push_back({{"albedo", vec_json(m.albedo)},
                    {"specular_strength", m.specular_strength},
                    {"specular_exponent", m.specular_exponent},
                    {"alpha", m.alpha}});
  }
  return {{"height", height},
          {"width", width},
          {"min_primitives", min_primitives},
          {"max_primitives", max_primitives},
          {"box_probability", box_probability},
          {"sphere_radius", range_json(sphere_radius)},
          {"box_half_extent", range_json(box_half_extent)},
          {"lateral", range_json(lateral)},
          {"distance", range_json(distance)},
          {"elevation_deg", range_json(elevation_deg)},
          {"azimuth_deg", range_json(azimuth_deg)},
          {"intensity", range_json(intensity)},
          {"ambient", range_json(ambient)},
          {"camera_height", camera_height},
          {"ground_y", ground_y},
          {"z_near", z_near},
          {"focal_scale", focal_scale},
          {"shadow_factor", shadow_factor},
          {"palette", palette_to_json(palette)},
          {"physics", mats}};
}

SceneConfig SceneConfig::from_json(const json& j) {
  SceneConfig c;
  c.height = j.at("height").get<int>();
  c.width = j.at("width").get<int>();
  c.min_primitives = j.at("min_primitives").get<int>();
  c.max_primitives = j.at("max_primitives").get<int>();
  c.box_probability = j.at("box_probability").get<double>();
  c.sphere_radius = range_from(j.at("sphere_radius"));
  c.box_half_extent = range_from(j.at("box_half_extent"));
  c.lateral = range_from(j.at("lateral"));
  c.distance = range_from(j.at("distance"));
  c.elevation_deg = range_from(j.at("elevation_deg"));
  c.azimuth_deg = range_from(j.at("azimuth_deg"));
  c.intensity = range_from(j.at("intensity"));
  c.ambient = range_from(j.at("ambient"));
  c.camera_height = j.at("camera_height").get<double>();
  c.ground_y = j.at("ground_y").get<double>();
  c.z_near = j.at("z_near").get<double>();
  c.focal_scale = j.at("focal_scale").get<double>();
  c.shadow_factor = j.at("shadow_factor").get<double>();
  c.palette = palette_from_json(j.at("palette"));
  c.physics.clear();
  for (const auto& m : j.at("physics")) {
    c.physics.push_back({vec_from(m.at("albedo")), m.at("specular_strength").get<double>(),
                         m.at("specular_exponent").get<double>(), m.at("alpha").get<double>()});
  }
  c.validate();
  return c;
}

SceneSpec sample_scene(std::uint64_t seed, const SceneConfig& cfg) {
  cfg.validate();
  Rng rng(seed);
  SceneSpec s;
  s.camera = {{0.0, cfg.camera_height, 0.0}, cfg.z_near, cfg.height, cfg.width,
              cfg.focal_scale * cfg.width};
  s.materials = cfg.physics;
  s.shadow_factor = cfg.shadow_factor;

  const int count = rng.uniform_int(cfg.min_primitives, cfg.max_primitives);
  for (int i = 0; i < count; ++i) {
    Primitive p;
    p.shape = rng.uniform() < cfg.box_probability ? Shape::box : Shape::sphere;
    p.material_id = rng.uniform_int(0, cfg.palette.size() - 1);
    double half_height;
    if (p.shape == Shape::sphere) {
      const double r = rng.uniform(cfg.sphere_radius.lo, cfg.sphere_radius.hi);
      p.size = {r, r, r};
      half_height = r;
    } else {
      p.size = {rng.uniform(cfg.box_half_extent.lo, cfg.box_half_extent.hi),
                rng.uniform(cfg.box_half_extent.lo, cfg.box_half_extent.hi),
                rng.uniform(cfg.box_half_extent.lo, cfg.box_half_extent.hi)};
      half_height = p.size.y;
    }
    const double x = rng.uniform(cfg.lateral.lo, cfg.lateral.hi);
    const double d = rng.uniform(cfg.distance.lo, cfg.distance.hi);
    p.center = {x, cfg.ground_y + half_height, s.camera.position.z - d};
    s.primitives.push_back(p);
  }

  const double deg = std::numbers::pi / 180.0;
  const double elev = rng.uniform(cfg.elevation_deg.lo, cfg.elevation_deg.hi) * deg;
  const double azim = rng.uniform(cfg.azimuth_deg.lo, cfg.azimuth_deg.hi) * deg;
  s.light.direction = Vec3{std::cos(elev) * std::sin(azim), std::sin(elev),
                           std::cos(elev) * std::cos(azim)}.normalized();
  s.light.intensity = rng.uniform(cfg.intensity.lo, cfg.intensity.hi);
  s.light.ambient = rng.uniform(cfg.ambient.lo, cfg.ambient.hi);

  Backdrop& b = s.backdrop;
  b.ground_y = cfg.ground_y;
  b.sky_top = {rng.uniform(0.30, 0.55), rng.uniform(0.45, 0.70), rng.uniform(0.70, 0.95)};
  const double lift = rng.uniform(0.15, 0.30);
  b.sky_horizon = {std::min(b.sky_top.x + lift, 1.0), std::min(b.sky_top.y + lift, 1.0),
                   std::min(b.sky_top.z + 0.5 * lift, 1.0)};
  const double g = rng.uniform(0.25, 0.50);
  b.ground_near = {g + rng.uniform(0.0, 0.12), g + rng.uniform(0.0, 0.08), g};
  const double fade = rng.uniform(0.08, 0.2);
  b.ground_far = {std::min(b.ground_near.x + fade, 1.0), std::min(b.ground_near.y + fade, 1.0),
                  std::min(b.ground_near.z + fade, 1.0)};
  b.noise_amplitude = rng.uniform(0.03, 0.08);
  b.noise_cell = 8;
  b.noise_seed = rng.next_u64();
  return s;
}

double intersect(const Primitive& prim, const Vec3& o, const Vec3& d) {
  if (prim.shape == Shape::sphere) {
    const Vec3 oc = o - prim.center;
    const double r = prim.size.x;
    const double b = oc.dot(d);
    const double c = oc.dot(oc) - r * r;
    const double disc = b * b - c;
    if (disc < 0.0) return -1.0;
    const double sq = std::sqrt(disc);
    double t = -b - sq;
    if (t <= kRayEpsilon) t = -b + sq;
    return t > kRayEpsilon ? t : -1.0;
  }
  double tmin = -std::numeric_limits<double>::infinity();
  double tmax = std::numeric_limits<double>::infinity();
  const double lo[3] = {prim.center.x - prim.size.x, prim.center.y - prim.size.y,
                        prim.center.z - prim.size.z};
  const double hi[3] = {prim.center.x + prim.size.x, prim.center.y + prim.size.y,
                        prim.center.z + prim.size.z};
  const double oo[3] = {o.x, o.y, o.z};
  const double dd[3] = {d.x, d.y, d.z};
  for (int a = 0; a < 3; ++a) {
    if (std::fabs(dd[a]) < 1e-15) {
      if (oo[a] < lo[a] || oo[a] > hi[a]) return -1.0;
      continue;
    }
    double t0 = (lo[a] - oo[a]) / dd[a];
    double t1 = (hi[a] - oo[a]) / dd[a];
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
  }
  if (tmin > tmax) return -1.0;
  if (tmin > kRayEpsilon) return tmin;
  return tmax > kRayEpsilon ? tmax : -1.0;
}

Vec3 surface_normal(const Primitive& prim, const Vec3& p) {
  if (prim.shape == Shape::sphere) return (p - prim.center).normalized();
  const Vec3 rel = p - prim.center;
  const double ax = std::fabs(rel.x / prim.size.x);
  const double ay = std::fabs(rel.y / prim.size.y);
  const double az = std::fabs(rel.z / prim.size.z);
  if (ax >= ay && ax >= az) return {rel.x > 0 ? 1.0 : -1.0, 0.0, 0.0};
  if (ay >= az) return {0.0, rel.y > 0 ? 1.0 : -1.0, 0.0};
  return {0.0, 0.0, rel.z > 0 ? 1.0 : -1.0};
}

namespace {

struct Hit {
  double t = -1.0;
  int index = -1;
};

Hit nearest_hit(const SceneSpec& s, const Vec3& o, const Vec3& d) {
  Hit best;
  for (int i = 0; i < static_cast<int>(s.primitives.size()); ++i) {
    const double t = intersect(s.primitives[i], o, d);
    if (t > 0.0 && (best.index < 0 || t < best.t)) best = {t, i};
  }
  return best;
}

}  // namespace

GBufferSample rasterize_gbuffer(const SceneSpec& s, int palette_size) {
  const int h = s.camera.height, w = s.camera.width;
  GBufferSample g = GBufferSample::blank(h, w, palette_size, static_cast<float>(s.camera.z_near));
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const Vec3 d = s.camera.ray(r, c);
      const Hit hit = nearest_hit(s, s.camera.position, d);
      if (hit.index < 0) continue;
      const Primitive& p = s.primitives[hit.index];
      const Vec3 n = surface_normal(p, s.camera.position + d * hit.t);
      g.mask(0, 0, r, c) = 1.0f;
      g.depth(0, 0, r, c) = static_cast<float>(hit.t);
      g.normals(0, 0, r, c) = static_cast<float>(n.x);
      g.normals(0, 1, r, c) = static_cast<float>(n.y);
      g.normals(0, 2, r, c) = static_cast<float>(n.z);
      if (p.material_id < 0 || p.material_id >= palette_size) {
        throw ConfigError("scene references material outside the palette");
      }
      g.materials(0, p.material_id, r, c) = 1.0f;
    }
  }
  g.background = render_backdrop(s);
  return g;
}

Tensor<float> render_backdrop(const SceneSpec& s) {
  Tensor<float> img(1, 3, s.camera.height, s.camera.width);
  for (int r = 0; r < s.camera.height; ++r) {
    for (int c = 0; c < s.camera.width; ++c) {
      const Vec3 col = backdrop_color(s, r, c);
      img(0, 0, r, c) = static_cast<float>(col.x);
      img(0, 1, r, c) = static_cast<float>(col.y);
      img(0, 2, r, c) = static_cast<float>(col.z);
    }
  }
  return img;
}

bool ground_in_shadow(const SceneSpec& s, int row, int col) {
  const Vec3 d = s.camera.ray(row, col);
  const double t = ground_hit(s, d);
  if (t <= 0.0) return false;
  const Vec3 p = s.camera.position + d * t;
  for (const auto& prim : s.primitives) {
    if (intersect(prim, p, s.light.direction) > kShadowEpsilon) return true;
  }
  return false;
}

Tensor<float> shade_target(const SceneSpec& s, const GBufferSample& g) {
  const int h = s.camera.height, w = s.camera.width;
  Tensor<float> out(1, 3, h, w);
  const Vec3& l = s.light.direction;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      Vec3 color;
      if (g.mask(0, 0, r, c) > 0.5f) {
        int mat = 0;
        for (int k = 0; k < g.materials.c(); ++k) {
          if (g.materials(0, k, r, c) > 0.5f) mat = k;
        }
        const MaterialPhysics& m = s.materials.at(mat);
        const Vec3 n{g.normals(0, 0, r, c), g.normals(0, 1, r, c), g.normals(0, 2, r, c)};
        const Vec3 view = s.camera.ray(r, c) * -1.0;
        const double ndl = n.dot(l);
        const double lambert = std::max(0.0, ndl);
        color = m.albedo * (s.light.ambient + s.light.intensity * lambert);
        if (ndl > 0.0 && m.specular_strength > 0.0) {
          const Vec3 refl = n * (2.0 * ndl) - l;
          const double rv = std::max(0.0, refl.dot(view));
          const double spec = s.light.intensity * m.specular_strength * std::pow(rv, m.specular_exponent);
          color = color + Vec3{spec, spec, spec};
        }
        color = {std::clamp(color.x, 0.0, 1.0), std::clamp(color.y, 0.0, 1.0),
                 std::clamp(color.z, 0.0, 1.0)};
        if (m.alpha < 1.0) {
          color = color * m.alpha + shaded_background(s, r, c) * (1.0 - m.alpha);
        }
      } else {
        color = shaded_background(s, r, c);
      }
      out(0, 0, r, c) = static_cast<float>(color.x);
      out(0, 1, r, c) = static_cast<float>(color.y);
      out(0, 2, r, c) = static_cast<float>(color.z);
    }
  }
  return out;
}

std::uint64_t sample_seed(std::uint64_t dataset_seed, int index) {
  return derive_seed(dataset_seed, static_cast<std::uint64_t>(index));
}

GBufferSample make_sample(std::uint64_t seed, const SceneConfig& cfg) {
  const SceneSpec spec = sample_scene(seed, cfg);
  GBufferSample g = rasterize_gbuffer(spec, cfg.palette.size());
  g.target = shade_target(spec, g);
  quantize_images(g);
  return g;
}

std::vector<GBufferSample> make_samples(int count, std::uint64_t dataset_seed,
                                        const SceneConfig& cfg) {
  std::vector<GBufferSample> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) out.push_back(make_sample(sample_seed(dataset_seed, i), cfg));
  return out;
}

std::string sample_dir_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sample_%06d", index);
  return buf;
}

DatasetManifest generate_dataset(int count, std::uint64_t seed, const std::filesystem::path& out_dir,
                                 const SceneConfig& cfg, int levels) {
  cfg.validate();
  if (count < 0) throw ConfigError("generate_dataset: negative sample count");
  if (levels < 1) throw ConfigError("generate_dataset: levels must be >= 1");
  const int div = 1 << (levels - 1);
  if (cfg.height % div != 0 || cfg.width % div != 0) {
    throw ConfigError("generate_dataset: image size must be divisible by 2^(levels-1) = " +
                      std::to_string(div));
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  DatasetManifest manifest;
  manifest.height = cfg.height;
  manifest.width = cfg.width;
  manifest.levels = levels;
  manifest.seed = seed;
  manifest.z_near = static_cast<float>(cfg.z_near);
  manifest.palette = cfg.palette;
  manifest.scene_config = cfg.to_json();
  for (int i = 0; i < count; ++i) {
    const std::uint64_t s = sample_seed(seed, i);
    const std::string dir = sample_dir_name(i);
    try {
      const GBufferSample sample = make_sample(s, cfg);
      write_sample(out_dir / dir, sample, cfg.palette, {{"index", i}, {"seed", s}});
    } catch (const IoError& e) {
      throw IoError("sample " + std::to_string(i) + ": " + e.what());
    }
    manifest.samples.push_back({i, s, dir});
  }
  write_manifest(out_dir, manifest);
  return manifest;
}

}  // namespace gis::scene
