#include <doctest.h>

#include <fstream>
#include <iterator>
#include <set>

#include "gis/core/error.hpp"
#include "gis/gbuffer/dataset_io.hpp"
#include "gis/io/png.hpp"
#include "gis/scene/scene.hpp"
#include "support.hpp"

using namespace gis;
using namespace gis::scene;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

SceneConfig small_config(int h = 32, int w = 32) {
  SceneConfig c;
  c.height = h;
  c.width = w;
  return c;
}

// Camera at the origin with an odd image so the central ray is the optical axis.
SceneSpec axis_scene(double radius, double distance) {
  SceneSpec s;
  s.camera = {{0, 0, 0}, 1.0, 33, 33, 40.0};
  s.materials = default_physics();
  s.primitives.push_back({Shape::sphere, {0, 0, -distance}, {radius, radius, radius}, 0});
  return s;
}

// Closed-form ray/sphere test, written independently of the renderer.
bool ray_hits_sphere(const Vec3& o, const Vec3& d, const Primitive& p) {
  const double ox = o.x - p.center.x, oy = o.y - p.center.y, oz = o.z - p.center.z;
  const double a = d.x * d.x + d.y * d.y + d.z * d.z;
  const double b = 2 * (ox * d.x + oy * d.y + oz * d.z);
  const double c = ox * ox + oy * oy + oz * oz - p.size.x * p.size.x;
  const double disc = b * b - 4 * a * c;
  if (disc < 0) return false;
  const double t1 = (-b + std::sqrt(disc)) / (2 * a);
  return t1 > 1e-6;  // far root in front of the origin
}

}  // namespace

TEST_CASE("sample_scene is deterministic and respects its ranges") {
  const auto cfg = small_config();
  CHECK(sample_scene(5, cfg) == sample_scene(5, cfg));
  CHECK(sample_scene(5, cfg).to_json().dump() == sample_scene(5, cfg).to_json().dump());
  CHECK_FALSE(sample_scene(5, cfg) == sample_scene(6, cfg));

  std::set<int> materials;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto s = sample_scene(seed, cfg);
    CHECK(s.primitives.size() >= 1);
    CHECK(s.primitives.size() <= 3);
    CHECK(s.light.direction.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.light.direction.y > 0.0);
    for (const auto& p : s.primitives) {
      materials.insert(p.material_id);
      CHECK(p.center.z < s.camera.position.z);
    }
  }
  CHECK(materials.size() == static_cast<std::size_t>(cfg.palette.size()));

  auto one = cfg;
  one.min_primitives = one.max_primitives = 1;
  for (std::uint64_t seed = 0; seed < 100; ++seed) CHECK(sample_scene(seed, one).primitives.size() == 1);

  auto bad = cfg;
  bad.distance = {5.0, 4.0};
  CHECK_THROWS_AS(sample_scene(1, bad), ConfigError);
  bad = cfg;
  bad.min_primitives = 3;
  bad.max_primitives = 2;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("rasterization of a sphere on the optical axis") {
  const auto s = axis_scene(1.0, 5.0);
  const auto g = rasterize_gbuffer(s, 6);
  CHECK(validate_sample(g, MaterialPalette::default_palette()).ok());
  CHECK(g.mask(0, 0, 16, 16) == 1.0f);
  CHECK(g.normals(0, 0, 16, 16) == 0.0f);
  CHECK(g.normals(0, 1, 16, 16) == 0.0f);
  CHECK(g.normals(0, 2, 16, 16) == 1.0f);
  CHECK(g.depth(0, 0, 16, 16) == doctest::Approx(4.0).epsilon(1e-7));
  // Corner pixel misses everything.
  CHECK(g.mask(0, 0, 0, 0) == 0.0f);
  CHECK(g.depth(0, 0, 0, 0) == 0.0f);
  CHECK(g.normals(0, 2, 0, 0) == 0.0f);

  // Empty scene: all background.
  SceneSpec empty = s;
  empty.primitives.clear();
  CHECK(rasterize_gbuffer(empty, 6).foreground_pixels() == 0);
}

TEST_CASE("shading formulas") {
  auto s = axis_scene(1.0, 5.0);
  const Vec3 albedo{0.6, 0.3, 0.2};
  s.materials[0] = {albedo, 0.0, 8.0, 1.0};
  s.light.intensity = 1.0;
  s.light.ambient = 0.0;
  const auto g = rasterize_gbuffer(s, 6);

  SUBCASE("light along the normal gives the albedo") {
    s.light.direction = {0, 0, 1};
    const auto t = shade_target(s, g);
    CHECK(t(0, 0, 16, 16) == doctest::Approx(0.6).epsilon(1e-6));
    CHECK(t(0, 1, 16, 16) == doctest::Approx(0.3).epsilon(1e-6));
    CHECK(t(0, 2, 16, 16) == doctest::Approx(0.2).epsilon(1e-6));
  }
  SUBCASE("light perpendicular to the normal gives ambient times albedo") {
    s.light.direction = {1, 0, 0};
    s.light.ambient = 0.25;
    const auto t = shade_target(s, g);
    CHECK(t(0, 0, 16, 16) == doctest::Approx(0.25 * 0.6).epsilon(1e-6));
    CHECK(t(0, 2, 16, 16) == doctest::Approx(0.25 * 0.2).epsilon(1e-6));
  }
  SUBCASE("glass composites over the background") {
    s.light.direction = Vec3{0.3, 0.8, 0.5}.normalized();
    s.light.ambient = 0.2;
    const auto opaque = shade_target(s, g);
    auto glassy = s;
    glassy.materials[0].alpha = 0.4;
    const auto t = shade_target(glassy, g);
    // No shadow can fall on the central pixel's backdrop (the sky).
    const auto bg = render_backdrop(s);
    for (int c = 0; c < 3; ++c) {
      const double want = 0.4 * opaque(0, c, 16, 16) + 0.6 * bg(0, c, 16, 16);
      CHECK(t(0, c, 16, 16) == doctest::Approx(want).epsilon(1e-6));
    }
  }
}

TEST_CASE("ground shadows match an independent ray test") {
  auto cfg = small_config(48, 64);
  cfg.box_probability = 0.0;  // spheres only, for the closed-form oracle
  int shadowed = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto s = sample_scene(seed, cfg);
    const auto g = rasterize_gbuffer(s, cfg.palette.size());
    const auto t = shade_target(s, g);
    const auto bg = render_backdrop(s);
    for (int r = 0; r < cfg.height; ++r) {
      for (int c = 0; c < cfg.width; ++c) {
        if (g.mask(0, 0, r, c) != 0.0f) continue;
        const Vec3 d = s.camera.ray(r, c);
        bool in_shadow = false;
        if (d.y < 0) {
          const double tg = (s.backdrop.ground_y - s.camera.position.y) / d.y;
          const Vec3 p = s.camera.position + d * tg;
          for (const auto& prim : s.primitives) in_shadow |= ray_hits_sphere(p, s.light.direction, prim);
        }
        CHECK(in_shadow == ground_in_shadow(s, r, c));
        for (int ch = 0; ch < 3; ++ch) {
          const float want = in_shadow ? static_cast<float>(bg(0, ch, r, c) * s.shadow_factor)
                                       : bg(0, ch, r, c);
          CHECK(t(0, ch, r, c) == doctest::Approx(want).epsilon(1e-6));
          CHECK(t(0, ch, r, c) <= bg(0, ch, r, c));
        }
        shadowed += in_shadow;
      }
    }
  }
  CHECK(shadowed > 0);
}

TEST_CASE("resampling only the light changes the foreground") {
  const auto cfg = small_config();
  int changed = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto s = sample_scene(seed, cfg);
    const auto g = rasterize_gbuffer(s, cfg.palette.size());
    if (g.foreground_pixels() == 0) continue;
    auto mean_fg = [&](const Tensor<float>& img) {
      double sum = 0;
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < cfg.height; ++y)
          for (int x = 0; x < cfg.width; ++x) sum += g.mask(0, 0, y, x) * img(0, c, y, x);
      return sum;
    };
    const double before = mean_fg(shade_target(s, g));
    const auto other = sample_scene(seed + 1000, cfg);
    s.light = other.light;
    changed += mean_fg(shade_target(s, g)) != before;
  }
  CHECK(changed > 15);
}

TEST_CASE("generated samples validate and regenerate byte-identically") {
  gis::test::TempDir dir("forge");
  const auto cfg = small_config(32, 32);
  const auto empty = generate_dataset(0, 3, dir / "empty", cfg, 3);
  CHECK(empty.samples.empty());
  CHECK(read_manifest(dir / "empty").samples.empty());

  const auto m = generate_dataset(14, 7, dir / "a", cfg, 3);
  REQUIRE(m.samples.size() == 14);
  const auto ds = load_dataset(dir / "a");
  for (const auto& s : ds.samples) CHECK(validate_sample(s, cfg.palette, 3).ok());

  // Sample 13 alone from its recorded seed.
  const auto& e = m.samples[13];
  const auto again = make_sample(e.seed, cfg);
  write_sample(dir / "solo", again, cfg.palette, {{"index", 13}, {"seed", e.seed}});
  for (const char* f : {"sample.json", "normals.f32", "depth.f32", "materials.png", "background.png",
                        "target.png"}) {
    CAPTURE(f);
    CHECK(slurp(dir / "solo" / f) == slurp(dir / "a" / e.dir / f));
  }

  generate_dataset(14, 7, dir / "b", cfg, 3);
  CHECK(slurp(dir / "a" / "manifest.json") == slurp(dir / "b" / "manifest.json"));
  CHECK(slurp(dir / "a" / m.samples[5].dir / "target.png") ==
        slurp(dir / "b" / m.samples[5].dir / "target.png"));

  CHECK_THROWS_AS(generate_dataset(1, 1, dir / "c", small_config(30, 32), 3), ConfigError);
}
