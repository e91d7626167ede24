#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "gis/gbuffer/dataset_io.hpp"
#include "gis/gbuffer/sample.hpp"

namespace gis::scene {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const { return *this * (1.0 / norm()); }
  Vec3 mul(const Vec3& o) const { return {x * o.x, y * o.y, z * o.z}; }
  bool operator==(const Vec3&) const = default;
};

enum class Shape { sphere, box };

struct Primitive {
  Shape shape = Shape::sphere;
  Vec3 center;
  Vec3 size;  // sphere: radius in x; box: half extents
  int material_id = 0;
  bool operator==(const Primitive&) const = default;
};

struct Light {
  Vec3 direction{0, 1, 0};  // unit, pointing towards the light
  double intensity = 1.0;
  double ambient = 0.2;
  bool operator==(const Light&) const = default;
};

// Pinhole camera looking down -z with +y up; camera and world axes coincide,
// so world-space normals are camera-space normals.
struct Camera {
  Vec3 position;
  double z_near = 1.0;
  int height = 64;
  int width = 64;
  double focal = 102.4;  // pixels
  bool operator==(const Camera&) const = default;

  // Unit ray direction through the center of pixel (row, col).
  Vec3 ray(int row, int col) const;
};

struct Backdrop {
  Vec3 sky_top{0.45, 0.6, 0.85};
  Vec3 sky_horizon{0.75, 0.8, 0.88};
  Vec3 ground_near{0.38, 0.35, 0.3};
  Vec3 ground_far{0.55, 0.52, 0.48};
  double ground_y = -1.0;
  double noise_amplitude = 0.06;
  int noise_cell = 8;  // lattice spacing in pixels
  std::uint64_t noise_seed = 0;
  bool operator==(const Backdrop&) const = default;
};

struct MaterialPhysics {
  Vec3 albedo{0.5, 0.5, 0.5};
  double specular_strength = 0.0;
  double specular_exponent = 8.0;
  double alpha = 1.0;  // < 1 for transparent materials
  bool operator==(const MaterialPhysics&) const = default;
};

// Hidden scene parameters. The network only ever sees the G-buffer derived
// from this, never the lighting or material physics.
struct SceneSpec {
  std::vector<Primitive> primitives;
  Light light;
  Camera camera;
  Backdrop backdrop;
  std::vector<MaterialPhysics> materials;
  double shadow_factor = 0.55;
  bool operator==(const SceneSpec&) const = default;

  nlohmann::json to_json() const;
};

struct Range {
  double lo = 0, hi = 0;
  bool operator==(const Range&) const = default;
};

std::vector<MaterialPhysics> default_physics();

struct SceneConfig {
  int height = 64;
  int width = 64;
  int min_primitives = 1;
  int max_primitives = 3;
  double box_probability = 0.4;
  Range sphere_radius{0.45, 0.9};
  Range box_half_extent{0.35, 0.75};
  Range lateral{-1.6, 1.6};
  Range distance{3.8, 6.5};
  Range elevation_deg{25.0, 75.0};
  Range azimuth_deg{-120.0, 120.0};
  Range intensity{0.7, 1.2};
  Range ambient{0.15, 0.35};
  double camera_height = 0.4;
  double ground_y = -1.0;
  double z_near = 1.0;
  double focal_scale = 1.6;  // focal length in units of image width
  double shadow_factor = 0.55;
  MaterialPalette palette = MaterialPalette::default_palette();
  std::vector<MaterialPhysics> physics = default_physics();

  // Throws ConfigError on empty or inverted ranges.
  void validate() const;
  nlohmann::json to_json() const;
  static SceneConfig from_json(const nlohmann::json& j);
};

SceneSpec sample_scene(std::uint64_t seed, const SceneConfig& config);

// Nearest positive ray parameter, or a negative value on a miss.
double intersect(const Primitive& prim, const Vec3& origin, const Vec3& dir);
Vec3 surface_normal(const Primitive& prim, const Vec3& point);

// Analytic per-pixel ray casting; target left empty.
GBufferSample rasterize_gbuffer(const SceneSpec& scene, int palette_size);

// Procedural backdrop without shadows (the network's background input).
Tensor<float> render_backdrop(const SceneSpec& scene);

// True when the ground point seen through (row, col) is occluded from the light.
bool ground_in_shadow(const SceneSpec& scene, int row, int col);

// Ambient + Lambert + Phong shading of the foreground, alpha compositing of
// transparent materials, hard ground shadows on the background.
Tensor<float> shade_target(const SceneSpec& scene, const GBufferSample& gbuffer);

// Seed of sample `index` in a dataset generated from `dataset_seed`.
std::uint64_t sample_seed(std::uint64_t dataset_seed, int index);

// sample_scene -> rasterize -> shade, with images quantized as stored on disk.
GBufferSample make_sample(std::uint64_t seed, const SceneConfig& config);

std::vector<GBufferSample> make_samples(int count, std::uint64_t dataset_seed,
                                        const SceneConfig& config);

// Writes `count` sample directories plus manifest.json under out_dir.
DatasetManifest generate_dataset(int count, std::uint64_t seed,
                                 const std::filesystem::path& out_dir,
                                 const SceneConfig& config, int levels);

std::string sample_dir_name(int index);

}  // namespace gis::scene
