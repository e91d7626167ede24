#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gis/gbuffer/sample.hpp"

namespace gis {

// On-disk layout of one sample directory:
//   sample.json     manifest (shapes, dtype, layout, palette hash, z_near, extras)
//   normals.f32     H x W x 3 little-endian float32, interleaved
//   depth.f32       H x W little-endian float32
//   materials.png   8-bit label map, material id or 255 for background
//   background.png  8-bit RGB
//   target.png      8-bit RGB (optional)
// The mask is the set of labelled pixels; one-hot materials are rebuilt on load.
constexpr std::uint8_t kBackgroundLabel = 255;
constexpr int kSampleFormatVersion = 1;

void write_sample(const std::filesystem::path& dir, const GBufferSample& sample,
                  const MaterialPalette& palette, const nlohmann::json& extras = {});
// Throws IoError on missing files or a palette hash mismatch.
GBufferSample read_sample(const std::filesystem::path& dir, const MaterialPalette& palette);

// Images pass through 8-bit storage; this applies the same quantization in
// memory so freshly generated and re-loaded samples are identical.
void quantize_images(GBufferSample& sample);

struct DatasetManifest {
  struct Entry {
    int index = 0;
    std::uint64_t seed = 0;
    std::string dir;
  };

  int height = 0;
  int width = 0;
  int levels = 1;
  std::uint64_t seed = 0;
  float z_near = 1.0f;
  MaterialPalette palette;
  nlohmann::json scene_config;
  std::vector<Entry> samples;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
};

void write_manifest(const std::filesystem::path& root, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& root);

struct Dataset {
  DatasetManifest manifest;
  std::vector<GBufferSample> samples;
};

Dataset load_dataset(const std::filesystem::path& root);

nlohmann::json palette_to_json(const MaterialPalette& palette);
MaterialPalette palette_from_json(const nlohmann::json& j);

}  // namespace gis
