#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "gis/core/tensor.hpp"

namespace gis::io {

// 8-bit interleaved raster (1 = gray, 3 = RGB).
struct Raster8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

using TextChunks = std::vector<std::pair<std::string, std::string>>;

// Writes with fixed zlib settings so identical rasters give identical bytes.
void write_png(const std::filesystem::path& path, const Raster8& raster,
               const TextChunks& text = {});
Raster8 read_png(const std::filesystem::path& path);
TextChunks read_png_text(const std::filesystem::path& path);

std::uint8_t quantize_unit(float v);
inline float dequantize_unit(std::uint8_t v) { return static_cast<float>(v) / 255.0f; }

// (1, 3, H, W) float image in [0,1] <-> RGB raster.
Raster8 to_raster(const Tensor<float>& image);
Tensor<float> from_raster(const Raster8& raster);

}  // namespace gis::io
