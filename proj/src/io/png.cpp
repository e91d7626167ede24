#include "gis/io/png.hpp"

#include <png.h>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "gis/core/error.hpp"

namespace gis::io {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

[[noreturn]] void png_fail(png_structp, png_const_charp msg) {
  throw IoError(std::string("png: ") + msg);
}
void png_warn(png_structp, png_const_charp) {}

}  // namespace

void write_png(const std::filesystem::path& path, const Raster8& r, const TextChunks& text) {
  if (r.channels != 1 && r.channels != 3) throw IoError("write_png: unsupported channel count");
  if (r.pixels.size() != static_cast<std::size_t>(r.width) * r.height * r.channels) {
    throw IoError("write_png: pixel buffer size mismatch");
  }
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("write_png: libpng init failed");
  }
  try {
    png_init_io(png, f.get());
    png_set_IHDR(png, info, r.width, r.height, 8,
                 r.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, Z_BEST_SPEED);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    std::vector<png_text> chunks(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
      chunks[i].compression = PNG_TEXT_COMPRESSION_NONE;
      chunks[i].key = const_cast<char*>(text[i].first.c_str());
      chunks[i].text = const_cast<char*>(text[i].second.c_str());
      chunks[i].text_length = text[i].second.size();
    }
    if (!chunks.empty()) png_set_text(png, info, chunks.data(), static_cast<int>(chunks.size()));
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(r.width) * r.channels;
    for (int y = 0; y < r.height; ++y) {
      png_write_row(png, const_cast<png_bytep>(r.pixels.data() + y * stride));
    }
    png_write_end(png, info);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  if (std::fflush(f.get()) != 0) throw IoError("write_png: flush failed for " + path.string());
}

namespace {

template <class Fn>
void with_reader(const std::filesystem::path& path, Fn&& fn) {
  FilePtr f = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("read_png: libpng init failed");
  }
  try {
    png_init_io(png, f.get());
    png_read_info(png, info);
    fn(png, info);
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
}

}  // namespace

Raster8 read_png(const std::filesystem::path& path) {
  Raster8 r;
  with_reader(path, [&](png_structp png, png_infop info) {
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (depth != 8 || (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_RGB)) {
      throw IoError("read_png: only 8-bit gray/RGB supported: " + path.string());
    }
    r.width = static_cast<int>(png_get_image_width(png, info));
    r.height = static_cast<int>(png_get_image_height(png, info));
    r.channels = color == PNG_COLOR_TYPE_GRAY ? 1 : 3;
    r.pixels.resize(static_cast<std::size_t>(r.width) * r.height * r.channels);
    const std::size_t stride = static_cast<std::size_t>(r.width) * r.channels;
    for (int y = 0; y < r.height; ++y) png_read_row(png, r.pixels.data() + y * stride, nullptr);
  });
  return r;
}

TextChunks read_png_text(const std::filesystem::path& path) {
  TextChunks out;
  with_reader(path, [&](png_structp png, png_infop info) {
    png_textp text = nullptr;
    int count = 0;
    png_get_text(png, info, &text, &count);
    for (int i = 0; i < count; ++i) out.emplace_back(text[i].key, text[i].text);
  });
  return out;
}

std::uint8_t quantize_unit(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

Raster8 to_raster(const Tensor<float>& image) {
  if (image.n() != 1 || (image.c() != 3 && image.c() != 1)) {
    throw ShapeError("to_raster: expected (1,3,H,W) or (1,1,H,W), got " + image.shape().str());
  }
  Raster8 r{image.w(), image.h(), image.c(), {}};
  r.pixels.resize(image.size());
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      for (int c = 0; c < r.channels; ++c) {
        r.pixels[(static_cast<std::size_t>(y) * r.width + x) * r.channels + c] =
            quantize_unit(image(0, c, y, x));
      }
    }
  }
  return r;
}

Tensor<float> from_raster(const Raster8& r) {
  Tensor<float> out(1, r.channels, r.height, r.width);
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      for (int c = 0; c < r.channels; ++c) {
        out(0, c, y, x) =
            dequantize_unit(r.pixels[(static_cast<std::size_t>(y) * r.width + x) * r.channels + c]);
      }
    }
  }
  return out;
}

}  // namespace gis::io
