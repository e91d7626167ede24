#include "gis/gbuffer/dataset_io.hpp"

#include <bit>
#include <fstream>

#include "gis/core/error.hpp"
#include "gis/io/png.hpp"

namespace gis {
namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "raw array I/O assumes a little-endian host");

namespace {

void write_bytes(const fs::path& path, const void* data, std::size_t bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<float> read_floats(const fs::path& path, std::size_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<float> v(count);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(count * sizeof(float))) {
    throw IoError("truncated array file " + path.string());
  }
  return v;
}

// Planar (1,C,H,W) -> interleaved H x W x C.
std::vector<float> interleave(const Tensor<float>& t) {
  std::vector<float> out(t.size());
  const int c = t.c();
  for (int y = 0; y < t.h(); ++y) {
    for (int x = 0; x < t.w(); ++x) {
      for (int k = 0; k < c; ++k) {
        out[(static_cast<std::size_t>(y) * t.w() + x) * c + k] = t(0, k, y, x);
      }
    }
  }
  return out;
}

Tensor<float> deinterleave(const std::vector<float>& v, int c, int h, int w) {
  Tensor<float> t(1, c, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int k = 0; k < c; ++k) {
        t(0, k, y, x) = v[(static_cast<std::size_t>(y) * w + x) * c + k];
      }
    }
  }
  return t;
}

void write_text(const fs::path& path, const std::string& text) {
  write_bytes(path, text.data(), text.size());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace

json palette_to_json(const MaterialPalette& palette) {
  json arr = json::array();
  for (const auto& e : palette.entries) arr.push_back({{"id", e.id}, {"name", e.name}});
  return arr;
}

MaterialPalette palette_from_json(const json& j) {
  MaterialPalette p;
  for (const auto& e : j) p.entries.push_back({e.at("id").get<int>(), e.at("name").get<std::string>()});
  p.validate();
  return p;
}

void quantize_images(GBufferSample& s) {
  auto q = [](Tensor<float>& t) {
    for (auto& v : t.span()) v = io::dequantize_unit(io::quantize_unit(v));
  };
  q(s.background);
  if (s.target) q(*s.target);
}

void write_sample(const fs::path& dir, const GBufferSample& s, const MaterialPalette& palette,
                  const json& extras) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const int h = s.height(), w = s.width();

  const auto normals = interleave(s.normals);
  write_bytes(dir / "normals.f32", normals.data(), normals.size() * sizeof(float));
  write_bytes(dir / "depth.f32", s.depth.data(), s.depth.size() * sizeof(float));

  io::Raster8 labels{w, h, 1, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, kBackgroundLabel)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (s.mask(0, 0, y, x) <= 0.5f) continue;
      for (int k = 0; k < s.materials.c(); ++k) {
        if (s.materials(0, k, y, x) > 0.5f) {
          labels.pixels[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint8_t>(k);
          break;
        }
      }
    }
  }
  io::write_png(dir / "materials.png", labels);
  io::write_png(dir / "background.png", io::to_raster(s.background));
  if (s.target) io::write_png(dir / "target.png", io::to_raster(*s.target));

  json meta = {
      {"format", "gis-sample"},
      {"version", kSampleFormatVersion},
      {"height", h},
      {"width", w},
      {"dtype", "float32-le"},
      {"layout", "HWC"},
      {"palette_hash", palette.hash()},
      {"palette_size", palette.size()},
      {"z_near", s.z_near},
      {"arrays",
       {{"normals", {{"file", "normals.f32"}, {"shape", {h, w, 3}}}},
        {"depth", {{"file", "depth.f32"}, {"shape", {h, w}}}},
        {"materials", {{"file", "materials.png"}, {"encoding", "label8"},
                       {"background_label", kBackgroundLabel}}},
        {"background", {{"file", "background.png"}, {"encoding", "rgb8"}}}}},
      {"has_target", s.target.has_value()},
  };
  if (s.target) meta["arrays"]["target"] = {{"file", "target.png"}, {"encoding", "rgb8"}};
  if (!extras.is_null()) meta["extras"] = extras;
  write_text(dir / "sample.json", meta.dump(2) + "\n");
}

GBufferSample read_sample(const fs::path& dir, const MaterialPalette& palette) {
  const json meta = read_json(dir / "sample.json");
  if (meta.value("format", "") != "gis-sample") throw IoError(dir.string() + ": not a sample directory");
  if (meta.value("version", 0) != kSampleFormatVersion) throw IoError(dir.string() + ": unsupported version");
  if (meta.value("palette_hash", "") != palette.hash()) {
    throw IoError(dir.string() + ": palette hash mismatch");
  }
  const int h = meta.at("height").get<int>();
  const int w = meta.at("width").get<int>();
  const int nm = palette.size();
  GBufferSample s = GBufferSample::blank(h, w, nm, meta.at("z_near").get<float>());
  s.normals = deinterleave(read_floats(dir / "normals.f32", static_cast<std::size_t>(h) * w * 3), 3, h, w);
  s.depth = deinterleave(read_floats(dir / "depth.f32", static_cast<std::size_t>(h) * w), 1, h, w);

  const io::Raster8 labels = io::read_png(dir / "materials.png");
  if (labels.width != w || labels.height != h || labels.channels != 1) {
    throw IoError(dir.string() + ": materials.png has wrong geometry");
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint8_t l = labels.pixels[static_cast<std::size_t>(y) * w + x];
      if (l == kBackgroundLabel) continue;
      if (l >= nm) throw IoError(dir.string() + ": material label out of palette");
      s.mask(0, 0, y, x) = 1.0f;
      s.materials(0, l, y, x) = 1.0f;
    }
  }
  auto load_rgb = [&](const char* name) {
    const io::Raster8 r = io::read_png(dir / name);
    if (r.width != w || r.height != h || r.channels != 3) {
      throw IoError(dir.string() + ": " + name + " has wrong geometry");
    }
    return io::from_raster(r);
  };
  s.background = load_rgb("background.png");
  if (meta.value("has_target", false)) s.target = load_rgb("target.png");
  return s;
}

json DatasetManifest::to_json() const {
  json entries = json::array();
  for (const auto& e : samples) entries.push_back({{"index", e.index}, {"seed", e.seed}, {"dir", e.dir}});
  return {{"format", "gis-dataset"},
          {"version", kSampleFormatVersion},
          {"height", height},
          {"width", width},
          {"levels", levels},
          {"seed", seed},
          {"z_near", z_near},
          {"palette", palette_to_json(palette)},
          {"palette_hash", palette.hash()},
          {"scene_config", scene_config},
          {"samples", entries}};
}

DatasetManifest DatasetManifest::from_json(const json& j) {
  if (j.value("format", "") != "gis-dataset") throw IoError("not a dataset manifest");
  DatasetManifest m;
  m.height = j.at("height").get<int>();
  m.width = j.at("width").get<int>();
  m.levels = j.at("levels").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.z_near = j.at("z_near").get<float>();
  m.palette = palette_from_json(j.at("palette"));
  m.scene_config = j.value("scene_config", json::object());
  for (const auto& e : j.at("samples")) {
    m.samples.push_back({e.at("index").get<int>(), e.at("seed").get<std::uint64_t>(),
                         e.at("dir").get<std::string>()});
  }
  return m;
}

void write_manifest(const fs::path& root, const DatasetManifest& manifest) {
  write_text(root / "manifest.json", manifest.to_json().dump(2) + "\n");
}

DatasetManifest read_manifest(const fs::path& root) {
  return DatasetManifest::from_json(read_json(root / "manifest.json"));
}

Dataset load_dataset(const fs::path& root) {
  Dataset ds;
  ds.manifest = read_manifest(root);
  ds.samples.reserve(ds.manifest.samples.size());
  for (const auto& e : ds.manifest.samples) {
    ds.samples.push_back(read_sample(root / e.dir, ds.manifest.palette));
  }
  return ds;
}

}  // namespace gis
