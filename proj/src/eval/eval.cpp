#include "gis/eval/eval.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "gis/core/error.hpp"
#include "gis/train/trainer.hpp"

namespace gis {

std::optional<double> masked_l1(const Tensor<float>& a, const Tensor<float>& b, const Tensor<float>& mask) {
  require_shape(a.shape(), b.shape(), "masked_l1");
  const std::size_t plane = a.plane_size();
  const float* m = mask.plane(0, 0);
  double area = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < plane; ++i) area += m[i];
  if (area <= 0.0) return std::nullopt;
  for (int c = 0; c < a.c(); ++c) {
    const float* pa = a.plane(0, c);
    const float* pb = b.plane(0, c);
    for (std::size_t i = 0; i < plane; ++i) acc += m[i] * std::abs(static_cast<double>(pa[i]) - pb[i]);
  }
  return acc / (area * a.c());
}

std::optional<double> masked_psnr(const Tensor<float>& a, const Tensor<float>& b, const Tensor<float>& mask) {
  require_shape(a.shape(), b.shape(), "masked_psnr");
  const std::size_t plane = a.plane_size();
  const float* m = mask.plane(0, 0);
  double area = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < plane; ++i) area += m[i];
  if (area <= 0.0) return std::nullopt;
  for (int c = 0; c < a.c(); ++c) {
    const float* pa = a.plane(0, c);
    const float* pb = b.plane(0, c);
    for (std::size_t i = 0; i < plane; ++i) {
      const double d = static_cast<double>(pa[i]) - pb[i];
      acc += m[i] * d * d;
    }
  }
  const double mse = acc / (area * a.c());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

namespace {

double background_l1(const Tensor<float>& a, const Tensor<float>& b, const Tensor<float>& mask) {
  const std::size_t plane = a.plane_size();
  const float* m = mask.plane(0, 0);
  double area = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < plane; ++i) area += 1.0 - m[i];
  if (area <= 0.0) return 0.0;
  for (int c = 0; c < a.c(); ++c) {
    const float* pa = a.plane(0, c);
    const float* pb = b.plane(0, c);
    for (std::size_t i = 0; i < plane; ++i) acc += (1.0 - m[i]) * std::abs(static_cast<double>(pa[i]) - pb[i]);
  }
  return acc / (area * a.c());
}

std::string fmt_opt(const std::optional<double>& v, const char* f = "%.4f") {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), f, *v);
  return buf;
}

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

SampleEval evaluate_sample(const std::vector<Tensor<float>>& outputs, const GBufferSample& sample, int index) {
  if (!sample.target) throw ValidationError("evaluate: sample " + std::to_string(index) + " has no target");
  if (outputs.empty()) throw ShapeError("evaluate: no outputs");
  const Tensor<float>& target = *sample.target;
  SampleEval e;
  e.index = index;
  e.has_foreground = sample.foreground_pixels() > 0;
  const int kk = static_cast<int>(outputs.size());
  for (const auto& o : outputs) require_shape(o.shape(), target.shape(), "evaluate output");
  if (!e.has_foreground) {
    double bg = 0.0;
    for (const auto& o : outputs) bg += background_l1(o, target, sample.mask);
    e.background_l1 = bg / kk;
    return e;
  }
  for (int k = 0; k < kk; ++k) {
    e.per_k_l1.push_back(*masked_l1(outputs[k], target, sample.mask));
    if (e.per_k_l1[k] < e.per_k_l1[e.best_k]) e.best_k = k;
  }
  e.masked_l1 = e.per_k_l1[e.best_k];
  e.masked_psnr = masked_psnr(outputs[e.best_k], target, sample.mask);
  double spread = 0.0;
  int pairs = 0;
  for (int j = 0; j < kk; ++j) {
    for (int k = j + 1; k < kk; ++k) {
      spread += *masked_l1(outputs[j], outputs[k], sample.mask);
      ++pairs;
    }
  }
  e.spread = pairs ? spread / pairs : 0.0;
  e.background_l1 = background_l1(outputs[e.best_k], target, sample.mask);
  return e;
}

EvalReport evaluate(const SynthesizeFn& synthesize, std::span<const GBufferSample> samples) {
  if (samples.empty()) throw ValidationError("evaluate: empty dataset");
  EvalReport r;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    r.samples.push_back(evaluate_sample(synthesize(samples[i]), samples[i], static_cast<int>(i)));
  }
  for (const auto& s : r.samples) {
    r.background_l1 += s.background_l1 / static_cast<double>(r.samples.size());
    if (!s.has_foreground) continue;
    ++r.foreground_samples;
    r.masked_l1 += *s.masked_l1;
    r.masked_psnr += *s.masked_psnr;
    r.spread += *s.spread;
  }
  if (r.foreground_samples) {
    r.masked_l1 /= r.foreground_samples;
    r.masked_psnr /= r.foreground_samples;
    r.spread /= r.foreground_samples;
  }
  return r;
}

EvalReport evaluate(const std::filesystem::path& checkpoint, std::span<const GBufferSample> samples) {
  const auto synth = Synthesizer::load(checkpoint);
  return evaluate([&](const GBufferSample& s) { return synth.synthesize(s); }, samples);
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& s : samples) {
    per.push_back({{"index", s.index},
                   {"has_foreground", s.has_foreground},
                   {"best_k", s.best_k},
                   {"masked_l1", opt_json(s.masked_l1)},
                   {"masked_psnr", opt_json(s.masked_psnr)},
                   {"spread", opt_json(s.spread)},
                   {"background_l1", s.background_l1}});
  }
  return {{"aggregate",
           {{"masked_l1", masked_l1},
            {"masked_psnr", masked_psnr},
            {"spread", spread},
            {"background_l1", background_l1},
            {"samples", samples.size()},
            {"foreground_samples", foreground_samples}}},
          {"samples", per}};
}

std::string EvalReport::table() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-8s %-6s %-10s %-10s %-10s %-10s\n", "sample", "best_k", "masked_l1",
                "psnr_db", "spread", "bg_l1");
  os << line;
  for (const auto& s : samples) {
    std::snprintf(line, sizeof(line), "%-8d %-6d %-10s %-10s %-10s %-10.4f\n", s.index, s.best_k,
                  fmt_opt(s.masked_l1).c_str(), fmt_opt(s.masked_psnr, "%.2f").c_str(), fmt_opt(s.spread).c_str(),
                  s.background_l1);
    os << line;
  }
  std::snprintf(line, sizeof(line), "%-8s %-6s %-10.4f %-10.2f %-10.4f %-10.4f\n", "mean", "", masked_l1,
                masked_psnr, spread, background_l1);
  os << line;
  return os.str();
}

std::vector<AblationRow> run_ablation(const TrainConfig& base, const std::vector<std::string>& excluded,
                                      std::span<const GBufferSample> heldout) {
  std::vector<AblationRow> rows;
  for (const auto& name : excluded) {
    TrainConfig cfg = base;
    cfg.modalities = Modalities::excluding(name);
    cfg.out = (std::filesystem::path(base.out) / name).string();
    const auto result = fit(cfg);
    rows.push_back({name, evaluate(result.final_checkpoint, heldout)});
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-10s %-10s %-10s %-10s\n", "excluded", "masked_l1", "psnr_db", "bg_l1");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-10s %-10.4f %-10.2f %-10.4f\n", r.excluded.c_str(), r.report.masked_l1,
                  r.report.masked_psnr, r.report.background_l1);
    os << line;
  }
  return os.str();
}

nlohmann::json ablation_json(const std::vector<AblationRow>& rows) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& r : rows) j[r.excluded] = r.report.to_json()["aggregate"];
  return j;
}

namespace {

constexpr int kGutter = 2;
constexpr std::uint8_t kGutterValue = 128;

// Distinct label colours, cycled for larger palettes.
constexpr std::uint8_t kLabelColors[][3] = {{230, 25, 75},  {0, 130, 200},  {60, 180, 75},   {255, 225, 25},
                                            {145, 30, 180}, {70, 240, 240}, {245, 130, 48},  {240, 50, 230},
                                            {210, 245, 60}, {250, 190, 190}, {0, 128, 128}, {170, 110, 40}};

void blit(io::Raster8& grid, int panel, int h, int w, const std::function<void(int, int, std::uint8_t*)>& pixel) {
  const int x0 = panel * (w + kGutter);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      pixel(r, c, &grid.pixels[(static_cast<std::size_t>(r) * grid.width + x0 + c) * 3]);
    }
  }
}

void blit_image(io::Raster8& grid, int panel, const Tensor<float>& img) {
  blit(grid, panel, img.h(), img.w(), [&](int r, int c, std::uint8_t* px) {
    for (int ch = 0; ch < 3; ++ch) px[ch] = io::quantize_unit(img(0, ch, r, c));
  });
}

}  // namespace

io::Raster8 gallery_grid(const GBufferSample& s, const std::vector<Tensor<float>>& outputs, io::TextChunks* text) {
  const int h = s.height(), w = s.width();
  const int panels = 6 + static_cast<int>(outputs.size());
  io::Raster8 grid;
  grid.width = panels * w + (panels - 1) * kGutter;
  grid.height = h;
  grid.channels = 3;
  grid.pixels.assign(static_cast<std::size_t>(grid.width) * h * 3, kGutterValue);

  blit(grid, 0, h, w, [&](int r, int c, std::uint8_t* px) {
    const bool fg = s.mask(0, 0, r, c) > 0.5f;
    for (int ch = 0; ch < 3; ++ch) px[ch] = fg ? io::quantize_unit(0.5f * (s.normals(0, ch, r, c) + 1.0f)) : 0;
  });
  const Tensor<float> disparity = encode_depth(s.depth, s.mask, s.z_near);
  blit(grid, 1, h, w, [&](int r, int c, std::uint8_t* px) {
    px[0] = px[1] = px[2] = io::quantize_unit(disparity(0, 0, r, c));
  });
  blit(grid, 2, h, w, [&](int r, int c, std::uint8_t* px) {
    px[0] = px[1] = px[2] = 0;
    for (int m = 0; m < s.materials.c(); ++m) {
      if (s.materials(0, m, r, c) > 0.5f) {
        const auto& col = kLabelColors[m % std::size(kLabelColors)];
        px[0] = col[0];
        px[1] = col[1];
        px[2] = col[2];
      }
    }
  });
  blit(grid, 3, h, w, [&](int r, int c, std::uint8_t* px) {
    px[0] = px[1] = px[2] = io::quantize_unit(s.mask(0, 0, r, c));
  });
  blit_image(grid, 4, s.background);
  if (s.target) {
    blit_image(grid, 5, *s.target);
  } else {
    blit(grid, 5, h, w, [](int, int, std::uint8_t* px) { px[0] = px[1] = px[2] = 0; });
  }
  for (std::size_t k = 0; k < outputs.size(); ++k) blit_image(grid, 6 + static_cast<int>(k), outputs[k]);

  if (text) {
    text->clear();
    text->push_back({"layout-version", std::to_string(kGalleryLayoutVersion)});
    text->push_back({"panels", "normals,disparity,materials,mask,background,target,outputs x" +
                                   std::to_string(outputs.size())});
    if (s.foreground_pixels() == 0) text->push_back({"annotation", "no foreground"});
  }
  return grid;
}

std::vector<std::filesystem::path> emit_gallery(const std::filesystem::path& checkpoint,
                                                std::span<const GBufferSample> samples,
                                                const std::filesystem::path& out_dir, int limit) {
  const auto synth = Synthesizer::load(checkpoint);
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  const std::size_t count = limit < 0 ? samples.size() : std::min<std::size_t>(samples.size(), limit);
  for (std::size_t i = 0; i < count; ++i) {
    io::TextChunks text;
    const auto grid = gallery_grid(samples[i], synth.synthesize(samples[i]), &text);
    char name[32];
    std::snprintf(name, sizeof(name), "grid_%06zu.png", i);
    const auto path = out_dir / name;
    io::write_png(path, grid, text);
    written.push_back(path);
  }
  return written;
}

}  // namespace gis
