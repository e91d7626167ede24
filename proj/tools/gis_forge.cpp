// gis-forge: dataset generation, training, inference and evaluation.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "gis/core/error.hpp"
#include "gis/eval/eval.hpp"
#include "gis/io/png.hpp"
#include "gis/scene/scene.hpp"
#include "gis/simd/dispatch.hpp"
#include "gis/train/trainer.hpp"

namespace {

using namespace gis;

TrainConfig load_config(const std::string& path, const std::vector<std::string>& sets, const std::string& dataset,
                        const std::string& out, const std::string& seed) {
  TrainConfig cfg = path.empty() ? TrainConfig{} : TrainConfig::load(path);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!dataset.empty()) cfg.dataset = dataset;
  if (!out.empty()) cfg.out = out;
  if (!seed.empty()) cfg.set("seed", seed);
  return cfg;
}

void parse_size(const std::string& text, int& h, int& w) {
  const auto x = text.find('x');
  try {
    if (x == std::string::npos) {
      h = w = std::stoi(text);
    } else {
      h = std::stoi(text.substr(0, x));
      w = std::stoi(text.substr(x + 1));
    }
  } catch (const std::exception&) {
    throw ConfigError("--size expects HxW, got '" + text + "'");
  }
  if (h <= 0 || w <= 0) throw ConfigError("--size must be positive");
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << j.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geometry-conditioned image synthesis toolkit"};
  app.require_subcommand(1);
  std::string simd;
  app.add_option("--simd", simd, "Kernel set: scalar, avx2, avx512 (default: best available)");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Render a procedural G-buffer dataset");
  std::string gen_out;
  std::string gen_size = "64x64", gen_palette = "default";
  int gen_count = 100, gen_levels = 4;
  std::uint64_t gen_seed = 1;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("-n,--count", gen_count, "Number of samples")->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", gen_seed, "Dataset seed");
  gen->add_option("--size", gen_size, "Image size HxW (or a single edge length)");
  gen->add_option("--levels", gen_levels, "Pyramid levels the resolution must support")->check(CLI::PositiveNumber);
  gen->add_option("--palette", gen_palette, "Material palette")->check(CLI::IsMember({"default"}));

  // train
  auto* train = app.add_subcommand("train", "Train a model");
  std::string tr_config, tr_dataset, tr_out, tr_seed;
  std::vector<std::string> tr_sets;
  train->add_option("--config", tr_config, "key = value config file");
  train->add_option("--set", tr_sets, "Override: key=value (repeatable)");
  train->add_option("--dataset", tr_dataset, "Dataset directory");
  train->add_option("--out", tr_out, "Run directory");
  train->add_option("--seed", tr_seed, "Training seed");

  // resume
  auto* res = app.add_subcommand("resume", "Continue training from a checkpoint");
  std::string rs_ckpt, rs_out;
  int rs_steps = -1;
  res->add_option("--checkpoint", rs_ckpt, "Checkpoint archive")->required();
  res->add_option("--steps", rs_steps, "Total steps to reach (default: the stored value)");
  res->add_option("--out", rs_out, "Run directory (default: the stored value)");

  // synthesize
  auto* syn = app.add_subcommand("synthesize", "Generate K images for one sample directory");
  std::string sy_ckpt, sy_sample, sy_out;
  syn->add_option("--checkpoint", sy_ckpt, "Checkpoint archive")->required();
  syn->add_option("--sample", sy_sample, "Sample directory")->required();
  syn->add_option("--out", sy_out, "Output directory")->required();

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset");
  std::string ev_ckpt, ev_data, ev_out;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint archive")->required();
  ev->add_option("--dataset", ev_data, "Held-out dataset directory")->required();
  ev->add_option("--out", ev_out, "Write the JSON report here");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Train and compare models with one input modality removed");
  std::string ab_config, ab_dataset, ab_heldout, ab_out, ab_seed;
  std::vector<std::string> ab_sets;
  std::vector<std::string> ab_exclude{"none", "normals", "depth"};
  ab->add_option("--config", ab_config, "key = value config file");
  ab->add_option("--set", ab_sets, "Override: key=value (repeatable)");
  ab->add_option("--dataset", ab_dataset, "Training dataset directory");
  ab->add_option("--heldout", ab_heldout, "Held-out dataset directory")->required();
  ab->add_option("--exclude", ab_exclude, "Modalities to drop, one model each")->delimiter(',');
  ab->add_option("--out", ab_out, "Directory for the runs and ablation.json");
  ab->add_option("--seed", ab_seed, "Training seed");

  // gallery
  auto* gal = app.add_subcommand("gallery", "Write contact-sheet PNGs");
  std::string ga_ckpt, ga_data, ga_out;
  int ga_limit = -1;
  gal->add_option("--checkpoint", ga_ckpt, "Checkpoint archive")->required();
  gal->add_option("--dataset", ga_data, "Dataset directory")->required();
  gal->add_option("--out", ga_out, "Output directory")->required();
  gal->add_option("--limit", ga_limit, "Maximum number of samples");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (!simd.empty()) {
      const auto isa = simd::parse_isa(simd);
      if (!isa) throw ConfigError("unknown kernel set '" + simd + "'");
      simd::set_active_isa(*isa);
    }

    if (*gen) {
      scene::SceneConfig sc;
      parse_size(gen_size, sc.height, sc.width);
      const auto m = scene::generate_dataset(gen_count, gen_seed, gen_out, sc, gen_levels);
      std::printf("wrote %zu samples to %s\n", m.samples.size(), gen_out.c_str());
    } else if (*train) {
      const auto cfg = load_config(tr_config, tr_sets, tr_dataset, tr_out, tr_seed);
      const auto r = fit(cfg);
      std::printf("final checkpoint: %s\nmetrics: %s\n", r.final_checkpoint.c_str(), r.metrics_log.c_str());
    } else if (*res) {
      const auto r = resume(rs_ckpt, rs_steps, rs_out);
      std::printf("final checkpoint: %s\nmetrics: %s\n", r.final_checkpoint.c_str(), r.metrics_log.c_str());
    } else if (*syn) {
      const auto s = Synthesizer::load(sy_ckpt);
      const auto sample = read_sample(sy_sample, s.info.palette);
      const auto images = s.synthesize(sample);
      std::filesystem::create_directories(sy_out);
      for (std::size_t k = 0; k < images.size(); ++k) {
        const auto path = std::filesystem::path(sy_out) / ("output_" + std::to_string(k) + ".png");
        io::write_png(path, io::to_raster(images[k]));
        std::printf("%s\n", path.c_str());
      }
    } else if (*ev) {
      const auto ds = load_dataset(ev_data);
      const auto report = evaluate(std::filesystem::path(ev_ckpt), ds.samples);
      std::printf("%s", report.table().c_str());
      if (!ev_out.empty()) write_json(ev_out, report.to_json());
    } else if (*ab) {
      auto cfg = load_config(ab_config, ab_sets, ab_dataset, ab_out, ab_seed);
      const auto heldout = load_dataset(ab_heldout);
      const auto rows = run_ablation(cfg, ab_exclude, heldout.samples);
      std::printf("%s", ablation_table(rows).c_str());
      write_json((std::filesystem::path(cfg.out) / "ablation.json").string(), ablation_json(rows));
    } else if (*gal) {
      const auto ds = load_dataset(ga_data);
      const auto paths = emit_gallery(ga_ckpt, ds.samples, ga_out, ga_limit);
      std::printf("wrote %zu grids to %s\n", paths.size(), ga_out.c_str());
    }
  } catch (const ValidationError& e) {
    spdlog::error("validation failed: {}", e.what());
    return 2;
  } catch (const ConfigError& e) {
    spdlog::error("invalid configuration: {}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
