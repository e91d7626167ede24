#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gis/gbuffer/dataset_io.hpp"
#include "gis/io/png.hpp"
#include "gis/train/config.hpp"

namespace gis {

constexpr double kPsnrCap = 99.0;
constexpr int kGalleryLayoutVersion = 1;

struct SampleEval {
  int index = 0;
  bool has_foreground = false;
  int best_k = 0;
  std::optional<double> masked_l1;    // best-of-K, mean over foreground pixels and channels
  std::optional<double> masked_psnr;  // of the best output, peak 1, capped
  std::optional<double> spread;       // mean pairwise foreground L1 across outputs
  double background_l1 = 0.0;         // of the best output (all outputs' mean when no foreground)
  std::vector<double> per_k_l1;       // masked L1 of every output
};

struct EvalReport {
  std::vector<SampleEval> samples;
  // Means over samples with foreground (masked metrics) or all samples.
  double masked_l1 = 0.0;
  double masked_psnr = 0.0;
  double spread = 0.0;
  double background_l1 = 0.0;
  int foreground_samples = 0;

  nlohmann::json to_json() const;
  std::string table() const;
};

using SynthesizeFn = std::function<std::vector<Tensor<float>>(const GBufferSample&)>;

// Mean |a - b| over pixels with mask weight, per channel; nullopt when the
// mask is empty.
std::optional<double> masked_l1(const Tensor<float>& a, const Tensor<float>& b, const Tensor<float>& mask);
std::optional<double> masked_psnr(const Tensor<float>& a, const Tensor<float>& b, const Tensor<float>& mask);

SampleEval evaluate_sample(const std::vector<Tensor<float>>& outputs, const GBufferSample& sample, int index = 0);
// Throws ValidationError on an empty dataset or a sample without target.
EvalReport evaluate(const SynthesizeFn& synthesize, std::span<const GBufferSample> samples);
EvalReport evaluate(const std::filesystem::path& checkpoint, std::span<const GBufferSample> samples);

struct AblationRow {
  std::string excluded;
  EvalReport report;
};

// Trains one model per entry of `excluded` ("none", "normals", "depth",
// "materials") from `base`, each under base.out/<name>, and evaluates it
// on `heldout`.
std::vector<AblationRow> run_ablation(const TrainConfig& base, const std::vector<std::string>& excluded,
                                      std::span<const GBufferSample> heldout);
std::string ablation_table(const std::vector<AblationRow>& rows);
nlohmann::json ablation_json(const std::vector<AblationRow>& rows);

// One PNG per sample: normals | disparity | materials | mask | background |
// target | K outputs, 2-pixel gutters. Returns the written paths.
std::vector<std::filesystem::path> emit_gallery(const std::filesystem::path& checkpoint,
                                                std::span<const GBufferSample> samples,
                                                const std::filesystem::path& out_dir, int limit = -1);
// Grid raster and text annotations for one sample.
io::Raster8 gallery_grid(const GBufferSample& sample, const std::vector<Tensor<float>>& outputs,
                         io::TextChunks* text = nullptr);

}  // namespace gis
