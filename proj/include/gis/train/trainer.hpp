#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gis/core/rng.hpp"
#include "gis/gbuffer/dataset_io.hpp"
#include "gis/io/archive.hpp"
#include "gis/loss/objective.hpp"
#include "gis/loss/perception.hpp"
#include "gis/model/discriminator.hpp"
#include "gis/model/generator.hpp"
#include "gis/nn/adam.hpp"
#include "gis/train/config.hpp"

namespace gis {

// Summary of one optimization step, computed from the parameters the step
// started from.
struct StepMetrics {
  std::int64_t step = 0;
  double loss = 0.0;            // mean over the batch of the combined objective
  double perceptual = 0.0;      // mean L^P of the selected outputs
  double adversarial = 0.0;     // mean L^A of the selected outputs
  double background = 0.0;      // mean L^B over outputs and samples
  double w = 0.0;               // mean foreground weight
  double d_loss = 0.0;
  double regularizer = 0.0;     // 0 on steps where the penalty is skipped
  double d_accuracy = 0.0;
  std::vector<int> k_star;
  std::vector<int> indices;     // dataset indices of the batch
  double seconds = 0.0;

  nlohmann::json to_json() const;
};

// Everything a checkpoint carries besides the two networks.
struct CheckpointInfo {
  TrainConfig config;
  int channels_in = 0;
  int height = 0;
  int width = 0;
  MaterialPalette palette;
  std::int64_t step = 0;
};

template <class T>
class Trainer {
 public:
  // `samples` must outlive the trainer. `config` must already be resolved
  // against the sample resolution.
  Trainer(const TrainConfig& config, std::span<const GBufferSample> samples,
          const MaterialPalette& palette, std::vector<Tensor<float>> real_pool = {});
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  // Draws a batch from the internal generator and runs one step.
  StepMetrics train_step();
  // One D update (BCE + penalty) and one G update on the given batch. Both
  // gradients are taken at the current parameters. Throws NumericError on a
  // non-finite loss or gradient, before any parameter changes.
  StepMetrics train_step(std::span<const int> indices);

  std::int64_t step() const { return step_; }
  const TrainConfig& config() const { return config_; }
  Generator<T>& generator() { return gen_; }
  const Generator<T>& generator() const { return gen_; }
  Discriminator<T>& discriminator() { return disc_; }
  const Discriminator<T>& discriminator() const { return disc_; }
  const FeatureExtractor<T>& extractor() const { return fx_; }
  const Rng& rng() const { return rng_; }

  std::vector<int> draw_batch();

  io::Archive to_archive() const;
  void save(const std::filesystem::path& path) const;
  // Restores parameters, moments, step and RNG; the archive must have been
  // written by a trainer of the same configuration.
  void restore(const io::Archive& archive);

 private:
  TrainConfig config_;
  std::span<const GBufferSample> samples_;
  MaterialPalette palette_;
  std::vector<Tensor<float>> real_pool_;
  int channels_in_ = 0;
  Generator<T> gen_;
  Discriminator<T> disc_;
  FeatureExtractor<T> fx_;
  nn::Adam<T> adam_g_;
  nn::Adam<T> adam_d_;
  Rng rng_;
  std::int64_t step_ = 0;
};

CheckpointInfo read_checkpoint_info(const io::Archive& archive);

// Generator restored from a checkpoint, for inference.
struct Synthesizer {
  CheckpointInfo info;
  Generator<float> generator;

  static Synthesizer load(const std::filesystem::path& checkpoint);
  // K images, each (1, 3, H, W). Throws ShapeError on a resolution mismatch.
  std::vector<Tensor<float>> synthesize(const GBufferSample& sample) const;
};

struct FitResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path metrics_log;
  std::vector<StepMetrics> metrics;
};

// Loads and validates the dataset (all failures reported together as a
// ValidationError), trains for config.steps, writes checkpoints at the
// configured cadence plus final.gis, and logs metrics as JSON lines.
FitResult fit(TrainConfig config);
// Continues the run stored in `checkpoint` up to `steps` total (the stored
// value when negative), appending to the same metrics log.
FitResult resume(const std::filesystem::path& checkpoint, int steps = -1,
                 const std::string& out_override = {});

}  // namespace gis
