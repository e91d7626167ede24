#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "gis/gbuffer/sample.hpp"
#include "gis/loss/perception.hpp"
#include "gis/model/discriminator.hpp"
#include "gis/model/generator.hpp"

namespace gis {

enum class Precision { f32, f64 };

// Training configuration. The text form is one `key = value` per line;
// '#' starts a comment. Keys:
//   dataset, out, real_dir            paths
//   steps, batch_size, seed           run length and determinism
//   lr_g, lr_d, beta1, beta2, eps     optimizer
//   gamma, reg_every                  discriminator penalty weight and interval
//   rho                               foreground weight constant
//   adversarial                       true | false (false = supervised only)
//   k, levels, widths                 generator (widths comma-separated)
//   leaky_slope                       generator and discriminator
//   d_widths, d_pad                   discriminator (d_pad: zero | periodic)
//   extractor, extractor_layers       identity | random | file:<path>; layer list
//   exclude                           none | normals | depth | materials
//   checkpoint_every, log_every       cadences in steps (0 = never)
//   precision                         f32 | f64
struct TrainConfig {
  std::string dataset;
  std::string out = "run";
  std::string real_dir;
  int steps = 5000;
  int batch_size = 4;
  std::uint64_t seed = 1;
  double lr_g = 2e-4;
  double lr_d = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double gamma = 2.0;
  int reg_every = 8;
  double rho = 0.1;
  bool adversarial = true;
  int checkpoint_every = 1000;
  int log_every = 1;
  Precision precision = Precision::f32;
  Modalities modalities{};
  ExtractorSpec extractor{};
  GeneratorConfig generator{};
  DiscriminatorConfig discriminator{};

  // Throws ConfigError.
  void validate() const;
  // Applies one `key=value` assignment; throws ConfigError on unknown keys.
  void set(const std::string& key, const std::string& value);
  void apply_text(const std::string& text);
  static TrainConfig load(const std::string& path);
  std::string to_text() const;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);

  // Fits the generator's base resolution to the image size and derives
  // network seeds from `seed`.
  void resolve(int height, int width);
};

}  // namespace gis
