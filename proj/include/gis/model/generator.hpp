#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "gis/core/tensor.hpp"
#include "gis/gbuffer/sample.hpp"
#include "gis/nn/conv2d.hpp"
#include "gis/nn/ops.hpp"

namespace gis {

struct GeneratorConfig {
  int levels = 4;
  int base_h = 8;
  int base_w = 8;
  std::vector<int> widths{64, 64, 32, 32};  // one per level, coarsest first
  int k = 9;                                // number of diverse outputs
  double leaky_slope = 0.2;
  int kernel = 3;
  std::uint64_t seed = 1;  // parameter initialization

  int full_h() const { return base_h << (levels - 1); }
  int full_w() const { return base_w << (levels - 1); }
  // Throws ConfigError.
  void validate() const;

  nlohmann::json to_json() const;
  static GeneratorConfig from_json(const nlohmann::json& j);
  bool operator==(const GeneratorConfig&) const = default;
};

enum class CompositeMode { identity, hard };

// Coarse-to-fine cascade: module i runs at base * 2^i and sees the previous
// module's features (bilinearly upsampled) concatenated with the input
// pyramid level. Each module is three conv -> channel layer norm -> leaky
// ReLU blocks; a final 1x1 conv emits 3K channels mapped to [0,1] by
// (tanh + 1) / 2.
template <class T>
class Generator {
 public:
  struct Block {
    nn::Conv2d<T> conv;
    nn::ChannelLayerNorm<T> norm;
  };
  struct Module {
    Block blocks[3];
  };

  struct BlockTrace {
    Tensor<T> input;
    typename nn::ChannelLayerNorm<T>::Cache norm_cache;
    Tensor<T> normalized;  // layer-norm output, pre-activation
  };
  struct ModuleTrace {
    BlockTrace blocks[3];
    Tensor<T> features;  // F_i
  };
  struct Trace {
    std::vector<ModuleTrace> modules;
    Tensor<T> output;  // (B, 3K, H, W)
  };

  Generator() = default;
  Generator(const GeneratorConfig& config, int channels_in);

  const GeneratorConfig& config() const { return config_; }
  int channels_in() const { return channels_in_; }

  // Outputs (B, 3K, H, W); image k occupies channels [3k, 3k + 3).
  Tensor<T> forward(const InputPyramid& pyramid, Trace* trace = nullptr) const;
  // Accumulates parameter gradients for dL/d(output).
  void backward(const Trace& trace, const Tensor<T>& d_output);

  nn::ParamRefs<T> params();
  nn::ConstParamRefs<T> params() const;
  std::size_t parameter_count() const;

  void zero_final_projection();

  const std::vector<Module>& modules() const { return modules_; }
  const nn::Conv2d<T>& projection() const { return projection_; }

 private:
  void check_pyramid(const InputPyramid& pyramid) const;

  GeneratorConfig config_{};
  int channels_in_ = 0;
  std::vector<Module> modules_;
  nn::Conv2d<T> projection_;
};

// Image k of a (B, 3K, H, W) output stack as (B, 3, H, W).
template <class T>
Tensor<T> output_image(const Tensor<T>& outputs, int k) {
  return slice_channels(outputs, 3 * k, 3);
}

// identity: outputs unchanged. hard: mask * out + (1 - mask) * background.
Tensor<float> composite(const Tensor<float>& outputs, const Tensor<float>& mask,
                        const Tensor<float>& background, CompositeMode mode);

}  // namespace gis
