#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "gis/core/tensor.hpp"
#include "gis/nn/conv2d.hpp"

namespace gis {

enum class ExtractorKind { identity, random, file };

// How to build the frozen feature network. `random` uses a seed-fixed stack of
// 3x3 stride-2 convolutions with leaky ReLU; `file` loads the same topology
// from an archive written by save_extractor(). `use_layers` picks which
// activations enter the loss (empty = all).
struct ExtractorSpec {
  ExtractorKind kind = ExtractorKind::random;
  std::vector<int> channels{16, 32, 64, 64, 64};
  std::vector<int> use_layers;
  std::uint64_t seed = 7;
  double leaky_slope = 0.2;
  std::string path;

  void validate() const;
  nlohmann::json to_json() const;
  static ExtractorSpec from_json(const nlohmann::json& j);
  // "identity", "random", "file:<path>"
  static ExtractorSpec parse(const std::string& text);
  bool operator==(const ExtractorSpec&) const = default;
};

template <class T>
class FeatureExtractor {
 public:
  using Activations = std::vector<Tensor<T>>;

  explicit FeatureExtractor(const ExtractorSpec& spec = {});

  const ExtractorSpec& spec() const { return spec_; }
  int layer_count() const;
  // Activation shapes for an input of the given shape; throws ShapeError when
  // the resolution cannot reach the coarsest layer.
  std::vector<Shape4> layer_shapes(const Shape4& image) const;
  // lambda_l = 1 / (C_l H_l W_l) for each used layer.
  std::vector<double> layer_weights(const Shape4& image) const;

  // Used activations only, in layer order. With `pre` non-null, all hidden
  // pre-activations are kept for backward.
  Activations extract(const Tensor<T>& image, Activations* pre = nullptr) const;
  // dL/dimage from dL/d(used activation l).
  void backward(const Activations& pre, const Activations& d_used, Tensor<T>& d_image) const;

  const std::vector<nn::Conv2d<T>>& layers() const { return layers_; }

 private:
  std::vector<int> used() const;

  ExtractorSpec spec_;
  std::vector<nn::Conv2d<T>> layers_;
};

template <class T>
void save_extractor(const FeatureExtractor<T>& fx, const std::filesystem::path& path);

// Per-sample masked perceptual loss
//   sum_l lambda_l sum_{c,y,x} S_l(y,x) |V_l(target) - V_l(synth)|
// with S_l the mask box-filtered to layer l's resolution. When d_synth is
// non-null it receives sum_n weights[n] * dL_n/dsynth.
template <class T>
std::vector<T> perceptual_loss(const FeatureExtractor<T>& fx,
                               const typename FeatureExtractor<T>::Activations& target_features,
                               const Tensor<T>& synth, const Tensor<T>& mask,
                               const std::vector<std::type_identity_t<T>>* weights = nullptr,
                               Tensor<T>* d_synth = nullptr);

template <class T>
std::vector<T> perceptual_loss(const FeatureExtractor<T>& fx, const Tensor<T>& target,
                               const Tensor<T>& synth, const Tensor<T>& mask,
                               const std::vector<std::type_identity_t<T>>* weights = nullptr,
                               Tensor<T>* d_synth = nullptr);

}  // namespace gis
