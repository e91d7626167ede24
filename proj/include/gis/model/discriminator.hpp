#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "gis/core/tensor.hpp"
#include "gis/nn/conv2d.hpp"

namespace gis {

struct DiscriminatorConfig {
  std::vector<int> widths{32, 64, 128, 256, 1};
  int kernel = 4;
  double leaky_slope = 0.2;  // 1 makes the network affine
  nn::PadMode pad_mode = nn::PadMode::zero;
  std::uint64_t seed = 2;

  void validate() const;
  nlohmann::json to_json() const;
  static DiscriminatorConfig from_json(const nlohmann::json& j);
  bool operator==(const DiscriminatorConfig&) const = default;
};

// Which side of the penalty weighting a batch belongs to.
enum class PenaltySide { real, fake };

// Fully convolutional patch classifier. Four stride-2 4x4 convolutions and a
// stride-1 output layer; leaky ReLU after all but the last. Output is a logit
// map at 1/16 of the input resolution.
template <class T>
class Discriminator {
 public:
  struct Trace {
    std::vector<Tensor<T>> inputs;  // input to each layer
    std::vector<Tensor<T>> pre;     // pre-activations of hidden layers
    Tensor<T> logits;
  };

  Discriminator() = default;
  explicit Discriminator(const DiscriminatorConfig& config, int channels_in = 3);

  const DiscriminatorConfig& config() const { return config_; }
  int layer_count() const { return static_cast<int>(layers_.size()); }
  const nn::Conv2d<T>& layer(int i) const { return layers_[i]; }
  nn::Conv2d<T>& layer(int i) { return layers_[i]; }

  Shape4 output_shape(const Shape4& in) const;

  Tensor<T> forward(const Tensor<T>& images, Trace* trace = nullptr) const;
  // Accumulates parameter gradients for dL/dlogits; writes dL/dimages when
  // d_images is non-null.
  void backward(const Trace& trace, const Tensor<T>& d_logits, Tensor<T>* d_images = nullptr);
  // dL/dimages alone; parameters and their gradients are untouched.
  void input_gradient(const Trace& trace, const Tensor<T>& d_logits, Tensor<T>& d_images) const;

  // Per-cell gradient penalty of one batch already run through forward():
  //   scale * sum_{n,c} omega(z_nc) * |d z_nc / d x_n|^2
  // with omega = (1 - sigmoid)^2 on the real side and sigmoid^2 on the fake
  // side. With d_logits non-null the second-order parameter gradient is
  // accumulated and the first-order logit seed is added into *d_logits, to
  // be pushed through backward() together with any other logit gradient.
  T penalty(const Trace& trace, PenaltySide side, T scale, Tensor<T>* d_logits = nullptr);
  T penalty(const Trace& trace, PenaltySide side, T scale) const;

  nn::ParamRefs<T> params();
  nn::ConstParamRefs<T> params() const;
  std::size_t parameter_count() const;

 private:
  T penalty_impl(const Trace& trace, PenaltySide side, T scale, Tensor<T>* d_logits,
                 bool second_order);
  // Gradients of every logit cell of sample n w.r.t. the input; row c of the
  // result is cell c. deltas[l] receives the per-cell pre-activation
  // gradients of layer l when non-null.
  Tensor<T> cell_gradients(const Trace& trace, int n, std::vector<Tensor<T>>* deltas) const;

  DiscriminatorConfig config_{};
  std::vector<nn::Conv2d<T>> layers_;
};

// Convenience form over two batches: gamma/2 * (mean_real + mean_fake),
// each mean taken over cells and samples.
template <class T>
T d_regularizer(const Discriminator<T>& disc, const Tensor<T>& real, const Tensor<T>& fake,
                T gamma);

}  // namespace gis
