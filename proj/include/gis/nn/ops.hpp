#pragma once

#include "gis/core/tensor.hpp"
#include "gis/nn/param.hpp"

namespace gis::nn {

// y = x for x > 0, slope * x otherwise. Backward gates dy by the sign of the
// pre-activation x.
template <class T>
void leaky_relu(const Tensor<T>& x, T slope, Tensor<T>& y);
template <class T>
void leaky_relu_backward(const Tensor<T>& x, const Tensor<T>& dy, T slope, Tensor<T>& dx);
// In-place dy *= f'(x).
template <class T>
void leaky_relu_gate(const Tensor<T>& x, T slope, Tensor<T>& dy);

// Layer normalization across the channel axis at every pixel, followed by a
// per-channel affine map.
template <class T>
class ChannelLayerNorm {
 public:
  struct Cache {
    Tensor<T> normalized;  // x-hat
    Tensor<T> inv_std;     // (n, 1, h, w)
  };

  ChannelLayerNorm() = default;
  ChannelLayerNorm(const std::string& name, int channels, T eps = T(1e-5));

  void forward(const Tensor<T>& x, Tensor<T>& y, Cache& cache) const;
  // Writes dx and accumulates gain/bias gradients.
  void backward(const Tensor<T>& dy, const Cache& cache, Tensor<T>& dx);

  ParamRefs<T> params() { return {&gain, &bias}; }
  ConstParamRefs<T> params() const { return {&gain, &bias}; }

  Param<T> gain;
  Param<T> bias;

 private:
  T eps_ = T(1e-5);
};

// Bilinear 2x upsampling with half-pixel centers and edge clamping.
template <class T>
void upsample2x(const Tensor<T>& x, Tensor<T>& y);
template <class T>
void upsample2x_backward(const Tensor<T>& dy, Tensor<T>& dx);

// Non-overlapping 2x2 mean.
template <class T>
void avg_pool2x(const Tensor<T>& x, Tensor<T>& y);

// Channel concatenation [a, b].
template <class T>
void concat_channels(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& out);

// Maps logits to [0,1] via (tanh(x) + 1) / 2.
template <class T>
void tanh_unit(const Tensor<T>& x, Tensor<T>& y);
// Given the forward output y, dx = dy * (1 - (2y - 1)^2) / 2.
template <class T>
void tanh_unit_backward(const Tensor<T>& y, const Tensor<T>& dy, Tensor<T>& dx);

template <class T>
T sigmoid(T x);

}  // namespace gis::nn
