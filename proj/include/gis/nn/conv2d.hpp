#pragma once

#include <string>

#include "gis/core/rng.hpp"
#include "gis/core/tensor.hpp"
#include "gis/nn/param.hpp"

namespace gis::nn {

enum class PadMode { zero, periodic };

struct Padding {
  int top = 0, left = 0, bottom = 0, right = 0;

  static Padding same(int kernel) {
    const int before = (kernel - 1) / 2;
    return {before, before, kernel - 1 - before, kernel - 1 - before};
  }
  static Padding uniform(int p) { return {p, p, p, p}; }
};

struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  Padding pad{};
  PadMode mode = PadMode::zero;
  bool bias = true;

  int out_h(int h) const { return (h + pad.top + pad.bottom - kernel) / stride + 1; }
  int out_w(int w) const { return (w + pad.left + pad.right - kernel) / stride + 1; }
  int patch() const { return in_channels * kernel * kernel; }
};

// 2D cross-correlation via im2col + GEMM. The layer itself is stateless
// between calls; callers keep the inputs needed for backward.
template <class T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, ConvSpec spec);

  const ConvSpec& spec() const { return spec_; }
  Shape4 output_shape(const Shape4& in) const;

  // Normal(0, gain^2 / fan_in) weights, zero bias.
  void init_normal(Rng& rng, double gain);

  void forward(const Tensor<T>& x, Tensor<T>& y) const;
  // Bias-free part of forward; the layer's action as a linear map.
  void forward_linear(const Tensor<T>& x, Tensor<T>& y) const;
  // dx = d(forward)/dx^T dy; overwrites dx (resized to in_shape).
  void backward_data(const Tensor<T>& dy, const Shape4& in_shape, Tensor<T>& dx) const;
  // Adds dL/dW and dL/db for input x and output gradient dy to the given sinks.
  void accumulate_param_grads(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>& dw,
                              Tensor<T>* db) const;
  void accumulate_param_grads(const Tensor<T>& x, const Tensor<T>& dy) {
    accumulate_param_grads(x, dy, weight.grad, spec_.bias ? &bias.grad : nullptr);
  }

  ParamRefs<T> params();
  ConstParamRefs<T> params() const;

  Param<T> weight;  // (out, in, k, k)
  Param<T> bias;    // (1, out, 1, 1); empty when spec.bias is false

 private:
  ConvSpec spec_{};
};

}  // namespace gis::nn
