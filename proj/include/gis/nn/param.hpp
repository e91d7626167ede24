#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gis/core/tensor.hpp"

namespace gis::nn {

// A trainable array with its accumulated gradient.
template <class T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string n, Shape4 s) : name(std::move(n)), value(s), grad(s) {}

  void zero_grad() { grad.zero(); }
};

template <class T>
using ParamRefs = std::vector<Param<T>*>;

template <class T>
using ConstParamRefs = std::vector<const Param<T>*>;

template <class T>
void zero_grads(const ParamRefs<T>& params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace gis::nn
