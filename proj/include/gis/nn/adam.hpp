#pragma once

#include <cstdint>
#include <vector>

#include "gis/nn/param.hpp"

namespace gis::nn {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive-moment optimizer with bias correction. Moments are aligned with
// the parameter list given at construction.
template <class T>
class Adam {
 public:
  Adam() = default;
  Adam(AdamConfig config, ParamRefs<T> params);

  void step();

  const AdamConfig& config() const { return config_; }
  std::int64_t steps_taken() const { return t_; }
  void set_steps_taken(std::int64_t t) { t_ = t; }

  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }
  const std::vector<Tensor<T>>& first_moments() const { return m_; }
  const std::vector<Tensor<T>>& second_moments() const { return v_; }
  const ParamRefs<T>& params() const { return params_; }

 private:
  AdamConfig config_{};
  ParamRefs<T> params_;
  std::vector<Tensor<T>> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace gis::nn
