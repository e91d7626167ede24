#include "gis/nn/adam.hpp"

#include <cmath>

namespace gis::nn {

template <class T>
Adam<T>::Adam(AdamConfig config, ParamRefs<T> params)
    : config_(config), params_(std::move(params)) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

template <class T>
void Adam<T>::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const T step_size = static_cast<T>(config_.lr / c1);
  const T inv_c2 = static_cast<T>(1.0 / c2);
  const T b1 = static_cast<T>(config_.beta1);
  const T b2 = static_cast<T>(config_.beta2);
  const T eps = static_cast<T>(config_.eps);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    T* w = params_[k]->value.data();
    const T* g = params_[k]->grad.data();
    T* m = m_[k].data();
    T* v = v_[k].data();
    const std::size_t count = params_[k]->value.size();
    for (std::size_t i = 0; i < count; ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      w[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace gis::nn
