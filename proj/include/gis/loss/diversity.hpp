#pragma once

#include <vector>

#include "gis/core/tensor.hpp"
#include "gis/loss/objective.hpp"
#include "gis/loss/perception.hpp"
#include "gis/model/discriminator.hpp"

namespace gis {

template <class T>
struct DiversityResult {
  std::vector<LossBundle> bundles;  // one per sample
  double total = 0.0;               // mean of the bundle totals
  Tensor<T> selected;               // (B, 3, H, W): output k* of each sample
  // D run on `selected`; filled when a discriminator was given.
  typename Discriminator<T>::Trace selected_trace;
};

// Min-over-K generator objective for outputs (B, 3K, H, W). For every sample
// and output k it evaluates L^P_k, L^B_k and, when `disc` is given, L^A_k;
// combine_diversity then picks k* with w from the mask's foreground count.
// With d_outputs non-null it receives d(total)/d(outputs): foreground terms
// reach output k* only, background terms reach every output.
// `target_features` may carry fx.extract(target) to skip recomputing it.
template <class T>
DiversityResult<T> diversity_objective(
    const FeatureExtractor<T>& fx, const Discriminator<T>* disc, const Tensor<T>& outputs,
    const Tensor<T>& target, const Tensor<T>& mask, double rho, Tensor<T>* d_outputs = nullptr,
    const typename FeatureExtractor<T>::Activations* target_features = nullptr);

}  // namespace gis
