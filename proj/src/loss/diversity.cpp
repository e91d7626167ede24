#include "gis/loss/diversity.hpp"

#include <algorithm>

#include "gis/core/error.hpp"

namespace gis {

template <class T>
DiversityResult<T> diversity_objective(const FeatureExtractor<T>& fx, const Discriminator<T>* disc,
                                       const Tensor<T>& outputs, const Tensor<T>& target, const Tensor<T>& mask,
                                       double rho, Tensor<T>* d_outputs,
                                       const typename FeatureExtractor<T>::Activations* target_features) {
  const int nb = outputs.n(), h = outputs.h(), w = outputs.w();
  if (nb == 0 || outputs.c() == 0 || outputs.c() % 3 != 0) {
    throw ShapeError("diversity_objective: outputs " + outputs.shape().str() + " are not (B, 3K, H, W)");
  }
  require_shape(target.shape(), Shape4{nb, 3, h, w}, "diversity_objective target");
  require_shape(mask.shape(), Shape4{nb, 1, h, w}, "diversity_objective mask");
  const int kk = outputs.c() / 3;
  const std::size_t plane = outputs.plane_size();

  typename FeatureExtractor<T>::Activations own;
  if (!target_features) {
    own = fx.extract(target);
    target_features = &own;
  }

  // Per-output losses, batched as B*K images.
  Tensor<T> all(Shape4{nb * kk, 3, h, w}), target_rep(Shape4{nb * kk, 3, h, w}), mask_rep(Shape4{nb * kk, 1, h, w});
  for (int n = 0; n < nb; ++n) {
    for (int k = 0; k < kk; ++k) {
      std::copy_n(outputs.plane(n, 3 * k), 3 * plane, all.plane(n * kk + k, 0));
      std::copy_n(target.plane(n, 0), 3 * plane, target_rep.plane(n * kk + k, 0));
      std::copy_n(mask.plane(n, 0), plane, mask_rep.plane(n * kk + k, 0));
    }
  }
  const auto lb = background_loss(target_rep, all, mask_rep);
  std::vector<T> lp(nb * kk);
  for (int k = 0; k < kk; ++k) {
    Tensor<T> img(Shape4{nb, 3, h, w});
    for (int n = 0; n < nb; ++n) std::copy_n(outputs.plane(n, 3 * k), 3 * plane, img.plane(n, 0));
    const auto v = perceptual_loss(fx, *target_features, img, mask);
    for (int n = 0; n < nb; ++n) lp[n * kk + k] = v[n];
  }
  std::vector<double> la(nb * kk, 0.0);
  if (disc) la = adversarial_g_loss(disc->forward(all), mask_rep).values;

  DiversityResult<T> r;
  r.bundles.resize(nb);
  for (int n = 0; n < nb; ++n) {
    std::vector<double> p(kk), a(kk), b(kk);
    for (int k = 0; k < kk; ++k) {
      p[k] = static_cast<double>(lp[n * kk + k]);
      a[k] = la[n * kk + k];
      b[k] = static_cast<double>(lb[n * kk + k]);
    }
    double fg = 0;
    for (std::size_t i = 0; i < plane; ++i) fg += mask.plane(n, 0)[i] > T(0.5) ? 1.0 : 0.0;
    r.bundles[n] = combine_diversity(p, a, b, fg, h, w, rho);
    r.total += r.bundles[n].total / nb;
  }

  r.selected.resize(Shape4{nb, 3, h, w});
  for (int n = 0; n < nb; ++n) std::copy_n(outputs.plane(n, 3 * r.bundles[n].k_star), 3 * plane, r.selected.plane(n, 0));
  if (disc) disc->forward(r.selected, &r.selected_trace);
  if (!d_outputs) return r;

  // Background terms reach every output.
  d_outputs->resize(outputs.shape());
  std::vector<T> wts(nb * kk);
  for (int n = 0; n < nb; ++n)
    for (int k = 0; k < kk; ++k) wts[n * kk + k] = static_cast<T>(r.bundles[n].background_coefficient() / nb);
  Tensor<T> g_all;
  background_loss(target_rep, all, mask_rep, &wts, &g_all);
  for (int n = 0; n < nb; ++n)
    for (int k = 0; k < kk; ++k) std::copy_n(g_all.plane(n * kk + k, 0), 3 * plane, d_outputs->plane(n, 3 * k));

  // Foreground terms reach only the selected output.
  std::vector<T> fw(nb);
  for (int n = 0; n < nb; ++n) fw[n] = static_cast<T>(r.bundles[n].w / nb);
  Tensor<T> d_sel;
  perceptual_loss(fx, *target_features, r.selected, mask, &fw, &d_sel);
  if (disc) {
    Tensor<T> dz, d_img;
    adversarial_g_loss(r.selected_trace.logits, mask, &fw, &dz);
    disc->input_gradient(r.selected_trace, dz, d_img);
    for (std::size_t i = 0; i < d_sel.size(); ++i) d_sel.data()[i] += d_img.data()[i];
  }
  for (int n = 0; n < nb; ++n) {
    T* dst = d_outputs->plane(n, 3 * r.bundles[n].k_star);
    const T* src = d_sel.plane(n, 0);
    for (std::size_t i = 0; i < 3 * plane; ++i) dst[i] += src[i];
  }
  return r;
}

#define GIS_INSTANTIATE(T)                                                                                  \
  template DiversityResult<T> diversity_objective(const FeatureExtractor<T>&, const Discriminator<T>*,      \
                                                  const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                                  double, Tensor<T>*,                                       \
                                                  const typename FeatureExtractor<T>::Activations*);
GIS_INSTANTIATE(float)
GIS_INSTANTIATE(double)
#undef GIS_INSTANTIATE

}  // namespace gis
