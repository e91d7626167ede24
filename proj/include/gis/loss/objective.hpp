#pragma once

#include <type_traits>
#include <vector>

#include "gis/core/tensor.hpp"

namespace gis {

// Numerically stable binary cross-entropy on a logit: softplus(z) - z*y.
template <class T>
T bce_with_logits(T z, T y);
// d/dz of the above: sigmoid(z) - y.
template <class T>
T bce_with_logits_grad(T z, T y);

// Per-sample mean over background pixels (and channels) of |target - synth|:
//   sum (1-S)|dI| / (3 sum (1-S)), 0 when the mask covers the frame.
// With d_synth non-null, writes sum_n weights[n] * dL_n/dsynth.
template <class T>
std::vector<T> background_loss(const Tensor<T>& target, const Tensor<T>& synth, const Tensor<T>& mask,
                               const std::vector<std::type_identity_t<T>>* weights = nullptr, Tensor<T>* d_synth = nullptr);

// Discriminator loss: mean BCE over every cell of both maps, fake cells
// targeting 1 - S (S box-filtered to the map), real cells targeting 1.
template <class T>
T adversarial_d_loss(const Tensor<T>& logits_fake, const Tensor<T>& logits_real, const Tensor<T>& mask,
                     Tensor<T>* d_fake = nullptr, Tensor<T>* d_real = nullptr);

struct AdversarialG {
  std::vector<double> values;
  std::vector<bool> degenerate;  // no foreground in the mask
};

// Per-sample sum_c s_c BCE(z_c, 1) / sum_c s_c over the fake map; 0 and
// flagged degenerate for an empty mask.
template <class T>
AdversarialG adversarial_g_loss(const Tensor<T>& logits_fake, const Tensor<T>& mask,
                                const std::vector<std::type_identity_t<T>>* weights = nullptr, Tensor<T>* d_logits = nullptr);

// Fraction of logit cells on the correct side of 0.5, averaged over the two
// classes: real cells, and fake cells whose box-filtered mask is >= 0.5.
template <class T>
double discriminator_accuracy(const Tensor<T>& logits_fake, const Tensor<T>& logits_real,
                              const Tensor<T>& mask);

struct LossBundle {
  std::vector<double> perceptual;   // L^P_k
  std::vector<double> adversarial;  // L^A_k
  std::vector<double> background;   // L^B_k
  int k_star = 0;
  double w = 0.0;
  double total = 0.0;
  bool degenerate = false;

  int k() const { return static_cast<int>(background.size()); }
  // dL/dL^P_k = dL/dL^A_k
  double foreground_coefficient(int k) const { return k == k_star ? w : 0.0; }
  // dL/dL^B_k
  double background_coefficient() const { return (1.0 - w) / static_cast<double>(k()); }
};

// w = min(1, rho H W / |S|), 0 for an empty mask.
double diversity_weight(double foreground_pixels, int h, int w, double rho);

// k* = argmin_k (L^P_k + L^A_k), lowest index on ties;
// total = w (L^P_k* + L^A_k*) + (1 - w) mean_k L^B_k.
LossBundle combine_diversity(const std::vector<double>& perceptual, const std::vector<double>& adversarial,
                             const std::vector<double>& background, double w);
LossBundle combine_diversity(const std::vector<double>& perceptual, const std::vector<double>& adversarial,
                             const std::vector<double>& background, double foreground_pixels, int h,
                             int width, double rho);

}  // namespace gis
