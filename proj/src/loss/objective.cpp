#include "gis/loss/objective.hpp"

#include <algorithm>
#include <cmath>

#include "gis/core/error.hpp"
#include "gis/gbuffer/sample.hpp"
#include "gis/nn/ops.hpp"

namespace gis {

template <class T>
T bce_with_logits(T z, T y) {
  return std::max(z, T(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
}

template <class T>
T bce_with_logits_grad(T z, T y) {
  return nn::sigmoid(z) - y;
}

namespace {

void check_mask(const Shape4& img, const Shape4& mask, const char* what) {
  if (mask.n != img.n || mask.c != 1 || mask.h != img.h || mask.w != img.w) {
    throw ShapeError(std::string(what) + ": mask " + mask.str() + " does not match " + img.str());
  }
}

template <class T>
Tensor<T> cell_mask(const Tensor<T>& logits, const Tensor<T>& mask, const char* what) {
  if (mask.n() != logits.n() || mask.c() != 1 || logits.h() == 0 || mask.h() % logits.h() != 0 ||
      mask.h() / logits.h() != mask.w() / logits.w() || mask.w() % logits.w() != 0) {
    throw ShapeError(std::string(what) + ": mask " + mask.shape().str() +
                     " incompatible with logit map " + logits.shape().str());
  }
  return downscale_mask(mask, mask.h() / logits.h());
}

}  // namespace

template <class T>
std::vector<T> background_loss(const Tensor<T>& target, const Tensor<T>& synth, const Tensor<T>& mask,
                               const std::vector<std::type_identity_t<T>>* weights, Tensor<T>* d_synth) {
  require_shape(target.shape(), synth.shape(), "background_loss");
  check_mask(synth.shape(), mask.shape(), "background_loss");
  const int nb = synth.n();
  const int ch = synth.c();
  const std::size_t plane = synth.plane_size();
  if (d_synth) d_synth->resize(synth.shape());
  std::vector<T> out(nb, T(0));
  for (int n = 0; n < nb; ++n) {
    const T* m = mask.plane(n, 0);
    T area = T(0);
    for (std::size_t i = 0; i < plane; ++i) area += T(1) - m[i];
    if (area <= T(0)) {
      if (d_synth) std::fill_n(d_synth->plane(n, 0), ch * plane, T(0));
      continue;
    }
    const T norm = T(1) / (area * static_cast<T>(ch));
    const T gw = (weights ? (*weights)[n] : T(1)) * norm;
    T acc = T(0);
    for (int c = 0; c < ch; ++c) {
      const T* a = synth.plane(n, c);
      const T* b = target.plane(n, c);
      T* g = d_synth ? d_synth->plane(n, c) : nullptr;
      for (std::size_t i = 0; i < plane; ++i) {
        const T diff = a[i] - b[i];
        const T bg = T(1) - m[i];
        acc += bg * std::abs(diff);
        if (g) g[i] = gw * bg * (diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0)));
      }
    }
    out[n] = acc * norm;
  }
  return out;
}

template <class T>
T adversarial_d_loss(const Tensor<T>& logits_fake, const Tensor<T>& logits_real, const Tensor<T>& mask,
                     Tensor<T>* d_fake, Tensor<T>* d_real) {
  if (logits_fake.c() != 1 || logits_real.c() != 1) throw ShapeError("adversarial_d_loss: maps must be 1-channel");
  const Tensor<T> s = cell_mask(logits_fake, mask, "adversarial_d_loss");
  const T count = static_cast<T>(logits_fake.size() + logits_real.size());
  if (d_fake) d_fake->resize(logits_fake.shape());
  if (d_real) d_real->resize(logits_real.shape());
  T acc = T(0);
  for (std::size_t i = 0; i < logits_fake.size(); ++i) {
    const T z = logits_fake.data()[i];
    const T y = T(1) - s.data()[i];
    acc += bce_with_logits(z, y);
    if (d_fake) d_fake->data()[i] = bce_with_logits_grad(z, y) / count;
  }
  for (std::size_t i = 0; i < logits_real.size(); ++i) {
    const T z = logits_real.data()[i];
    acc += bce_with_logits(z, T(1));
    if (d_real) d_real->data()[i] = bce_with_logits_grad(z, T(1)) / count;
  }
  return acc / count;
}

template <class T>
AdversarialG adversarial_g_loss(const Tensor<T>& logits_fake, const Tensor<T>& mask,
                                const std::vector<std::type_identity_t<T>>* weights, Tensor<T>* d_logits) {
  const Tensor<T> s = cell_mask(logits_fake, mask, "adversarial_g_loss");
  const std::size_t cells = logits_fake.plane_size();
  AdversarialG out;
  out.values.assign(logits_fake.n(), 0.0);
  out.degenerate.assign(logits_fake.n(), false);
  if (d_logits) d_logits->resize(logits_fake.shape());
  for (int n = 0; n < logits_fake.n(); ++n) {
    const T* z = logits_fake.plane(n, 0);
    const T* m = s.plane(n, 0);
    T area = T(0);
    for (std::size_t i = 0; i < cells; ++i) area += m[i];
    if (area <= T(0)) {
      out.degenerate[n] = true;
      if (d_logits) std::fill_n(d_logits->plane(n, 0), cells, T(0));
      continue;
    }
    const T gw = (weights ? (*weights)[n] : T(1)) / area;
    T acc = T(0);
    for (std::size_t i = 0; i < cells; ++i) {
      acc += m[i] * bce_with_logits(z[i], T(1));
      if (d_logits) d_logits->plane(n, 0)[i] = gw * m[i] * bce_with_logits_grad(z[i], T(1));
    }
    out.values[n] = static_cast<double>(acc / area);
  }
  return out;
}

template <class T>
double discriminator_accuracy(const Tensor<T>& logits_fake, const Tensor<T>& logits_real,
                              const Tensor<T>& mask) {
  const Tensor<T> s = cell_mask(logits_fake, mask, "discriminator_accuracy");
  std::size_t real_ok = 0;
  for (std::size_t i = 0; i < logits_real.size(); ++i) real_ok += logits_real.data()[i] > T(0);
  std::size_t fake_cells = 0, fake_ok = 0;
  for (std::size_t i = 0; i < logits_fake.size(); ++i) {
    if (s.data()[i] >= T(0.5)) {
      ++fake_cells;
      fake_ok += logits_fake.data()[i] < T(0);
    }
  }
  const double real_acc = logits_real.size() ? static_cast<double>(real_ok) / logits_real.size() : 0.0;
  if (fake_cells == 0) return real_acc;
  return 0.5 * (real_acc + static_cast<double>(fake_ok) / fake_cells);
}

double diversity_weight(double foreground_pixels, int h, int w, double rho) {
  if (foreground_pixels <= 0.0) return 0.0;
  return std::min(1.0, rho * h * w / foreground_pixels);
}

LossBundle combine_diversity(const std::vector<double>& perceptual, const std::vector<double>& adversarial,
                             const std::vector<double>& background, double w) {
  const std::size_t k = background.size();
  if (k == 0 || perceptual.size() != k || adversarial.size() != k) {
    throw ShapeError("combine_diversity: need K >= 1 matching loss lists");
  }
  if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("combine_diversity: w outside [0,1]");
  LossBundle b;
  b.perceptual = perceptual;
  b.adversarial = adversarial;
  b.background = background;
  b.w = w;
  double best = perceptual[0] + adversarial[0];
  for (std::size_t i = 1; i < k; ++i) {
    const double v = perceptual[i] + adversarial[i];
    if (v < best) {
      best = v;
      b.k_star = static_cast<int>(i);
    }
  }
  double bg = 0.0;
  for (double v : background) bg += v;
  bg /= static_cast<double>(k);
  b.total = w * best + (1.0 - w) * bg;
  return b;
}

LossBundle combine_diversity(const std::vector<double>& perceptual, const std::vector<double>& adversarial,
                             const std::vector<double>& background, double foreground_pixels, int h,
                             int width, double rho) {
  if (foreground_pixels <= 0.0) {
    LossBundle b = combine_diversity(perceptual, adversarial, background, 0.0);
    b.k_star = 0;
    b.degenerate = true;
    return b;
  }
  return combine_diversity(perceptual, adversarial, background,
                           diversity_weight(foreground_pixels, h, width, rho));
}

#define GIS_INSTANTIATE(T)                                                                            \
  template T bce_with_logits(T, T);                                                                   \
  template T bce_with_logits_grad(T, T);                                                              \
  template std::vector<T> background_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,       \
                                          const std::vector<T>*, Tensor<T>*);                         \
  template T adversarial_d_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>*,     \
                                Tensor<T>*);                                                          \
  template AdversarialG adversarial_g_loss(const Tensor<T>&, const Tensor<T>&, const std::vector<T>*, \
                                           Tensor<T>*);                                               \
  template double discriminator_accuracy(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);
GIS_INSTANTIATE(float)
GIS_INSTANTIATE(double)
#undef GIS_INSTANTIATE

}  // namespace gis
