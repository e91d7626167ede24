#include "gis/model/discriminator.hpp"

#include <cmath>
#include <string>

#include "gis/core/error.hpp"
#include "gis/core/rng.hpp"
#include "gis/nn/ops.hpp"

namespace gis {

void DiscriminatorConfig::validate() const {
  if (widths.size() < 2) throw ConfigError("discriminator: need at least two layers");
  for (int w : widths) {
    if (w <= 0) throw ConfigError("discriminator: widths must be positive");
  }
  if (widths.back() != 1) throw ConfigError("discriminator: last layer must emit one channel");
  if (kernel < 2 || kernel % 2 != 0) throw ConfigError("discriminator: kernel must be even and >= 2");
  if (!(leaky_slope >= 0.0 && leaky_slope <= 1.0)) {
    throw ConfigError("discriminator: leaky slope outside [0,1]");
  }
}

nlohmann::json DiscriminatorConfig::to_json() const {
  return {{"widths", widths},
          {"kernel", kernel},
          {"leaky_slope", leaky_slope},
          {"pad_mode", pad_mode == nn::PadMode::periodic ? "periodic" : "zero"},
          {"seed", seed}};
}

DiscriminatorConfig DiscriminatorConfig::from_json(const nlohmann::json& j) {
  DiscriminatorConfig c;
  c.widths = j.at("widths").get<std::vector<int>>();
  c.kernel = j.at("kernel").get<int>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  const auto mode = j.at("pad_mode").get<std::string>();
  if (mode == "periodic") {
    c.pad_mode = nn::PadMode::periodic;
  } else if (mode == "zero") {
    c.pad_mode = nn::PadMode::zero;
  } else {
    throw ConfigError("discriminator: unknown pad mode '" + mode + "'");
  }
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

namespace {

// dy[m] *= f'(pre[n]) for every m of a batch of per-cell gradients.
template <class T>
void gate_broadcast(const Tensor<T>& pre, int n, T slope, Tensor<T>& dy) {
  const std::size_t len = static_cast<std::size_t>(pre.c()) * pre.plane_size();
  const T* p = pre.plane(n, 0);
  for (int m = 0; m < dy.n(); ++m) {
    T* d = dy.plane(m, 0);
    for (std::size_t i = 0; i < len; ++i) {
      if (!(p[i] > T(0))) d[i] *= slope;
    }
  }
}

}  // namespace

template <class T>
Discriminator<T>::Discriminator(const DiscriminatorConfig& config, int channels_in)
    : config_(config) {
  config.validate();
  Rng rng(config.seed);
  const double s = config.leaky_slope;
  const double gain = std::sqrt(2.0 / (1.0 + s * s));
  const int count = static_cast<int>(config.widths.size());
  int in = channels_in;
  for (int l = 0; l < count; ++l) {
    const bool last = l == count - 1;
    nn::ConvSpec spec;
    spec.in_channels = in;
    spec.out_channels = config.widths[l];
    spec.kernel = config.kernel;
    spec.stride = last ? 1 : 2;
    spec.pad = last ? nn::Padding::same(config.kernel) : nn::Padding::uniform((config.kernel - 2) / 2);
    spec.mode = config.pad_mode;
    layers_.emplace_back("d" + std::to_string(l), spec);
    layers_.back().init_normal(rng, last ? 1.0 : gain);
    in = config.widths[l];
  }
}

template <class T>
Shape4 Discriminator<T>::output_shape(const Shape4& in) const {
  const int factor = 1 << (layer_count() - 1);
  if (in.h % factor != 0 || in.w % factor != 0) {
    throw ShapeError("discriminator: input " + std::to_string(in.h) + "x" + std::to_string(in.w) +
                     " is not divisible by " + std::to_string(factor));
  }
  if (in.c != layers_.front().spec().in_channels) {
    throw ShapeError("discriminator: expected " +
                     std::to_string(layers_.front().spec().in_channels) + " input channels, got " +
                     std::to_string(in.c));
  }
  return {in.n, 1, in.h / factor, in.w / factor};
}

template <class T>
Tensor<T> Discriminator<T>::forward(const Tensor<T>& images, Trace* trace) const {
  output_shape(images.shape());
  const T slope = static_cast<T>(config_.leaky_slope);
  const int count = layer_count();
  if (trace) {
    trace->inputs.assign(count, {});
    trace->pre.assign(count - 1, {});
  }
  Tensor<T> x = images;
  for (int l = 0; l < count; ++l) {
    Tensor<T> y;
    layers_[l].forward(x, y);
    if (trace) trace->inputs[l] = std::move(x);
    if (l == count - 1) {
      if (trace) trace->logits = y;
      return y;
    }
    nn::leaky_relu(y, slope, x);
    if (trace) trace->pre[l] = std::move(y);
  }
  return x;  // unreachable
}

template <class T>
void Discriminator<T>::backward(const Trace& trace, const Tensor<T>& d_logits, Tensor<T>* d_images) {
  require_shape(d_logits.shape(), trace.logits.shape(), "discriminator backward");
  const T slope = static_cast<T>(config_.leaky_slope);
  Tensor<T> d = d_logits;
  for (int l = layer_count() - 1; l >= 0; --l) {
    layers_[l].accumulate_param_grads(trace.inputs[l], d);
    if (l == 0 && !d_images) break;
    Tensor<T> dx;
    layers_[l].backward_data(d, trace.inputs[l].shape(), dx);
    if (l > 0) nn::leaky_relu_gate(trace.pre[l - 1], slope, dx);
    d = std::move(dx);
  }
  if (d_images) *d_images = std::move(d);
}

template <class T>
void Discriminator<T>::input_gradient(const Trace& trace, const Tensor<T>& d_logits,
                                      Tensor<T>& d_images) const {
  require_shape(d_logits.shape(), trace.logits.shape(), "discriminator input gradient");
  const T slope = static_cast<T>(config_.leaky_slope);
  Tensor<T> d = d_logits;
  for (int l = layer_count() - 1; l >= 0; --l) {
    Tensor<T> dx;
    layers_[l].backward_data(d, trace.inputs[l].shape(), dx);
    if (l > 0) nn::leaky_relu_gate(trace.pre[l - 1], slope, dx);
    d = std::move(dx);
  }
  d_images = std::move(d);
}

template <class T>
Tensor<T> Discriminator<T>::cell_gradients(const Trace& trace, int n,
                                           std::vector<Tensor<T>>* deltas) const {
  const T slope = static_cast<T>(config_.leaky_slope);
  const int count = layer_count();
  const int ho = trace.logits.h();
  const int wo = trace.logits.w();
  const int cells = ho * wo;
  Tensor<T> d(cells, 1, ho, wo);
  for (int c = 0; c < cells; ++c) d.plane(c, 0)[c] = T(1);
  if (deltas) deltas->assign(count, {});
  for (int l = count - 1; l >= 0; --l) {
    const Shape4& in = trace.inputs[l].shape();
    Tensor<T> dx;
    layers_[l].backward_data(d, {cells, in.c, in.h, in.w}, dx);
    if (l > 0) gate_broadcast(trace.pre[l - 1], n, slope, dx);
    if (deltas) (*deltas)[l] = std::move(d);
    d = std::move(dx);
  }
  return d;
}

template <class T>
T Discriminator<T>::penalty_impl(const Trace& trace, PenaltySide side, T scale,
                                 Tensor<T>* d_logits, bool second_order) {
  const Tensor<T>& z = trace.logits;
  if (d_logits) require_shape(d_logits->shape(), z.shape(), "penalty logit gradient");
  if (scale == T(0)) return T(0);
  const T slope = static_cast<T>(config_.leaky_slope);
  const int count = layer_count();
  const int cells = z.h() * z.w();
  const std::size_t img = static_cast<std::size_t>(trace.inputs[0].c()) * trace.inputs[0].plane_size();
  T total = T(0);
  std::vector<Tensor<T>> deltas;
  for (int n = 0; n < z.n(); ++n) {
    Tensor<T> g = cell_gradients(trace, n, second_order ? &deltas : nullptr);
    Tensor<T> u;
    if (second_order) u.resize(g.shape());
    for (int c = 0; c < cells; ++c) {
      const T* gc = g.plane(c, 0);
      T sq = T(0);
      for (std::size_t i = 0; i < img; ++i) sq += gc[i] * gc[i];
      const T s = nn::sigmoid(z.plane(n, 0)[c]);
      const T omega = side == PenaltySide::real ? (T(1) - s) * (T(1) - s) : s * s;
      const T d_omega = side == PenaltySide::real ? T(-2) * s * (T(1) - s) * (T(1) - s)
                                                  : T(2) * s * s * (T(1) - s);
      total += omega * sq;
      if (d_logits) d_logits->plane(n, 0)[c] += scale * d_omega * sq;
      if (second_order) {
        T* uc = u.plane(c, 0);
        const T k = T(2) * scale * omega;
        for (std::size_t i = 0; i < img; ++i) uc[i] = k * gc[i];
      }
    }
    if (!second_order) continue;
    // d|g|^2/dW_l pairs the linearized forward image of u with the cell
    // gradients at layer l; gates are locally constant.
    Tensor<T> v = std::move(u);
    for (int l = 0; l < count; ++l) {
      layers_[l].accumulate_param_grads(v, deltas[l], layers_[l].weight.grad, nullptr);
      if (l == count - 1) break;
      Tensor<T> next;
      layers_[l].forward_linear(v, next);
      gate_broadcast(trace.pre[l], n, slope, next);
      v = std::move(next);
    }
  }
  return scale * total;
}

template <class T>
T Discriminator<T>::penalty(const Trace& trace, PenaltySide side, T scale, Tensor<T>* d_logits) {
  return penalty_impl(trace, side, scale, d_logits, d_logits != nullptr);
}

template <class T>
T Discriminator<T>::penalty(const Trace& trace, PenaltySide side, T scale) const {
  // Value-only path never touches parameters.
  return const_cast<Discriminator*>(this)->penalty_impl(trace, side, scale, nullptr, false);
}

template <class T>
nn::ParamRefs<T> Discriminator<T>::params() {
  nn::ParamRefs<T> out;
  for (auto& layer : layers_) {
    for (auto* p : layer.params()) out.push_back(p);
  }
  return out;
}

template <class T>
nn::ConstParamRefs<T> Discriminator<T>::params() const {
  nn::ConstParamRefs<T> out;
  for (const auto& layer : layers_) {
    for (const auto* p : layer.params()) out.push_back(p);
  }
  return out;
}

template <class T>
std::size_t Discriminator<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : params()) n += p->value.size();
  return n;
}

template <class T>
T d_regularizer(const Discriminator<T>& disc, const Tensor<T>& real, const Tensor<T>& fake,
                T gamma) {
  if (real.n() == 0 || fake.n() == 0) throw ShapeError("d_regularizer: empty batch");
  typename Discriminator<T>::Trace tr_real, tr_fake;
  disc.forward(real, &tr_real);
  disc.forward(fake, &tr_fake);
  const T cells = static_cast<T>(tr_real.logits.plane_size());
  const T s_real = gamma / (T(2) * cells * static_cast<T>(real.n()));
  const T s_fake = gamma / (T(2) * static_cast<T>(tr_fake.logits.plane_size()) *
                            static_cast<T>(fake.n()));
  return disc.penalty(tr_real, PenaltySide::real, s_real) +
         disc.penalty(tr_fake, PenaltySide::fake, s_fake);
}

template class Discriminator<float>;
template class Discriminator<double>;
template float d_regularizer(const Discriminator<float>&, const Tensor<float>&,
                             const Tensor<float>&, float);
template double d_regularizer(const Discriminator<double>&, const Tensor<double>&,
                              const Tensor<double>&, double);

}  // namespace gis
