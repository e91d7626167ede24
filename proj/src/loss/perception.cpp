#include "gis/loss/perception.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "gis/core/error.hpp"
#include "gis/core/rng.hpp"
#include "gis/gbuffer/sample.hpp"
#include "gis/io/archive.hpp"
#include "gis/nn/ops.hpp"

namespace gis {

void ExtractorSpec::validate() const {
  if (kind == ExtractorKind::identity) return;
  if (channels.empty()) throw ConfigError("extractor: no layers");
  for (int c : channels) {
    if (c <= 0) throw ConfigError("extractor: channel counts must be positive");
  }
  std::set<int> seen;
  for (int l : use_layers) {
    if (l < 0 || l >= static_cast<int>(channels.size())) {
      throw ConfigError("extractor: layer index " + std::to_string(l) + " out of range");
    }
    if (!seen.insert(l).second) throw ConfigError("extractor: duplicate layer index");
  }
  if (kind == ExtractorKind::file && path.empty()) throw ConfigError("extractor: file kind needs a path");
}

nlohmann::json ExtractorSpec::to_json() const {
  const char* k = kind == ExtractorKind::identity ? "identity"
                  : kind == ExtractorKind::random ? "random"
                                                  : "file";
  return {{"kind", k},      {"channels", channels},       {"use_layers", use_layers},
          {"seed", seed},   {"leaky_slope", leaky_slope}, {"path", path}};
}

ExtractorSpec ExtractorSpec::from_json(const nlohmann::json& j) {
  ExtractorSpec s;
  const auto k = j.at("kind").get<std::string>();
  if (k == "identity") {
    s.kind = ExtractorKind::identity;
  } else if (k == "random") {
    s.kind = ExtractorKind::random;
  } else if (k == "file") {
    s.kind = ExtractorKind::file;
  } else {
    throw ConfigError("extractor: unknown kind '" + k + "'");
  }
  s.channels = j.at("channels").get<std::vector<int>>();
  s.use_layers = j.at("use_layers").get<std::vector<int>>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.leaky_slope = j.at("leaky_slope").get<double>();
  s.path = j.at("path").get<std::string>();
  s.validate();
  return s;
}

ExtractorSpec ExtractorSpec::parse(const std::string& text) {
  ExtractorSpec s;
  if (text == "identity") {
    s.kind = ExtractorKind::identity;
  } else if (text == "random") {
    s.kind = ExtractorKind::random;
  } else if (text.rfind("file:", 0) == 0) {
    s.kind = ExtractorKind::file;
    s.path = text.substr(5);
  } else {
    throw ConfigError("extractor: expected identity, random or file:<path>, got '" + text + "'");
  }
  s.validate();
  return s;
}

namespace {

nn::ConvSpec layer_spec(int in, int out) {
  nn::ConvSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel = 3;
  s.stride = 2;
  s.pad = nn::Padding::uniform(1);
  return s;
}

}  // namespace

template <class T>
FeatureExtractor<T>::FeatureExtractor(const ExtractorSpec& spec) : spec_(spec) {
  spec.validate();
  if (spec.kind == ExtractorKind::identity) return;

  if (spec.kind == ExtractorKind::file) {
    const auto archive = io::Archive::load(spec.path);
    const auto ch = archive.meta.at("channels").get<std::vector<int>>();
    if (ch != spec.channels) {
      throw ConfigError("extractor: file " + spec.path + " has a different layer layout");
    }
  }
  const double gain = std::sqrt(2.0 / (1.0 + spec.leaky_slope * spec.leaky_slope));
  Rng rng(spec.seed);
  int in = 3;
  for (std::size_t l = 0; l < spec.channels.size(); ++l) {
    layers_.emplace_back("fx" + std::to_string(l), layer_spec(in, spec.channels[l]));
    layers_.back().init_normal(rng, gain);
    in = spec.channels[l];
  }
  if (spec.kind == ExtractorKind::file) {
    const auto archive = io::Archive::load(spec.path);
    for (auto& layer : layers_) {
      for (auto* p : layer.params()) {
        auto v = archive.get<T>(p->name);
        require_shape(v.shape(), p->value.shape(), "extractor weights");
        p->value = std::move(v);
      }
    }
  }
}

template <class T>
int FeatureExtractor<T>::layer_count() const {
  return spec_.kind == ExtractorKind::identity ? 1 : static_cast<int>(layers_.size());
}

template <class T>
std::vector<int> FeatureExtractor<T>::used() const {
  if (spec_.kind == ExtractorKind::identity) return {0};
  if (spec_.use_layers.empty()) {
    std::vector<int> all(layers_.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    return all;
  }
  auto u = spec_.use_layers;
  std::sort(u.begin(), u.end());
  return u;
}

template <class T>
std::vector<Shape4> FeatureExtractor<T>::layer_shapes(const Shape4& image) const {
  if (image.c != 3) throw ShapeError("extractor: expected 3-channel images, got " + image.str());
  if (spec_.kind == ExtractorKind::identity) return {image};
  const auto u = used();
  const int depth = u.back() + 1;
  const int factor = 1 << depth;
  if (image.h < factor || image.w < factor || image.h % factor != 0 || image.w % factor != 0) {
    throw ShapeError("extractor: " + std::to_string(image.h) + "x" + std::to_string(image.w) +
                     " input cannot reach layer " + std::to_string(depth - 1) +
                     " (needs a multiple of " + std::to_string(factor) + ")");
  }
  std::vector<Shape4> out;
  for (int l : u) {
    out.push_back({image.n, spec_.channels[l], image.h >> (l + 1), image.w >> (l + 1)});
  }
  return out;
}

template <class T>
std::vector<double> FeatureExtractor<T>::layer_weights(const Shape4& image) const {
  std::vector<double> out;
  for (const auto& s : layer_shapes(image)) {
    out.push_back(1.0 / (static_cast<double>(s.c) * s.h * s.w));
  }
  return out;
}

template <class T>
typename FeatureExtractor<T>::Activations FeatureExtractor<T>::extract(const Tensor<T>& image,
                                                                       Activations* pre) const {
  layer_shapes(image.shape());
  if (spec_.kind == ExtractorKind::identity) return {image};
  const auto u = used();
  const int depth = u.back() + 1;
  const T slope = static_cast<T>(spec_.leaky_slope);
  Tensor<T> x = image;
  for (auto& v : x.span()) v -= T(0.5);
  Activations out;
  if (pre) pre->assign(depth, {});
  std::size_t next = 0;
  for (int l = 0; l < depth; ++l) {
    Tensor<T> p;
    layers_[l].forward(x, p);
    nn::leaky_relu(p, slope, x);
    if (pre) (*pre)[l] = std::move(p);
    if (next < u.size() && u[next] == l) {
      out.push_back(x);
      ++next;
    }
  }
  return out;
}

template <class T>
void FeatureExtractor<T>::backward(const Activations& pre, const Activations& d_used,
                                   Tensor<T>& d_image) const {
  if (spec_.kind == ExtractorKind::identity) {
    d_image = d_used.at(0);
    return;
  }
  const auto u = used();
  if (d_used.size() != u.size()) throw ShapeError("extractor backward: wrong gradient count");
  const T slope = static_cast<T>(spec_.leaky_slope);
  const int depth = u.back() + 1;
  Tensor<T> d;
  int slot = static_cast<int>(u.size()) - 1;
  for (int l = depth - 1; l >= 0; --l) {
    if (slot >= 0 && u[slot] == l) {
      if (d.empty()) {
        d = d_used[slot];
      } else {
        auto dst = d.span();
        auto src = d_used[slot].span();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      }
      --slot;
    }
    nn::leaky_relu_gate(pre[l], slope, d);
    const Shape4& ps = pre[l].shape();
    const Shape4 in{ps.n, layers_[l].spec().in_channels, ps.h * 2, ps.w * 2};
    Tensor<T> dx;
    layers_[l].backward_data(d, in, dx);
    d = std::move(dx);
  }
  d_image = std::move(d);
}

template <class T>
void save_extractor(const FeatureExtractor<T>& fx, const std::filesystem::path& path) {
  if (fx.spec().kind == ExtractorKind::identity) {
    throw ConfigError("extractor: identity extractor has no weights to save");
  }
  io::Archive a;
  a.meta = {{"kind", "extractor"}, {"channels", fx.spec().channels}};
  for (const auto& layer : fx.layers()) {
    for (const auto* p : layer.params()) a.put(p->name, p->value, io::DType::f32);
  }
  a.save(path);
}

template <class T>
std::vector<T> perceptual_loss(const FeatureExtractor<T>& fx,
                               const typename FeatureExtractor<T>::Activations& target_features,
                               const Tensor<T>& synth, const Tensor<T>& mask,
                               const std::vector<std::type_identity_t<T>>* weights, Tensor<T>* d_synth) {
  const Shape4 s = synth.shape();
  if (mask.n() != s.n || mask.c() != 1 || mask.h() != s.h || mask.w() != s.w) {
    throw ShapeError("perceptual_loss: mask " + mask.shape().str() + " vs image " + s.str());
  }
  if (weights && static_cast<int>(weights->size()) != s.n) {
    throw ShapeError("perceptual_loss: one weight per sample expected");
  }
  typename FeatureExtractor<T>::Activations pre;
  const auto feats = fx.extract(synth, d_synth ? &pre : nullptr);
  if (feats.size() != target_features.size()) {
    throw ShapeError("perceptual_loss: target features from a different extractor");
  }
  const auto lambdas = fx.layer_weights(s);
  std::vector<T> values(s.n, T(0));
  typename FeatureExtractor<T>::Activations grads;
  for (std::size_t l = 0; l < feats.size(); ++l) {
    const Tensor<T>& vs = feats[l];
    const Tensor<T>& vt = target_features[l];
    require_shape(vt.shape(), vs.shape(), "perceptual_loss target features");
    const Tensor<T> sl = downscale_mask(mask, s.h / vs.h());
    const T lambda = static_cast<T>(lambdas[l]);
    Tensor<T> g;
    if (d_synth) g.resize(vs.shape());
    const std::size_t plane = vs.plane_size();
    for (int n = 0; n < s.n; ++n) {
      const T* m = sl.plane(n, 0);
      T acc = T(0);
      const T gw = d_synth ? (weights ? (*weights)[n] : T(1)) * lambda : T(0);
      for (int c = 0; c < vs.c(); ++c) {
        const T* a = vs.plane(n, c);
        const T* b = vt.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) {
          const T diff = a[i] - b[i];
          acc += m[i] * std::abs(diff);
          if (d_synth) {
            const T sign = diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0));
            g.plane(n, c)[i] = gw * m[i] * sign;
          }
        }
      }
      values[n] += lambda * acc;
    }
    if (d_synth) grads.push_back(std::move(g));
  }
  if (d_synth) fx.backward(pre, grads, *d_synth);
  return values;
}

template <class T>
std::vector<T> perceptual_loss(const FeatureExtractor<T>& fx, const Tensor<T>& target,
                               const Tensor<T>& synth, const Tensor<T>& mask,
                               const std::vector<std::type_identity_t<T>>* weights, Tensor<T>* d_synth) {
  require_shape(target.shape(), synth.shape(), "perceptual_loss images");
  return perceptual_loss(fx, fx.extract(target), synth, mask, weights, d_synth);
}

#define GIS_INSTANTIATE(T)                                                                      \
  template class FeatureExtractor<T>;                                                           \
  template void save_extractor(const FeatureExtractor<T>&, const std::filesystem::path&);      \
  template std::vector<T> perceptual_loss(const FeatureExtractor<T>&,                           \
                                          const FeatureExtractor<T>::Activations&,              \
                                          const Tensor<T>&, const Tensor<T>&,                   \
                                          const std::vector<T>*, Tensor<T>*);                   \
  template std::vector<T> perceptual_loss(const FeatureExtractor<T>&, const Tensor<T>&,         \
                                          const Tensor<T>&, const Tensor<T>&,                   \
                                          const std::vector<T>*, Tensor<T>*);
GIS_INSTANTIATE(float)
GIS_INSTANTIATE(double)
#undef GIS_INSTANTIATE

}  // namespace gis
