#include "gis/model/generator.hpp"

#include <cmath>

#include "gis/core/error.hpp"
#include "gis/core/rng.hpp"

namespace gis {

void GeneratorConfig::validate() const {
  if (levels < 2) throw ConfigError("generator: levels must be >= 2");
  if (static_cast<int>(widths.size()) != levels) {
    throw ConfigError("generator: expected " + std::to_string(levels) + " widths, got " +
                      std::to_string(widths.size()));
  }
  for (int w : widths) {
    if (w <= 0) throw ConfigError("generator: widths must be positive");
  }
  if (k < 1) throw ConfigError("generator: K must be >= 1");
  if (base_h <= 0 || base_w <= 0) throw ConfigError("generator: base resolution must be positive");
  if (kernel <= 0 || kernel % 2 == 0) throw ConfigError("generator: kernel must be odd and positive");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw ConfigError("generator: leaky slope outside [0,1)");
}

nlohmann::json GeneratorConfig::to_json() const {
  return {{"levels", levels}, {"base_h", base_h}, {"base_w", base_w}, {"widths", widths},
          {"k", k},           {"leaky_slope", leaky_slope}, {"kernel", kernel}, {"seed", seed}};
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  c.levels = j.at("levels").get<int>();
  c.base_h = j.at("base_h").get<int>();
  c.base_w = j.at("base_w").get<int>();
  c.widths = j.at("widths").get<std::vector<int>>();
  c.k = j.at("k").get<int>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  c.kernel = j.at("kernel").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

template <class T>
Generator<T>::Generator(const GeneratorConfig& config, int channels_in)
    : config_(config), channels_in_(channels_in) {
  config.validate();
  if (channels_in <= 0) throw ConfigError("generator: channels_in must be positive");
  Rng rng(config.seed);
  const double slope = config.leaky_slope;
  const double gain = std::sqrt(2.0 / (1.0 + slope * slope));
  const auto pad = nn::Padding::same(config.kernel);
  modules_.resize(config.levels);
  for (int i = 0; i < config.levels; ++i) {
    const int width = config.widths[i];
    int in = channels_in + (i > 0 ? config.widths[i - 1] : 0);
    for (int b = 0; b < 3; ++b) {
      const std::string name = "m" + std::to_string(i) + ".b" + std::to_string(b);
      Block& blk = modules_[i].blocks[b];
      blk.conv = nn::Conv2d<T>(name + ".conv", {in, width, config.kernel, 1, pad});
      blk.conv.init_normal(rng, gain);
      blk.norm = nn::ChannelLayerNorm<T>(name + ".norm", width);
      in = width;
    }
  }
  projection_ = nn::Conv2d<T>("proj", {config.widths.back(), 3 * config.k, 1, 1, {}});
  projection_.init_normal(rng, 1.0);
}

template <class T>
void Generator<T>::check_pyramid(const InputPyramid& pyr) const {
  if (pyr.level_count() != config_.levels) {
    throw ShapeError("generator: expected " + std::to_string(config_.levels) +
                     " pyramid levels, got " + std::to_string(pyr.level_count()));
  }
  for (int i = 0; i < config_.levels; ++i) {
    const auto& s = pyr.levels[i].shape();
    const int h = config_.base_h << i;
    const int w = config_.base_w << i;
    if (s.c != channels_in_ || s.h != h || s.w != w || s.n != pyr.batch()) {
      throw ShapeError("generator: pyramid level " + std::to_string(i) + " has shape " +
                       s.str() + ", expected (B," + std::to_string(channels_in_) + "," +
                       std::to_string(h) + "," + std::to_string(w) + ")");
    }
  }
}

template <class T>
Tensor<T> Generator<T>::forward(const InputPyramid& pyr, Trace* trace) const {
  check_pyramid(pyr);
  const T slope = static_cast<T>(config_.leaky_slope);
  Trace local;
  Trace& tr = trace ? *trace : local;
  tr.modules.resize(config_.levels);
  Tensor<T> features;
  for (int i = 0; i < config_.levels; ++i) {
    ModuleTrace& mt = tr.modules[i];
    Tensor<T> level;
    if constexpr (std::is_same_v<T, float>) {
      level = pyr.levels[i];
    } else {
      level = tensor_cast<T>(pyr.levels[i]);
    }
    Tensor<T> x;
    if (i == 0) {
      x = std::move(level);
    } else {
      Tensor<T> up;
      nn::upsample2x(features, up);
      nn::concat_channels(up, level, x);
    }
    for (int b = 0; b < 3; ++b) {
      const Block& blk = modules_[i].blocks[b];
      BlockTrace& bt = mt.blocks[b];
      Tensor<T> conv_out;
      blk.conv.forward(x, conv_out);
      blk.norm.forward(conv_out, bt.normalized, bt.norm_cache);
      bt.input = std::move(x);
      nn::leaky_relu(bt.normalized, slope, x);
    }
    mt.features = x;
    features = std::move(x);
  }
  Tensor<T> logits;
  projection_.forward(features, logits);
  nn::tanh_unit(logits, tr.output);
  if (trace) return tr.output;
  return std::move(tr.output);
}

template <class T>
void Generator<T>::backward(const Trace& tr, const Tensor<T>& d_output) {
  require_shape(d_output.shape(), tr.output.shape(), "generator backward");
  const T slope = static_cast<T>(config_.leaky_slope);
  Tensor<T> d_logits;
  nn::tanh_unit_backward(tr.output, d_output, d_logits);
  const Tensor<T>& last = tr.modules.back().features;
  projection_.accumulate_param_grads(last, d_logits);
  Tensor<T> d_features;
  projection_.backward_data(d_logits, last.shape(), d_features);

  for (int i = config_.levels - 1; i >= 0; --i) {
    const ModuleTrace& mt = tr.modules[i];
    Tensor<T> d = std::move(d_features);
    for (int b = 2; b >= 0; --b) {
      Block& blk = modules_[i].blocks[b];
      const BlockTrace& bt = mt.blocks[b];
      nn::leaky_relu_gate(bt.normalized, slope, d);
      Tensor<T> d_conv;
      blk.norm.backward(d, bt.norm_cache, d_conv);
      blk.conv.accumulate_param_grads(bt.input, d_conv);
      if (b == 0 && i == 0) break;  // gradient w.r.t. the pyramid is not needed
      blk.conv.backward_data(d_conv, bt.input.shape(), d);
    }
    if (i > 0) {
      const int prev = config_.widths[i - 1];
      Tensor<T> d_up = slice_channels(d, 0, prev);
      nn::upsample2x_backward(d_up, d_features);
    }
  }
}

template <class T>
nn::ParamRefs<T> Generator<T>::params() {
  nn::ParamRefs<T> out;
  for (auto& m : modules_) {
    for (auto& blk : m.blocks) {
      for (auto* p : blk.conv.params()) out.push_back(p);
      for (auto* p : blk.norm.params()) out.push_back(p);
    }
  }
  for (auto* p : projection_.params()) out.push_back(p);
  return out;
}

template <class T>
nn::ConstParamRefs<T> Generator<T>::params() const {
  nn::ConstParamRefs<T> out;
  for (const auto* p : const_cast<Generator*>(this)->params()) out.push_back(p);
  return out;
}

template <class T>
std::size_t Generator<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : params()) n += p->value.size();
  return n;
}

template <class T>
void Generator<T>::zero_final_projection() {
  projection_.weight.value.zero();
  projection_.bias.value.zero();
}

Tensor<float> composite(const Tensor<float>& outputs, const Tensor<float>& mask,
                        const Tensor<float>& background, CompositeMode mode) {
  if (mode == CompositeMode::identity) return outputs;
  if (outputs.c() % 3 != 0 || mask.c() != 1 || background.c() != 3 ||
      mask.n() != outputs.n() || background.n() != outputs.n() || mask.h() != outputs.h() ||
      mask.w() != outputs.w() || background.h() != outputs.h() || background.w() != outputs.w()) {
    throw ShapeError("composite: incompatible shapes");
  }
  Tensor<float> out(outputs.shape());
  const std::size_t plane = outputs.plane_size();
  for (int n = 0; n < outputs.n(); ++n) {
    const float* m = mask.plane(n, 0);
    for (int c = 0; c < outputs.c(); ++c) {
      const float* o = outputs.plane(n, c);
      const float* bg = background.plane(n, c % 3);
      float* dst = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = m[i] * o[i] + (1.0f - m[i]) * bg[i];
    }
  }
  return out;
}

template class Generator<float>;
template class Generator<double>;

}  // namespace gis
