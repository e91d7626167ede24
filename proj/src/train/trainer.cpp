#include "gis/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include <spdlog/spdlog.h>

#include "gis/core/error.hpp"
#include "gis/io/png.hpp"
#include "gis/loss/diversity.hpp"

namespace gis {

nlohmann::json StepMetrics::to_json() const {
  return {{"step", step},
          {"loss", loss},
          {"lp", perceptual},
          {"la", adversarial},
          {"lb", background},
          {"k_star", k_star},
          {"w", w},
          {"d_loss", d_loss},
          {"reg", regularizer},
          {"d_acc", d_accuracy},
          {"indices", indices},
          {"seconds", seconds}};
}

namespace {

template <class T>
Tensor<T> gather(std::span<const GBufferSample> samples, std::span<const int> idx,
                 Tensor<float> GBufferSample::*field) {
  const Tensor<float>& first = samples[idx[0]].*field;
  Tensor<T> out(static_cast<int>(idx.size()), first.c(), first.h(), first.w());
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const Tensor<float>& src = samples[idx[b]].*field;
    require_shape(src.shape(), first.shape(), "batch gather");
    std::copy(src.data(), src.data() + src.size(), out.plane(static_cast<int>(b), 0));
  }
  return out;
}

template <class T>
Tensor<T> gather_targets(std::span<const GBufferSample> samples, std::span<const int> idx) {
  const auto& first = samples[idx[0]];
  if (!first.target) throw ValidationError("training sample has no target image");
  Tensor<T> out(static_cast<int>(idx.size()), 3, first.height(), first.width());
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto& s = samples[idx[b]];
    if (!s.target) throw ValidationError("training sample " + std::to_string(idx[b]) + " has no target image");
    require_shape(s.target->shape(), first.target->shape(), "batch gather");
    std::copy(s.target->data(), s.target->data() + s.target->size(), out.plane(static_cast<int>(b), 0));
  }
  return out;
}

template <class T>
bool all_finite(const nn::ParamRefs<T>& params) {
  for (const auto* p : params) {
    for (T v : p->grad.span()) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

template <class T>
io::DType dtype_of() {
  return std::is_same_v<T, float> ? io::DType::f32 : io::DType::f64;
}

}  // namespace

template <class T>
Trainer<T>::Trainer(const TrainConfig& config, std::span<const GBufferSample> samples,
                    const MaterialPalette& palette, std::vector<Tensor<float>> real_pool)
    : config_(config),
      samples_(samples),
      palette_(palette),
      real_pool_(std::move(real_pool)),
      channels_in_(config.modalities.channels(palette.size())),
      gen_(config.generator, channels_in_),
      disc_(config.discriminator, 3),
      fx_(config.extractor),
      rng_(derive_seed(config.seed, 3)) {
  config.validate();
  if (samples.empty()) throw ConfigError("trainer: empty dataset");
  const int h = samples.front().height(), w = samples.front().width();
  if (h != config.generator.full_h() || w != config.generator.full_w()) {
    throw ConfigError("trainer: generator resolution " + std::to_string(config.generator.full_h()) +
                      "x" + std::to_string(config.generator.full_w()) + " does not match " +
                      std::to_string(h) + "x" + std::to_string(w) + " samples");
  }
  for (const auto& r : real_pool_) {
    if (r.c() != 3 || r.h() != h || r.w() != w) throw ShapeError("trainer: real image of wrong size");
  }
  adam_g_ = nn::Adam<T>({config.lr_g, config.beta1, config.beta2, config.eps}, gen_.params());
  adam_d_ = nn::Adam<T>({config.lr_d, config.beta1, config.beta2, config.eps}, disc_.params());
}

template <class T>
std::vector<int> Trainer<T>::draw_batch() {
  std::vector<int> idx(config_.batch_size);
  const int n = static_cast<int>(samples_.size());
  for (int& i : idx) i = rng_.uniform_int(0, n - 1);
  return idx;
}

template <class T>
StepMetrics Trainer<T>::train_step() {
  const auto idx = draw_batch();
  return train_step(idx);
}

template <class T>
StepMetrics Trainer<T>::train_step(std::span<const int> indices) {
  const auto t0 = std::chrono::steady_clock::now();
  const int nb = static_cast<int>(indices.size());
  const int kk = config_.generator.k;
  if (nb == 0) throw ConfigError("train_step: empty batch");
  for (int i : indices) {
    if (i < 0 || i >= static_cast<int>(samples_.size())) throw ConfigError("train_step: batch index out of range");
  }

  std::vector<InputPyramid> pyrs;
  pyrs.reserve(nb);
  for (int i : indices) pyrs.push_back(build_pyramid(samples_[i], config_.generator.levels, config_.modalities));
  const InputPyramid pyr = stack_pyramids(pyrs);
  const Tensor<T> target = gather_targets<T>(samples_, indices);
  const Tensor<T> mask = gather<T>(samples_, indices, &GBufferSample::mask);
  const int h = mask.h(), w = mask.w();

  auto gparams = gen_.params();
  auto dparams = disc_.params();
  nn::zero_grads(gparams);
  nn::zero_grads(dparams);

  typename Generator<T>::Trace gtr;
  const Tensor<T> out = gen_.forward(pyr, &gtr);
  const auto tfeat = fx_.extract(target);

  Tensor<T> d_out;
  auto div = diversity_objective(fx_, config_.adversarial ? &disc_ : nullptr, out, target, mask, config_.rho,
                                 &d_out, &tfeat);

  StepMetrics m;
  m.step = step_;
  m.indices.assign(indices.begin(), indices.end());
  m.loss = div.total;
  for (const auto& bd : div.bundles) {
    m.perceptual += bd.perceptual[bd.k_star] / nb;
    m.adversarial += bd.adversarial[bd.k_star] / nb;
    for (double v : bd.background) m.background += v / (nb * kk);
    m.w += bd.w / nb;
    m.k_star.push_back(bd.k_star);
  }

  if (config_.adversarial) {
    Tensor<T> real;
    if (real_pool_.empty()) {
      real = target;
    } else {
      real.resize({nb, 3, h, w});
      for (int n = 0; n < nb; ++n) {
        const auto& r = real_pool_[rng_.uniform_int(0, static_cast<int>(real_pool_.size()) - 1)];
        std::copy(r.data(), r.data() + r.size(), real.plane(n, 0));
      }
    }
    // D sees the selected output of each sample as its fake.
    const auto& ftr = div.selected_trace;
    typename Discriminator<T>::Trace rtr;
    const Tensor<T>& zf = ftr.logits;
    const Tensor<T> zr = disc_.forward(real, &rtr);

    Tensor<T> df, dr;
    m.d_loss = static_cast<double>(adversarial_d_loss(zf, zr, mask, &df, &dr));
    if (config_.gamma > 0.0 && step_ % config_.reg_every == 0) {
      // Lazy penalty: applied every reg_every steps with its weight scaled up.
      const T cells = static_cast<T>(zf.plane_size());
      const T base = static_cast<T>(config_.gamma) / (T(2) * cells * static_cast<T>(nb));
      const T lazy = base * static_cast<T>(config_.reg_every);
      const T reg = disc_.penalty(rtr, PenaltySide::real, lazy, &dr) +
                    disc_.penalty(ftr, PenaltySide::fake, lazy, &df);
      m.regularizer = static_cast<double>(reg) / config_.reg_every;
    }
    disc_.backward(ftr, df);
    disc_.backward(rtr, dr);
    m.d_accuracy = discriminator_accuracy(zf, zr, mask);
  }
  gen_.backward(gtr, d_out);

  const bool finite = std::isfinite(m.loss) && std::isfinite(m.d_loss) && std::isfinite(m.regularizer) &&
                      all_finite(gparams) && all_finite(dparams);
  if (!finite) {
    std::string list;
    for (int i : indices) list += (list.empty() ? "" : ",") + std::to_string(i);
    throw NumericError("non-finite loss or gradient at step " + std::to_string(step_) +
                       " (batch indices " + list + "; loss " + std::to_string(m.loss) + ", d_loss " +
                       std::to_string(m.d_loss) + ")");
  }

  if (config_.adversarial) adam_d_.step();
  adam_g_.step();
  ++step_;
  m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return m;
}

template <class T>
io::Archive Trainer<T>::to_archive() const {
  io::Archive a;
  const auto dt = dtype_of<T>();
  a.meta = {{"format", "gis-checkpoint"},
            {"config", config_.to_json()},
            {"channels_in", channels_in_},
            {"height", config_.generator.full_h()},
            {"width", config_.generator.full_w()},
            {"palette", palette_to_json(palette_)},
            {"step", step_},
            {"rng", rng_.to_string()},
            {"adam_g_t", adam_g_.steps_taken()},
            {"adam_d_t", adam_d_.steps_taken()},
            {"precision", std::is_same_v<T, float> ? "f32" : "f64"}};
  auto put_all = [&](const std::string& prefix, const nn::Adam<T>& opt) {
    const auto& ps = opt.params();
    for (std::size_t i = 0; i < ps.size(); ++i) {
      a.put(prefix + "/" + ps[i]->name, ps[i]->value, dt);
      a.put("adam_" + prefix + "/m/" + ps[i]->name, opt.first_moments()[i], dt);
      a.put("adam_" + prefix + "/v/" + ps[i]->name, opt.second_moments()[i], dt);
    }
  };
  put_all("g", adam_g_);
  put_all("d", adam_d_);
  return a;
}

template <class T>
void Trainer<T>::save(const std::filesystem::path& path) const {
  to_archive().save(path);
}

template <class T>
void Trainer<T>::restore(const io::Archive& a) {
  if (a.meta.value("format", "") != "gis-checkpoint") throw IoError("restore: not a training checkpoint");
  auto load_all = [&](const std::string& prefix, nn::Adam<T>& opt) {
    const auto& ps = opt.params();
    for (std::size_t i = 0; i < ps.size(); ++i) {
      auto v = a.get<T>(prefix + "/" + ps[i]->name);
      require_shape(v.shape(), ps[i]->value.shape(), "checkpoint parameter");
      ps[i]->value = std::move(v);
      opt.first_moments()[i] = a.get<T>("adam_" + prefix + "/m/" + ps[i]->name);
      opt.second_moments()[i] = a.get<T>("adam_" + prefix + "/v/" + ps[i]->name);
    }
  };
  load_all("g", adam_g_);
  load_all("d", adam_d_);
  adam_g_.set_steps_taken(a.meta.at("adam_g_t").get<std::int64_t>());
  adam_d_.set_steps_taken(a.meta.at("adam_d_t").get<std::int64_t>());
  step_ = a.meta.at("step").get<std::int64_t>();
  rng_.from_string(a.meta.at("rng").get<std::string>());
}

template class Trainer<float>;
template class Trainer<double>;

CheckpointInfo read_checkpoint_info(const io::Archive& a) {
  if (a.meta.value("format", "") != "gis-checkpoint") throw IoError("not a training checkpoint");
  CheckpointInfo info;
  info.config = TrainConfig::from_json(a.meta.at("config"));
  info.channels_in = a.meta.at("channels_in").get<int>();
  info.height = a.meta.at("height").get<int>();
  info.width = a.meta.at("width").get<int>();
  info.palette = palette_from_json(a.meta.at("palette"));
  info.step = a.meta.at("step").get<std::int64_t>();
  return info;
}

Synthesizer Synthesizer::load(const std::filesystem::path& checkpoint) {
  const auto a = io::Archive::load(checkpoint);
  Synthesizer s;
  s.info = read_checkpoint_info(a);
  s.generator = Generator<float>(s.info.config.generator, s.info.channels_in);
  for (auto* p : s.generator.params()) {
    auto v = a.get<float>("g/" + p->name);
    require_shape(v.shape(), p->value.shape(), "checkpoint parameter");
    p->value = std::move(v);
  }
  return s;
}

std::vector<Tensor<float>> Synthesizer::synthesize(const GBufferSample& sample) const {
  if (sample.height() != info.height || sample.width() != info.width) {
    throw ShapeError("synthesize: checkpoint expects " + std::to_string(info.height) + "x" +
                     std::to_string(info.width) + ", sample is " + std::to_string(sample.height()) + "x" +
                     std::to_string(sample.width()));
  }
  if (sample.materials.c() != info.palette.size()) {
    throw ShapeError("synthesize: sample has " + std::to_string(sample.materials.c()) +
                     " material channels, checkpoint palette has " + std::to_string(info.palette.size()));
  }
  const auto pyr = build_pyramid(sample, info.config.generator.levels, info.config.modalities);
  const auto out = generator.forward(pyr);
  std::vector<Tensor<float>> images;
  for (int k = 0; k < info.config.generator.k; ++k) images.push_back(output_image(out, k));
  return images;
}

namespace {

std::vector<Tensor<float>> load_real_pool(const std::string& dir) {
  std::vector<Tensor<float>> out;
  if (dir.empty()) return out;
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) out.push_back(io::from_raster(io::read_png(f)));
  if (out.empty()) throw IoError("real_dir " + dir + " holds no PNG images");
  return out;
}

Dataset load_checked(const TrainConfig& config) {
  if (config.dataset.empty()) throw ConfigError("config: dataset path is required");
  Dataset ds = load_dataset(config.dataset);
  std::string problems;
  int bad = 0;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    auto report = validate_sample(s, ds.manifest.palette, config.generator.levels);
    if (!s.target) report.violations.push_back({"target", -1, -1, "missing target image"});
    if (!report.ok()) {
      ++bad;
      problems += "\n  sample " + std::to_string(i) + ": " + report.str();
    }
  }
  if (bad) throw ValidationError(std::to_string(bad) + " invalid samples:" + problems);
  if (ds.samples.empty()) throw ValidationError("dataset " + config.dataset + " is empty");
  return ds;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& out, std::int64_t step) {
  char name[64];
  std::snprintf(name, sizeof(name), "checkpoint_%06lld.gis", static_cast<long long>(step));
  return out / name;
}

template <class T>
FitResult run(Trainer<T>& trainer, const std::filesystem::path& out, int steps, bool append) {
  std::filesystem::create_directories(out);
  FitResult r;
  r.metrics_log = out / "metrics.jsonl";
  r.final_checkpoint = out / "final.gis";
  std::ofstream log(r.metrics_log, append ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot open " + r.metrics_log.string());
  const auto& cfg = trainer.config();
  while (trainer.step() < steps) {
    StepMetrics m;
    try {
      m = trainer.train_step();
    } catch (const NumericError& e) {
      std::ofstream dump(out / "nonfinite.json");
      dump << nlohmann::json{{"step", trainer.step()}, {"error", e.what()}}.dump(2) << "\n";
      throw;
    }
    if (cfg.log_every > 0 && m.step % cfg.log_every == 0) log << m.to_json().dump() << "\n";
    if (cfg.log_every > 0 && m.step % std::max(1, cfg.log_every * 100) == 0) {
      spdlog::info("step {} loss {:.5f} lp {:.5f} lb {:.5f} d {:.4f} ({:.3f}s)", m.step, m.loss, m.perceptual,
                   m.background, m.d_loss, m.seconds);
    }
    if (cfg.checkpoint_every > 0 && trainer.step() % cfg.checkpoint_every == 0 && trainer.step() < steps) {
      trainer.save(checkpoint_path(out, trainer.step()));
    }
    r.metrics.push_back(std::move(m));
  }
  log.flush();
  trainer.save(r.final_checkpoint);
  return r;
}

template <class T>
FitResult fit_typed(const TrainConfig& config, const Dataset& ds, const io::Archive* resume_from, bool append) {
  Trainer<T> trainer(config, ds.samples, ds.manifest.palette, load_real_pool(config.real_dir));
  if (resume_from) trainer.restore(*resume_from);
  std::filesystem::create_directories(config.out);
  {
    std::ofstream echo(std::filesystem::path(config.out) / "config.txt");
    echo << config.to_text();
  }
  return run(trainer, config.out, config.steps, append);
}

}  // namespace

FitResult fit(TrainConfig config) {
  config.validate();
  const Dataset ds = load_checked(config);
  config.resolve(ds.manifest.height, ds.manifest.width);
  return config.precision == Precision::f32 ? fit_typed<float>(config, ds, nullptr, false)
                                            : fit_typed<double>(config, ds, nullptr, false);
}

FitResult resume(const std::filesystem::path& checkpoint, int steps, const std::string& out_override) {
  const auto a = io::Archive::load(checkpoint);
  auto info = read_checkpoint_info(a);
  TrainConfig config = info.config;
  if (steps >= 0) config.steps = steps;
  if (!out_override.empty()) config.out = out_override;
  const Dataset ds = load_checked(config);
  if (ds.manifest.palette.hash() != info.palette.hash()) {
    throw ValidationError("resume: dataset palette differs from the checkpoint's");
  }
  return config.precision == Precision::f32 ? fit_typed<float>(config, ds, &a, true)
                                            : fit_typed<double>(config, ds, &a, true);
}

}  // namespace gis
