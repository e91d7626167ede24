#include "gis/train/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "gis/core/error.hpp"
#include "gis/core/rng.hpp"

namespace gis {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class I>
I parse_int(const std::string& key, const std::string& v) {
  I out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: '" + key + "' expects true/false, got '" + v + "'");
}

std::vector<int> parse_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_int<int>(key, item));
  }
  return out;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string extractor_text(const ExtractorSpec& e) {
  switch (e.kind) {
    case ExtractorKind::identity:
      return "identity";
    case ExtractorKind::random:
      return "random";
    case ExtractorKind::file:
      return "file:" + e.path;
  }
  return "random";
}

std::string num(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

}  // namespace

void TrainConfig::validate() const {
  if (steps < 0) throw ConfigError("config: steps must be >= 0");
  if (batch_size <= 0) throw ConfigError("config: batch_size must be positive");
  if (!(lr_g >= 0.0) || !(lr_d >= 0.0)) throw ConfigError("config: learning rates must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("config: betas must lie in [0,1)");
  }
  if (!(eps > 0.0)) throw ConfigError("config: eps must be positive");
  if (!(gamma >= 0.0)) throw ConfigError("config: gamma must be >= 0");
  if (reg_every <= 0) throw ConfigError("config: reg_every must be positive");
  if (!(rho > 0.0)) throw ConfigError("config: rho must be positive");
  if (checkpoint_every < 0 || log_every < 0) throw ConfigError("config: cadences must be >= 0");
  if (!modalities.mask) throw ConfigError("config: the mask modality cannot be excluded");
  generator.validate();
  discriminator.validate();
  extractor.validate();
}

void TrainConfig::set(const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string v = trim(raw_value);
  if (key == "dataset") {
    dataset = v;
  } else if (key == "out") {
    out = v;
  } else if (key == "real_dir") {
    real_dir = v;
  } else if (key == "steps") {
    steps = parse_int<int>(key, v);
  } else if (key == "batch_size") {
    batch_size = parse_int<int>(key, v);
  } else if (key == "seed") {
    seed = parse_int<std::uint64_t>(key, v);
  } else if (key == "lr_g") {
    lr_g = parse_double(key, v);
  } else if (key == "lr_d") {
    lr_d = parse_double(key, v);
  } else if (key == "beta1") {
    beta1 = parse_double(key, v);
  } else if (key == "beta2") {
    beta2 = parse_double(key, v);
  } else if (key == "eps") {
    eps = parse_double(key, v);
  } else if (key == "gamma") {
    gamma = parse_double(key, v);
  } else if (key == "reg_every") {
    reg_every = parse_int<int>(key, v);
  } else if (key == "rho") {
    rho = parse_double(key, v);
  } else if (key == "adversarial") {
    adversarial = parse_bool(key, v);
  } else if (key == "checkpoint_every") {
    checkpoint_every = parse_int<int>(key, v);
  } else if (key == "log_every") {
    log_every = parse_int<int>(key, v);
  } else if (key == "precision") {
    if (v == "f32") {
      precision = Precision::f32;
    } else if (v == "f64") {
      precision = Precision::f64;
    } else {
      throw ConfigError("config: precision must be f32 or f64");
    }
  } else if (key == "exclude") {
    modalities = Modalities::excluding(v);
  } else if (key == "extractor") {
    const auto layers = extractor.use_layers;
    extractor = ExtractorSpec::parse(v);
    extractor.use_layers = layers;
  } else if (key == "extractor_layers") {
    extractor.use_layers = parse_list(key, v);
  } else if (key == "k") {
    generator.k = parse_int<int>(key, v);
  } else if (key == "levels") {
    generator.levels = parse_int<int>(key, v);
  } else if (key == "widths") {
    generator.widths = parse_list(key, v);
  } else if (key == "leaky_slope") {
    generator.leaky_slope = discriminator.leaky_slope = parse_double(key, v);
  } else if (key == "d_widths") {
    discriminator.widths = parse_list(key, v);
  } else if (key == "d_pad") {
    if (v == "zero") {
      discriminator.pad_mode = nn::PadMode::zero;
    } else if (v == "periodic") {
      discriminator.pad_mode = nn::PadMode::periodic;
    } else {
      throw ConfigError("config: d_pad must be zero or periodic");
    }
  } else {
    throw ConfigError("config: unknown key '" + key + "'");
  }
}

void TrainConfig::apply_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: line " + std::to_string(lineno) + " is not key = value");
    }
    set(line.substr(0, eq), line.substr(eq + 1));
  }
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  TrainConfig c;
  c.apply_text(ss.str());
  return c;
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "dataset = " << dataset << "\n"
     << "out = " << out << "\n"
     << "real_dir = " << real_dir << "\n"
     << "steps = " << steps << "\n"
     << "batch_size = " << batch_size << "\n"
     << "seed = " << seed << "\n"
     << "lr_g = " << num(lr_g) << "\n"
     << "lr_d = " << num(lr_d) << "\n"
     << "beta1 = " << num(beta1) << "\n"
     << "beta2 = " << num(beta2) << "\n"
     << "eps = " << num(eps) << "\n"
     << "gamma = " << num(gamma) << "\n"
     << "reg_every = " << reg_every << "\n"
     << "rho = " << num(rho) << "\n"
     << "adversarial = " << (adversarial ? "true" : "false") << "\n"
     << "checkpoint_every = " << checkpoint_every << "\n"
     << "log_every = " << log_every << "\n"
     << "precision = " << (precision == Precision::f32 ? "f32" : "f64") << "\n"
     << "exclude = " << modalities.excluded_name() << "\n"
     << "extractor = " << extractor_text(extractor) << "\n"
     << "extractor_layers = " << join(extractor.use_layers) << "\n"
     << "k = " << generator.k << "\n"
     << "levels = " << generator.levels << "\n"
     << "widths = " << join(generator.widths) << "\n"
     << "leaky_slope = " << num(generator.leaky_slope) << "\n"
     << "d_widths = " << join(discriminator.widths) << "\n"
     << "d_pad = " << (discriminator.pad_mode == nn::PadMode::periodic ? "periodic" : "zero") << "\n";
  return os.str();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"text", to_text()},
          {"generator", generator.to_json()},
          {"discriminator", discriminator.to_json()},
          {"extractor", extractor.to_json()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.apply_text(j.at("text").get<std::string>());
  c.generator = GeneratorConfig::from_json(j.at("generator"));
  c.discriminator = DiscriminatorConfig::from_json(j.at("discriminator"));
  c.extractor = ExtractorSpec::from_json(j.at("extractor"));
  return c;
}

void TrainConfig::resolve(int height, int width) {
  const int factor = 1 << (generator.levels - 1);
  if (height % factor != 0 || width % factor != 0) {
    throw ConfigError("config: " + std::to_string(height) + "x" + std::to_string(width) +
                      " images are not divisible by 2^(levels-1) = " + std::to_string(factor));
  }
  generator.base_h = height / factor;
  generator.base_w = width / factor;
  generator.seed = derive_seed(seed, 1);
  discriminator.seed = derive_seed(seed, 2);
  validate();
}

}  // namespace gis
