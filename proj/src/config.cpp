#include "dlgan/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "dlgan/errors.hpp"

namespace dlgan {

namespace {

using json = nlohmann::json;

// Field table driving JSON, text and validation in one place.
template <typename F>
void for_each_field(TrainingConfig& c, F&& f) {
  f("window", c.window);
  f("stride", c.stride);
  f("latent_dim", c.latent_dim);
  f("feature_dim", c.feature_dim);
  f("patch_len", c.patch_len);
  f("patch_embed", c.patch_embed);
  f("heads", c.heads);
  f("trend_window", c.trend_window);
  f("noise_len", c.noise_len);
  f("noise_dim", c.noise_dim);
  f("ae_layers", c.ae_layers);
  f("summary_layers", c.summary_layers);
  f("generator_layers", c.generator_layers);
  f("disc_layers", c.disc_layers);
  f("ff_mult", c.ff_mult);
  f("lr_pretrain", c.lr_pretrain);
  f("lr_joint", c.lr_joint);
  f("lr_disc", c.lr_disc);
  f("batch_size", c.batch_size);
  f("epochs_ae", c.epochs_ae);
  f("epochs_latent", c.epochs_latent);
  f("epochs_joint", c.epochs_joint);
  f("disc_steps", c.disc_steps);
  f("seed", c.seed);
  f("no_extractor", c.no_extractor);
  f("no_reconstructor", c.no_reconstructor);
  f("ca_scaled", c.ca_scaled);
  f("extractor_scaled", c.extractor_scaled);
  f("d2_real_recon_as_fake", c.d2_real_recon_as_fake);
  f("joint_extractor", c.joint_extractor);
  f("features", c.features);
}

[[noreturn]] void invalid(const std::string& field, const std::string& why) {
  throw Error(ErrorKind::ConfigInvalid, field + ": " + why);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
void parse_value(const std::string& key, const std::string& text, T& out) {
  std::istringstream is(text);
  if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "1") {
      out = true;
    } else if (text == "false" || text == "0") {
      out = false;
    } else {
      invalid(key, "expected true/false, got '" + text + "'");
    }
    return;
  } else {
    T v{};
    is >> v;
    if (!is || !is.eof()) invalid(key, "cannot parse '" + text + "'");
    out = v;
  }
}

}  // namespace

Ablation parse_ablation(const std::string& s) {
  if (s.empty() || s == "none") return Ablation::None;
  if (s == "no_extractor") return Ablation::NoExtractor;
  if (s == "no_reconstructor") return Ablation::NoReconstructor;
  if (s == "all") return Ablation::All;
  invalid("ablation", "unknown value '" + s + "'");
}

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::None: return "none";
    case Ablation::NoExtractor: return "no_extractor";
    case Ablation::NoReconstructor: return "no_reconstructor";
    case Ablation::All: return "all";
  }
  return "none";
}

Ablation TrainingConfig::ablation() const {
  if (no_extractor && no_reconstructor) return Ablation::All;
  if (no_extractor) return Ablation::NoExtractor;
  if (no_reconstructor) return Ablation::NoReconstructor;
  return Ablation::None;
}

void TrainingConfig::set_ablation(Ablation a) {
  no_extractor = a == Ablation::NoExtractor || a == Ablation::All;
  no_reconstructor = a == Ablation::NoReconstructor || a == Ablation::All;
}

void TrainingConfig::resolve(long m) {
  if (m < 1) invalid("features", "need at least one feature");
  if (features != 0 && features != m) {
    throw Error(ErrorKind::FeatureCountMismatch,
                "config has " + std::to_string(features) + " features, data has " + std::to_string(m));
  }
  features = m;
  if (latent_dim == 0) latent_dim = std::min(4 * m, 24L);
  if (feature_dim == 0) feature_dim = latent_dim;
  if (noise_len == 0) noise_len = window;
  if (noise_dim == 0) noise_dim = latent_dim;
  validate();
}

void TrainingConfig::validate() const {
  auto positive = [](const char* name, long v) {
    if (v < 1) invalid(name, "must be >= 1");
  };
  if (window < 2) invalid("window", "must be >= 2");
  positive("stride", stride);
  positive("patch_len", patch_len);
  positive("patch_embed", patch_embed);
  positive("heads", heads);
  positive("trend_window", trend_window);
  positive("ae_layers", ae_layers);
  positive("summary_layers", summary_layers);
  positive("generator_layers", generator_layers);
  positive("disc_layers", disc_layers);
  positive("ff_mult", ff_mult);
  positive("batch_size", batch_size);
  if (epochs_ae < 0 || epochs_latent < 0 || epochs_joint < 0) invalid("epochs", "must be >= 0");
  if (!(lr_pretrain > 0)) invalid("lr_pretrain", "must be > 0");
  if (!(lr_joint > 0)) invalid("lr_joint", "must be > 0");
  if (!(lr_disc >= 0)) invalid("lr_disc", "must be >= 0");
  positive("disc_steps", disc_steps);
  if (window % patch_len != 0) invalid("patch_len", "T not divisible by p");
  if (patch_embed % heads != 0) invalid("heads", "patch_embed not divisible by heads");
  if (trend_window % 2 == 0) invalid("trend_window", "must be odd");
  if (features > 0) {
    positive("latent_dim", latent_dim);
    positive("feature_dim", feature_dim);
    positive("noise_len", noise_len);
    positive("noise_dim", noise_dim);
    if (noise_dim % heads != 0) invalid("heads", "noise_dim not divisible by heads");
    if (trend_window > noise_len) invalid("trend_window", "exceeds noise_len");
    if (no_reconstructor && noise_len != window) {
      invalid("noise_len", "must equal window when the reconstructor is ablated");
    }
  }
}

nlohmann::json TrainingConfig::to_json() const {
  json j = json::object();
  TrainingConfig copy = *this;
  for_each_field(copy, [&](const char* key, auto& v) { j[key] = v; });
  return j;
}

TrainingConfig TrainingConfig::from_json(const nlohmann::json& j) {
  TrainingConfig c;
  for_each_field(c, [&](const char* key, auto& v) {
    if (j.contains(key)) v = j.at(key).get<std::decay_t<decltype(v)>>();
  });
  return c;
}

std::string TrainingConfig::to_text() const {
  std::ostringstream os;
  TrainingConfig copy = *this;
  for_each_field(copy, [&](const char* key, auto& v) {
    using T = std::decay_t<decltype(v)>;
    os << key << " = ";
    if constexpr (std::is_same_v<T, bool>) {
      os << (v ? "true" : "false");
    } else if constexpr (std::is_floating_point_v<T>) {
      os << json(v).dump();
    } else {
      os << v;
    }
    os << '\n';
  });
  return os.str();
}

TrainingConfig TrainingConfig::parse_text(const std::string& text) {
  TrainingConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) invalid(line, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool found = false;
    if (key == "ablation") {
      c.set_ablation(parse_ablation(value));
      continue;
    }
    for_each_field(c, [&](const char* k, auto& v) {
      if (key == k) {
        parse_value(key, value, v);
        found = true;
      }
    });
    if (!found) invalid(key, "unknown key");
  }
  return c;
}

TrainingConfig TrainingConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::FileNotFound, path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_text(ss.str());
}

}  // namespace dlgan
