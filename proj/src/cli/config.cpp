#include "ciss/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

namespace ciss {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_f64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (v.empty() || used != v.size() || !std::isfinite(out)) throw ConfigError(key + ": expected a finite number, got '" + v + "'");
  return out;
}

// Shortest text that reads back to the same double.
std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct Field {
  const char* key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define CISS_U64(name, member)                                                                     \
  Field {                                                                                          \
    name, [](ExperimentConfig& c, const std::string& v) { c.member = to_u64(name, v); },           \
        [](const ExperimentConfig& c) { return std::to_string(c.member); }                         \
  }
#define CISS_F64(name, member)                                                                     \
  Field {                                                                                          \
    name, [](ExperimentConfig& c, const std::string& v) { c.member = to_f64(name, v); },           \
        [](const ExperimentConfig& c) { return fmt(c.member); }                                    \
  }
#define CISS_STR(name, member)                                                                     \
  Field {                                                                                          \
    name, [](ExperimentConfig& c, const std::string& v) { c.member = v; },                          \
        [](const ExperimentConfig& c) { return c.member; }                                          \
  }
#define CISS_ENUM(name, member, parse_fn)                                                          \
  Field {                                                                                          \
    name, [](ExperimentConfig& c, const std::string& v) { c.member = parse_fn(v); },               \
        [](const ExperimentConfig& c) { return to_string(c.member); }                               \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      CISS_U64("master_seed", train.master_seed),
      CISS_U64("dataset_seed", dataset_seed),
      CISS_U64("n_source_train", n_source_train),
      CISS_U64("n_target_train", n_target_train),
      CISS_U64("n_target_val", n_target_val),
      CISS_STR("dataset_dir", dataset_dir),
      CISS_STR("output_dir", output_dir),
      CISS_U64("seeds", seeds),
      CISS_U64("iterations", train.iterations),
      CISS_U64("batch_size", train.batch_size),
      CISS_ENUM("variant", train.loss.variant, parse_loss_variant),
      CISS_F64("lambda_s", train.loss.lambda_s),
      CISS_F64("lambda_t", train.loss.lambda_t),
      CISS_ENUM("invariance_point", train.loss.invariance_point, parse_invariance_point),
      CISS_ENUM("invariance_norm", train.loss.invariance_norm, parse_invariance_norm),
      CISS_ENUM("style_method", train.loss.style.method, parse_style_method),
      CISS_F64("beta", train.loss.style.beta),
      CISS_F64("jitter_brightness", train.loss.style.jitter.brightness),
      CISS_F64("jitter_contrast", train.loss.style.jitter.contrast),
      CISS_F64("jitter_saturation", train.loss.style.jitter.saturation),
      CISS_F64("jitter_hue", train.loss.style.jitter.hue),
      CISS_F64("jitter_probability", train.loss.style.probability),
      CISS_F64("tau", train.tau),
      CISS_F64("ema_alpha", train.ema_alpha),
      CISS_F64("dacs_prob", train.dacs_prob),
      CISS_F64("warmup_fraction", train.warmup_fraction),
      CISS_F64("lr_power", train.lr_power),
      CISS_F64("lr_encoder", train.optim.lr_encoder),
      CISS_F64("lr_decoder", train.optim.lr_decoder),
      CISS_F64("weight_decay", train.optim.weight_decay),
      CISS_F64("adam_beta1", train.optim.beta1),
      CISS_F64("adam_beta2", train.optim.beta2),
      CISS_F64("adam_eps", train.optim.eps),
  };
  return f;
}

}  // namespace

void ExperimentConfig::validate() const {
  train.validate();
  if (n_source_train == 0 || n_target_train == 0 || n_target_val == 0) throw ConfigError("dataset sizes must be >= 1");
  if (seeds == 0) throw ConfigError("seeds must be >= 1");
  if (!(train.tau > 1.0 / static_cast<double>(kNumClasses))) throw ConfigError("tau must exceed 1/C");
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(*this, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig c;
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    try {
      c.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

}  // namespace ciss
