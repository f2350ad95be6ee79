#include <algorithm>
#include <cmath>
#include <random>

#include "ciss/stylize.hpp"

namespace ciss {
namespace {

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double d = mx - mn;
  v = mx;
  s = mx > 0.0 ? d / mx : 0.0;
  if (d <= 0.0) {
    h = 0.0;
    return;
  }
  if (mx == r) {
    h = std::fmod((g - b) / d, 6.0);
  } else if (mx == g) {
    h = (b - r) / d + 2.0;
  } else {
    h = (r - g) / d + 4.0;
  }
  h /= 6.0;
  if (h < 0.0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double hh = h * 6.0;
  const double c = v * s;
  const double x = c * (1.0 - std::fabs(std::fmod(hh, 2.0) - 1.0));
  const double m = v - c;
  double rr = 0, gg = 0, bb = 0;
  switch (static_cast<int>(hh) % 6) {
    case 0: rr = c, gg = x; break;
    case 1: rr = x, gg = c; break;
    case 2: gg = c, bb = x; break;
    case 3: gg = x, bb = c; break;
    case 4: rr = x, bb = c; break;
    default: rr = c, bb = x; break;
  }
  r = rr + m;
  g = gg + m;
  b = bb + m;
}

}  // namespace

std::string to_string(StyleMethod m) {
  switch (m) {
    case StyleMethod::fda: return "fda";
    case StyleMethod::reinhard: return "reinhard";
    case StyleMethod::jitter: return "jitter";
  }
  return "?";
}

StyleMethod parse_style_method(const std::string& name) {
  if (name == "fda") return StyleMethod::fda;
  if (name == "reinhard") return StyleMethod::reinhard;
  if (name == "jitter") return StyleMethod::jitter;
  throw ConfigError("unknown stylization method '" + name + "' (expected fda, reinhard or jitter)");
}

void StyleConfig::validate() const {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in [0, 1]");
  if (!(probability >= 0.0 && probability <= 1.0)) throw ConfigError("jitter probability must lie in [0, 1]");
  for (double s : {jitter.brightness, jitter.contrast, jitter.saturation}) {
    if (!(s >= 0.0 && s < 1.0)) throw ConfigError("jitter strengths must lie in [0, 1)");
  }
  if (!(jitter.hue >= 0.0 && jitter.hue <= 0.5)) throw ConfigError("hue jitter must lie in [0, 0.5]");
}

JitterDraw draw_jitter(std::uint64_t seed, const StyleConfig& config) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Both numbers are drawn for every slot so the stream layout is fixed.
  auto slot = [&](double strength, double center) -> std::optional<double> {
    const bool apply = unit(rng) < config.probability;
    const double value = center + strength * (2.0 * unit(rng) - 1.0);
    return apply ? std::optional<double>(value) : std::nullopt;
  };
  JitterDraw d;
  d.brightness = slot(config.jitter.brightness, 1.0);
  d.contrast = slot(config.jitter.contrast, 1.0);
  d.saturation = slot(config.jitter.saturation, 1.0);
  d.hue = slot(config.jitter.hue, 0.0);
  return d;
}

Image apply_jitter(const Image& image, const JitterDraw& draw) {
  Image out = image;
  const std::size_t n = out.plane_size();
  double* r = out.data.data();
  double* g = r + n;
  double* b = g + n;

  if (draw.brightness && *draw.brightness != 1.0) {
    for (auto& v : out.data) v *= *draw.brightness;
    clamp_unit(out);
  }
  if (draw.contrast && *draw.contrast != 1.0) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += luma(r[i], g[i], b[i]);
    m /= static_cast<double>(n);
    for (auto& v : out.data) v = (v - m) * *draw.contrast + m;
    clamp_unit(out);
  }
  if (draw.saturation && *draw.saturation != 1.0) {
    for (std::size_t i = 0; i < n; ++i) {
      const double y = luma(r[i], g[i], b[i]);
      r[i] = (r[i] - y) * *draw.saturation + y;
      g[i] = (g[i] - y) * *draw.saturation + y;
      b[i] = (b[i] - y) * *draw.saturation + y;
    }
    clamp_unit(out);
  }
  if (draw.hue && *draw.hue != 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      double h, s, v;
      rgb_to_hsv(r[i], g[i], b[i], h, s, v);
      h = std::fmod(h + *draw.hue + 1.0, 1.0);
      hsv_to_rgb(h, s, v, r[i], g[i], b[i]);
    }
    clamp_unit(out);
  }
  return out;
}

Image color_jitter(const Image& image, std::uint64_t seed, const StyleConfig& config) {
  return apply_jitter(image, draw_jitter(seed, config));
}

Image stylize(const Image& content, const Image& style, const StyleConfig& config, std::uint64_t seed) {
  switch (config.method) {
    case StyleMethod::fda: return fda_stylize(content, style, config.beta);
    case StyleMethod::reinhard: return reinhard_transfer(content, style);
    case StyleMethod::jitter: return color_jitter(content, seed, config);
  }
  throw ConfigError("unknown stylization method");
}

}  // namespace ciss
