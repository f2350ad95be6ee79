#include <cmath>

#include "ciss/stylize.hpp"

namespace ciss {

std::vector<std::uint8_t> lowpass_mask(std::size_t height, std::size_t width, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in [0, 1], got " + std::to_string(beta));
  const auto band = static_cast<std::size_t>(std::floor(beta * static_cast<double>(std::min(height, width))));
  auto in_band = [band](std::size_t i, std::size_t n) { return i < band || i + band >= n; };
  std::vector<std::uint8_t> mask(height * width, 0);
  for (std::size_t u = 0; u < height; ++u) {
    if (!in_band(u, height)) continue;
    for (std::size_t v = 0; v < width; ++v) {
      if (in_band(v, width)) mask[u * width + v] = 1;
    }
  }
  return mask;
}

std::vector<double> fda_mix(const Image& content, const Image& style, double beta) {
  if (!content.same_size(style)) {
    throw ShapeError("fda: content is " + std::to_string(content.height) + "x" + std::to_string(content.width) +
                     " but style is " + std::to_string(style.height) + "x" + std::to_string(style.width));
  }
  const auto mask = lowpass_mask(content.height, content.width, beta);
  const std::size_t n = content.plane_size();
  std::vector<double> out(Image::kChannels * n);
  for (std::size_t c = 0; c < Image::kChannels; ++c) {
    auto fc = dft2(std::span<const double>(content.data.data() + c * n, n), content.height, content.width);
    const auto fs = dft2(std::span<const double>(style.data.data() + c * n, n), style.height, style.width);
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[i]) fc.data[i] = std::polar(std::abs(fs.data[i]), std::arg(fc.data[i]));
    }
    const auto back = idft2(fc);
    for (std::size_t i = 0; i < n; ++i) out[c * n + i] = back.data[i].real();
  }
  return out;
}

Image fda_stylize(const Image& content, const Image& style, double beta) {
  Image out(content.height, content.width);
  out.data = fda_mix(content, style, beta);
  clamp_unit(out);
  return out;
}

}  // namespace ciss
