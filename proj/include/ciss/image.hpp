#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "ciss/tensor.hpp"

namespace ciss {

/// Three-channel planar image with values in [0, 1].
struct Image {
  static constexpr std::size_t kChannels = 3;

  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;  // channel-major, row-major planes

  Image() = default;
  Image(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), data(kChannels * h * w, fill) {}

  std::size_t plane_size() const { return height * width; }
  double& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }
  bool same_size(const Image& o) const { return height == o.height && width == o.width; }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Per-pixel class ids; kIgnore marks pixels excluded from losses and metrics.
struct LabelMap {
  static constexpr std::uint8_t kIgnore = 255;

  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> data;

  LabelMap() = default;
  LabelMap(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), data(h * w, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x) { return data[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return data[y * width + x]; }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

/// Clamps every value into [0, 1].
void clamp_unit(Image& image);

/// 0 -> 0, 1 -> 255, round half up.
std::uint8_t quantize_unit(double v);

template <typename T>
Tensor<T> to_tensor(const Image& image) {
  std::vector<T> values(image.data.begin(), image.data.end());
  return Tensor<T>(Shape{Image::kChannels, image.height, image.width}, std::move(values));
}

/// Binary P6 with maxval 255.
void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);

/// Binary P5 with maxval 255; class ids stored verbatim.
void write_pgm(const std::filesystem::path& path, const LabelMap& labels);
LabelMap read_pgm(const std::filesystem::path& path);

}  // namespace ciss
