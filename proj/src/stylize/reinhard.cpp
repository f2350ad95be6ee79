#include <Eigen/Dense>
#include <cmath>

#include "ciss/stylize.hpp"

namespace ciss {
namespace {

// RGB -> LMS cone response, as published with the original transfer method.
const Eigen::Matrix3d& rgb_to_lms() {
  static const Eigen::Matrix3d m = (Eigen::Matrix3d() << 0.3811, 0.5783, 0.0402,  //
                                    0.1967, 0.7244, 0.0782,                       //
                                    0.0241, 0.1288, 0.8444)
                                       .finished();
  return m;
}

// The published LMS -> RGB table is rounded to four digits and is off by up
// to 7e-3 from a true inverse, so the exact inverse is used instead.
const Eigen::Matrix3d& lms_to_rgb() {
  static const Eigen::Matrix3d m = rgb_to_lms().inverse();
  return m;
}

constexpr double kLmsFloor = 1e-6;

}  // namespace

std::vector<double> rgb_to_lab(const Image& image) {
  const std::size_t n = image.plane_size();
  std::vector<double> lab(3 * n);
  const double s3 = 1.0 / std::sqrt(3.0), s6 = 1.0 / std::sqrt(6.0), s2 = 1.0 / std::sqrt(2.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d rgb(image.data[i], image.data[n + i], image.data[2 * n + i]);
    const Eigen::Vector3d lms = rgb_to_lms() * rgb;
    const double l = std::log10(std::max(lms[0], kLmsFloor));
    const double m = std::log10(std::max(lms[1], kLmsFloor));
    const double s = std::log10(std::max(lms[2], kLmsFloor));
    lab[i] = s3 * (l + m + s);
    lab[n + i] = s6 * (l + m - 2.0 * s);
    lab[2 * n + i] = s2 * (l - m);
  }
  return lab;
}

Image lab_to_rgb(std::span<const double> lab, std::size_t height, std::size_t width) {
  const std::size_t n = height * width;
  if (lab.size() != 3 * n) throw ShapeError("lab_to_rgb: plane size does not match extents");
  Image out(height, width);
  const double s3 = std::sqrt(3.0) / 3.0, s6 = std::sqrt(6.0) / 6.0, s2 = std::sqrt(2.0) / 2.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = s3 * lab[i], b = s6 * lab[n + i], c = s2 * lab[2 * n + i];
    const Eigen::Vector3d lms(std::pow(10.0, a + b + c), std::pow(10.0, a + b - c), std::pow(10.0, a - 2.0 * b));
    const Eigen::Vector3d rgb = lms_to_rgb() * lms;
    for (std::size_t ch = 0; ch < 3; ++ch) out.data[ch * n + i] = rgb[static_cast<long>(ch)];
  }
  return out;
}

std::array<ChannelStats, 3> lab_stats(std::span<const double> lab, std::size_t plane_size) {
  std::array<ChannelStats, 3> stats{};
  for (std::size_t c = 0; c < 3; ++c) {
    const auto plane = lab.subspan(c * plane_size, plane_size);
    double mean = 0.0;
    for (double v : plane) mean += v;
    mean /= static_cast<double>(plane_size);
    double var = 0.0;
    for (double v : plane) var += (v - mean) * (v - mean);
    stats[c] = {mean, std::sqrt(var / static_cast<double>(plane_size))};
  }
  return stats;
}

std::vector<double> reinhard_remap_lab(const Image& content, const Image& style) {
  auto lab = rgb_to_lab(content);
  const auto style_lab = rgb_to_lab(style);
  const std::size_t n = content.plane_size();
  const auto src = lab_stats(lab, n);
  const auto ref = lab_stats(style_lab, style.plane_size());
  for (std::size_t c = 0; c < 3; ++c) {
    const double gain = src[c].stddev < 1e-6 ? 1.0 : ref[c].stddev / src[c].stddev;
    for (std::size_t i = 0; i < n; ++i) {
      auto& v = lab[c * n + i];
      v = (v - src[c].mean) * gain + ref[c].mean;
    }
  }
  return lab;
}

Image reinhard_transfer(const Image& content, const Image& style) {
  const auto lab = reinhard_remap_lab(content, style);
  Image out = lab_to_rgb(lab, content.height, content.width);
  clamp_unit(out);
  return out;
}

}  // namespace ciss
