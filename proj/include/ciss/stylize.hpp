#pragma once

// Shallow stylization g(content, style): Fourier amplitude swapping,
// statistics matching in a decorrelated log color space, and color jitter.

#include <array>
#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ciss/image.hpp"

namespace ciss {

using Complex = std::complex<double>;

struct ComplexPlane {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Complex> data;

  Complex& at(std::size_t u, std::size_t v) { return data[u * width + v]; }
  const Complex& at(std::size_t u, std::size_t v) const { return data[u * width + v]; }
};

/// In-place 1D DFT. Radix-2 for power-of-two lengths, direct summation
/// otherwise. Unnormalized in both directions.
void dft1(std::span<Complex> values, bool inverse);

/// Unnormalized forward 2D DFT of a real H x W plane.
ComplexPlane dft2(std::span<const double> channel, std::size_t height, std::size_t width);

/// Inverse 2D DFT including the 1/(H W) factor.
ComplexPlane idft2(const ComplexPlane& spectrum);

/// Per-channel spectra of an image.
struct Spectrum {
  std::array<ComplexPlane, Image::kChannels> channels;

  static Spectrum of(const Image& image);
  double amplitude(std::size_t c, std::size_t u, std::size_t v) const { return std::abs(channels[c].at(u, v)); }
  double phase(std::size_t c, std::size_t u, std::size_t v) const { return std::arg(channels[c].at(u, v)); }
};

/// Ideal low-pass mask on the unshifted spectrum: with b = floor(beta *
/// min(H, W)), the four b x b corner blocks are 1, i.e. bin (u, v) is 1 iff
/// (u < b or u >= H - b) and (v < b or v >= W - b).
std::vector<std::uint8_t> lowpass_mask(std::size_t height, std::size_t width, double beta);

enum class StyleMethod { fda, reinhard, jitter };

std::string to_string(StyleMethod m);
StyleMethod parse_style_method(const std::string& name);

struct JitterStrengths {
  double brightness = 0.2;
  double contrast = 0.2;
  double saturation = 0.2;
  double hue = 0.05;  // cycles
};

struct StyleConfig {
  StyleMethod method = StyleMethod::fda;
  double beta = 0.06;
  JitterStrengths jitter;
  double probability = 0.5;

  void validate() const;
};

/// Low-frequency amplitude of `style`, remaining amplitude and all phase of
/// `content`, before clamping. Channel-major 3 x H x W.
std::vector<double> fda_mix(const Image& content, const Image& style, double beta);

Image fda_stylize(const Image& content, const Image& style, double beta);

/// RGB -> LMS -> log10 -> l-alpha-beta, planar. Non-positive LMS responses
/// are floored before the logarithm.
std::vector<double> rgb_to_lab(const Image& image);
Image lab_to_rgb(std::span<const double> lab, std::size_t height, std::size_t width);

struct ChannelStats {
  double mean = 0.0;
  double stddev = 0.0;
};
std::array<ChannelStats, 3> lab_stats(std::span<const double> lab, std::size_t plane_size);

/// Matches per-channel mean and deviation of content to style in
/// l-alpha-beta space. Returns the remapped planes, before conversion back.
std::vector<double> reinhard_remap_lab(const Image& content, const Image& style);

Image reinhard_transfer(const Image& content, const Image& style);

/// Factors for one jitter draw; an empty slot means "not applied".
struct JitterDraw {
  std::optional<double> brightness;
  std::optional<double> contrast;
  std::optional<double> saturation;
  std::optional<double> hue;
};

JitterDraw draw_jitter(std::uint64_t seed, const StyleConfig& config);
Image apply_jitter(const Image& image, const JitterDraw& draw);
Image color_jitter(const Image& image, std::uint64_t seed, const StyleConfig& config);

/// Dispatches to the configured method. Jitter ignores `style` and uses
/// `seed`; the other methods ignore `seed`.
Image stylize(const Image& content, const Image& style, const StyleConfig& config, std::uint64_t seed);

}  // namespace ciss
