#include <cmath>
#include <numbers>

#include "ciss/stylize.hpp"

namespace ciss {
namespace {

bool is_pow2(std::size_t n) { return n && !(n & (n - 1)); }

void fft_radix2(std::span<Complex> a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        // Exact twiddles per index keep round-off from compounding.
        const Complex w = std::polar(1.0, ang * static_cast<double>(k));
        const Complex u = a[i + k];
        const Complex v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

void dft_direct(std::span<Complex> a, bool inverse) {
  const std::size_t n = a.size();
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc{0.0, 0.0};
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      acc += a[t] * std::polar(1.0, ang);
    }
    out[k] = acc;
  }
  std::copy(out.begin(), out.end(), a.begin());
}

void transform2(ComplexPlane& p, bool inverse) {
  for (std::size_t u = 0; u < p.height; ++u) dft1(std::span<Complex>(p.data.data() + u * p.width, p.width), inverse);
  std::vector<Complex> column(p.height);
  for (std::size_t v = 0; v < p.width; ++v) {
    for (std::size_t u = 0; u < p.height; ++u) column[u] = p.at(u, v);
    dft1(column, inverse);
    for (std::size_t u = 0; u < p.height; ++u) p.at(u, v) = column[u];
  }
}

}  // namespace

void dft1(std::span<Complex> values, bool inverse) {
  if (values.size() <= 1) return;
  if (is_pow2(values.size())) {
    fft_radix2(values, inverse);
  } else {
    dft_direct(values, inverse);
  }
}

ComplexPlane dft2(std::span<const double> channel, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ShapeError("dft2: extents must be positive");
  if (channel.size() != height * width) throw ShapeError("dft2: plane size does not match extents");
  ComplexPlane p{height, width, std::vector<Complex>(channel.begin(), channel.end())};
  transform2(p, false);
  return p;
}

ComplexPlane idft2(const ComplexPlane& spectrum) {
  ComplexPlane p = spectrum;
  transform2(p, true);
  const double norm = 1.0 / static_cast<double>(p.height * p.width);
  for (auto& v : p.data) v *= norm;
  return p;
}

Spectrum Spectrum::of(const Image& image) {
  Spectrum s;
  for (std::size_t c = 0; c < Image::kChannels; ++c) {
    s.channels[c] = dft2(std::span<const double>(image.data.data() + c * image.plane_size(), image.plane_size()),
                         image.height, image.width);
  }
  return s;
}

}  // namespace ciss
