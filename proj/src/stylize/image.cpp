#include "ciss/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ciss {
namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  return out;
}

// Reads the netpbm header "<magic> <w> <h> <maxval>" followed by one
// whitespace byte, honouring '#' comments.
void read_header(std::istream& in, const std::filesystem::path& path, const char* magic, std::size_t& w,
                 std::size_t& h) {
  auto token = [&]() {
    std::string t;
    char ch;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(ch);
    }
    return t;
  };
  if (token() != magic) throw DataError(path.string() + ": expected netpbm magic " + magic);
  long wv = 0, hv = 0, maxval = 0;
  try {
    wv = std::stol(token());
    hv = std::stol(token());
    maxval = std::stol(token());
  } catch (const std::exception&) {
    throw DataError(path.string() + ": malformed netpbm header");
  }
  if (wv <= 0 || hv <= 0) throw DataError(path.string() + ": non-positive image extent");
  if (maxval != 255) throw DataError(path.string() + ": only maxval 255 is supported");
  w = static_cast<std::size_t>(wv);
  h = static_cast<std::size_t>(hv);
}

}  // namespace

void clamp_unit(Image& image) {
  for (auto& v : image.data) v = std::clamp(v, 0.0, 1.0);
}

std::uint8_t quantize_unit(double v) {
  const double scaled = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::min(scaled, 255.0));
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  auto out = open_out(path);
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<char> bytes(image.plane_size() * Image::kChannels);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < Image::kChannels; ++c) {
        bytes[(y * image.width + x) * 3 + c] = static_cast<char>(quantize_unit(image.at(c, y, x)));
      }
    }
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image: " + path.string());
  std::size_t w = 0, h = 0;
  read_header(in, path, "P6", w, h);
  std::vector<unsigned char> bytes(w * h * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw DataError(path.string() + ": truncated pixel data");
  Image image(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) image.at(c, y, x) = bytes[(y * w + x) * 3 + c] / 255.0;
    }
  }
  return image;
}

void write_pgm(const std::filesystem::path& path, const LabelMap& labels) {
  auto out = open_out(path);
  out << "P5\n" << labels.width << ' ' << labels.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(labels.data.data()), static_cast<std::streamsize>(labels.data.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

LabelMap read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open label map: " + path.string());
  std::size_t w = 0, h = 0;
  read_header(in, path, "P5", w, h);
  LabelMap labels(h, w);
  in.read(reinterpret_cast<char*>(labels.data.data()), static_cast<std::streamsize>(labels.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(labels.data.size())) {
    throw DataError(path.string() + ": truncated label data");
  }
  return labels;
}

}  // namespace ciss
