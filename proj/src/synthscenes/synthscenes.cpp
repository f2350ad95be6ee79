#include "ciss/synthscenes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace ciss {
namespace {

using Rgb = std::array<double, 3>;

constexpr std::array<Rgb, kNumClasses> kPalette = {{
    {0.55, 0.75, 0.95},  // sky
    {0.45, 0.55, 0.35},  // ground
    {0.90, 0.30, 0.25},  // disk
    {0.90, 0.80, 0.30},  // box
    {0.30, 0.70, 0.70},  // wedge
}};

constexpr std::uint64_t kGeometryStream = 1;
constexpr std::uint64_t kSourceStyleStream = 2;
constexpr std::uint64_t kTargetStyleStream = 3;
constexpr std::uint64_t kSplitStream = 0x5eed;

struct Layout {
  LabelMap labels;
  std::array<Rgb, kNumClasses> palette;
};

std::size_t distinct_classes(const LabelMap& labels) {
  std::array<bool, 256> seen{};
  for (auto v : labels.data) seen[v] = true;
  return static_cast<std::size_t>(std::count(seen.begin(), seen.end(), true));
}

Layout draw_layout(std::uint64_t seed) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    std::mt19937_64 rng(derive_seed(seed, kGeometryStream, attempt));
    auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
    auto pick = [&](int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); };

    Layout out{LabelMap(kSceneSize, kSceneSize), {}};
    const double horizon = uni(18.0, 42.0);
    const double slope = uni(-0.25, 0.25);
    const double mid = kSceneSize / 2.0;
    for (std::size_t y = 0; y < kSceneSize; ++y) {
      for (std::size_t x = 0; x < kSceneSize; ++x) {
        out.labels.at(y, x) = static_cast<double>(y) < horizon + slope * (static_cast<double>(x) - mid) ? kSky : kGround;
      }
    }

    const int n_shapes = pick(2, 5);
    for (int s = 0; s < n_shapes; ++s) {
      const auto kind = static_cast<SceneClass>(pick(kDisk, kWedge));
      const double cx = uni(6.0, 58.0), cy = uni(6.0, 58.0);
      const double r = uni(5.0, 12.0);
      const double hw = uni(4.0, 11.0), hh = uni(4.0, 11.0);
      for (std::size_t y = 0; y < kSceneSize; ++y) {
        for (std::size_t x = 0; x < kSceneSize; ++x) {
          const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
          bool inside = false;
          switch (kind) {
            case kDisk: inside = dx * dx + dy * dy <= r * r; break;
            case kBox: inside = std::fabs(dx) <= hw && std::fabs(dy) <= hh; break;
            default: inside = dy <= r && std::fabs(dx) <= (dy + r) / 2.0; break;  // apex up
          }
          if (inside) out.labels.at(y, x) = kind;
        }
      }
    }

    for (std::size_t c = 0; c < kNumClasses; ++c) {
      for (std::size_t ch = 0; ch < 3; ++ch) out.palette[c][ch] = std::clamp(kPalette[c][ch] + uni(-0.08, 0.08), 0.0, 1.0);
    }
    if (distinct_classes(out.labels) >= 3) return out;
  }
}

Image render(const Layout& layout, std::uint64_t seed, Domain domain) {
  Image img(kSceneSize, kSceneSize);
  std::mt19937_64 rng(derive_seed(seed, domain == Domain::source ? kSourceStyleStream : kTargetStyleStream, 0));
  std::normal_distribution<double> noise(0.0, domain == Domain::source ? 0.02 : 0.05);

  double gain = 1.0;
  Rgb tint{1.0, 1.0, 1.0};
  if (domain == Domain::target) {
    gain = std::uniform_real_distribution<double>(0.25, 0.45)(rng);
    tint = {0.75, 0.85, 1.25};
  }
  for (std::size_t y = 0; y < kSceneSize; ++y) {
    // Mild vertical shading so classes are not perfectly flat.
    const double shade = 1.0 - 0.12 * (static_cast<double>(y) / kSceneSize - 0.5);
    for (std::size_t x = 0; x < kSceneSize; ++x) {
      const auto& base = layout.palette[layout.labels.at(y, x)];
      for (std::size_t c = 0; c < 3; ++c) {
        double v = std::clamp(base[c] * shade, 0.0, 1.0);
        if (domain == Domain::target) v = gain * tint[c] * std::pow(v, 1.5);
        img.at(c, y, x) = v;
      }
    }
  }
  for (auto& v : img.data) v += noise(rng);
  clamp_unit(img);
  return img;
}

Image quantized(Image img) {
  for (auto& v : img.data) v = quantize_unit(v) / 255.0;
  return img;
}

std::string sample_name(Split s, std::size_t index, const char* ext) {
  std::ostringstream os;
  os << to_string(s) << '_';
  os.width(5);
  os.fill('0');
  os << index << ext;
  return os.str();
}

}  // namespace

const char* class_name(std::size_t id) {
  static constexpr std::array<const char*, kNumClasses> kNames = {"sky", "ground", "disk", "box", "wedge"};
  return id < kNumClasses ? kNames[id] : "?";
}

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
  constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
  return mix64(mix64(master ^ mix64(stream + kGamma)) + kGamma * (index + 1));
}

Scene gen_scene(std::uint64_t seed, Domain domain) {
  const auto layout = draw_layout(seed);
  return Scene{render(layout, seed, domain), layout.labels, domain, seed};
}

std::string to_string(Split s) {
  switch (s) {
    case Split::source_train: return "source_train";
    case Split::target_train: return "target_train";
    case Split::target_val: return "target_val";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "source_train") return Split::source_train;
  if (name == "target_train") return Split::target_train;
  if (name == "target_val") return Split::target_val;
  throw DataError("unknown split '" + name + "'");
}

std::size_t Manifest::count(Split s) const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [s](const auto& e) { return e.split == s; }));
}

std::string Manifest::to_text() const {
  std::ostringstream os;
  for (const auto& e : entries) os << to_string(e.split) << ',' << e.seed << ',' << e.image_path << ',' << e.label_path << '\n';
  return os.str();
}

Manifest Manifest::parse(const std::string& text) {
  Manifest m;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    if (fields.size() != 4) throw DataError("manifest line " + std::to_string(lineno) + ": expected 4 fields");
    ManifestEntry e;
    e.split = parse_split(fields[0]);
    try {
      e.seed = std::stoull(fields[1]);
    } catch (const std::exception&) {
      throw DataError("manifest line " + std::to_string(lineno) + ": bad seed");
    }
    e.image_path = fields[2];
    e.label_path = fields[3];
    m.entries.push_back(std::move(e));
  }
  return m;
}

Manifest build_splits(std::uint64_t master_seed, std::size_t n_src_train, std::size_t n_tgt_train, std::size_t n_val) {
  if (n_src_train == 0 || n_tgt_train == 0 || n_val == 0) throw ConfigError("every split needs at least one sample");
  Manifest m;
  std::uint64_t counter = 0;
  auto add = [&](Split s, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      ManifestEntry e;
      e.split = s;
      e.seed = derive_seed(master_seed, kSplitStream, counter++);
      e.image_path = "images/" + sample_name(s, i, ".ppm");
      e.label_path = s == Split::target_train ? "-" : "labels/" + sample_name(s, i, ".pgm");
      m.entries.push_back(std::move(e));
    }
  };
  add(Split::source_train, n_src_train);
  add(Split::target_train, n_tgt_train);
  add(Split::target_val, n_val);
  return m;
}

void write_dataset(const Manifest& manifest, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "labels");
  for (const auto& e : manifest.entries) {
    const auto scene = gen_scene(e.seed, e.split == Split::source_train ? Domain::source : Domain::target);
    write_ppm(dir / e.image_path, scene.image);
    if (e.label_path != "-") write_pgm(dir / e.label_path, scene.labels);
  }
  std::ofstream out(dir / "manifest.csv", std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write manifest in " + dir.string());
  out << manifest.to_text();
}

Dataset Dataset::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.csv", std::ios::binary);
  if (!in) throw DataError("no dataset manifest at " + (dir / "manifest.csv").string());
  std::stringstream buf;
  buf << in.rdbuf();
  Dataset d;
  d.manifest_ = Manifest::parse(buf.str());
  for (const auto& e : d.manifest_.entries) {
    Sample s{read_ppm(dir / e.image_path), {}};
    if (e.label_path != "-") s.labels = read_pgm(dir / e.label_path);
    switch (e.split) {
      case Split::source_train: d.source_train_.push_back(std::move(s)); break;
      case Split::target_train: d.target_train_.push_back(std::move(s)); break;
      case Split::target_val: d.target_val_.push_back(std::move(s)); break;
    }
  }
  return d;
}

Dataset Dataset::generate(const Manifest& manifest) {
  Dataset d;
  d.manifest_ = manifest;
  for (const auto& e : manifest.entries) {
    auto scene = gen_scene(e.seed, e.split == Split::source_train ? Domain::source : Domain::target);
    Sample s{quantized(std::move(scene.image)), {}};
    if (e.label_path != "-") s.labels = std::move(scene.labels);
    switch (e.split) {
      case Split::source_train: d.source_train_.push_back(std::move(s)); break;
      case Split::target_train: d.target_train_.push_back(std::move(s)); break;
      case Split::target_val: d.target_val_.push_back(std::move(s)); break;
    }
  }
  return d;
}

const std::vector<Dataset::Sample>& Dataset::samples(Split s) const {
  switch (s) {
    case Split::source_train: return source_train_;
    case Split::target_train: return target_train_;
    case Split::target_val: return target_val_;
  }
  throw DataError("unknown split");
}

std::size_t Dataset::size(Split s) const { return samples(s).size(); }

const Image& Dataset::image(Split s, std::size_t i) const {
  const auto& v = samples(s);
  if (i >= v.size()) throw DataError(to_string(s) + " index " + std::to_string(i) + " out of range");
  return v[i].image;
}

const LabelMap& Dataset::labels(Split s, std::size_t i) const {
  if (s == Split::target_train) throw DataError("labels of target_train scenes are withheld from training");
  const auto& v = samples(s);
  if (i >= v.size()) throw DataError(to_string(s) + " index " + std::to_string(i) + " out of range");
  return v[i].labels;
}

}  // namespace ciss
