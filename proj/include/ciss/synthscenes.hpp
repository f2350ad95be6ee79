#pragma once

// Procedural two-domain toy scenes. A seed fixes the geometry and the
// palette; the domain only changes rendering ("day" vs "night").

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ciss/image.hpp"

namespace ciss {

constexpr std::size_t kNumClasses = 5;
constexpr std::size_t kSceneSize = 64;

enum SceneClass : std::uint8_t { kSky = 0, kGround = 1, kDisk = 2, kBox = 3, kWedge = 4 };

const char* class_name(std::size_t id);

enum class Domain { source, target };

struct Scene {
  Image image;
  LabelMap labels;
  Domain domain = Domain::source;
  std::uint64_t seed = 0;
};

/// splitmix64 finalizer; a bijection on 64-bit words.
std::uint64_t mix64(std::uint64_t x);

/// Seed of the `index`-th draw of a named stream under `master`. Distinct
/// indices give distinct seeds for a fixed (master, stream).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index);

Scene gen_scene(std::uint64_t seed, Domain domain);

enum class Split { source_train, target_train, target_val };

std::string to_string(Split s);
Split parse_split(const std::string& name);

struct ManifestEntry {
  Split split = Split::source_train;
  std::uint64_t seed = 0;
  std::string image_path;
  std::string label_path;  // "-" when labels are withheld

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct Manifest {
  std::vector<ManifestEntry> entries;

  std::size_t count(Split s) const;
  std::string to_text() const;
  static Manifest parse(const std::string& text);

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

/// Assigns one seed per sample from a single counter, so seeds of different
/// splits never coincide. Target-train labels are marked withheld.
Manifest build_splits(std::uint64_t master_seed, std::size_t n_src_train, std::size_t n_tgt_train,
                      std::size_t n_val);

/// Renders every manifest entry to `dir` and writes `dir/manifest.csv`.
void write_dataset(const Manifest& manifest, const std::filesystem::path& dir);

/// Training view of a dataset. Images are 8-bit quantized whether they come
/// from disk or were generated in memory, so both paths train identically.
class Dataset {
 public:
  static Dataset load(const std::filesystem::path& dir);
  static Dataset generate(const Manifest& manifest);

  std::size_t size(Split s) const;
  const Image& image(Split s, std::size_t i) const;
  /// Throws DataError for target-train scenes: their labels never leave the
  /// generator.
  const LabelMap& labels(Split s, std::size_t i) const;

  const Manifest& manifest() const { return manifest_; }

 private:
  struct Sample {
    Image image;
    LabelMap labels;
  };
  const std::vector<Sample>& samples(Split s) const;

  Manifest manifest_;
  std::vector<Sample> source_train_, target_train_, target_val_;
};

}  // namespace ciss
