#pragma once

// Flat `key = value` experiment configuration with `#` comments.

#include <cstdint>
#include <filesystem>
#include <string>

#include "ciss/uda.hpp"

namespace ciss {

struct ExperimentConfig {
  std::uint64_t dataset_seed = 0;  // scene generation; training uses train.master_seed
  std::size_t n_source_train = 200;
  std::size_t n_target_train = 200;
  std::size_t n_target_val = 100;
  std::string dataset_dir;  // empty: generate in memory from dataset_seed and sizes
  std::string output_dir = "runs/default";
  std::size_t seeds = 3;    // seeds per ablation or sweep cell
  TrainConfig train;

  void validate() const;

  /// Rejects unknown keys, duplicate keys and malformed values.
  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);
  /// Applies one `key = value` assignment.
  void set(const std::string& key, const std::string& value);
  /// Every key, in a form parse() reads back to an equal config.
  std::string to_text() const;
};

}  // namespace ciss
