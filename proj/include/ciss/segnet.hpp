#pragma once

// Micro encoder/decoder segmentation network F = decoder(encoder(image)).
//
//   encoder: conv3x3 3->16 s2, conv3x3 16->32 s2, conv3x3 32->64 s1, ReLU after each
//   decoder: conv3x3 64->32 + ReLU, conv1x1 32->C, bilinear x4
//
// The post-ReLU output of the third encoder conv is the bottleneck feature map
// used by the invariance losses.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ciss/image.hpp"
#include "ciss/synthscenes.hpp"
#include "ciss/tensor.hpp"

namespace ciss {

constexpr std::size_t kFeatureChannels = 64;
constexpr std::size_t kParamTensors = 10;
constexpr std::size_t kEncoderTensors = 6;

inline constexpr std::array<const char*, kParamTensors> kParamNames = {
    "enc1.weight", "enc1.bias", "enc2.weight", "enc2.bias", "enc3.weight",
    "enc3.bias",   "dec1.weight", "dec1.bias", "cls.weight",  "cls.bias"};

/// Shape of each parameter tensor for `classes` output classes.
std::array<Shape, kParamTensors> param_shapes(std::size_t classes = kNumClasses);

template <typename T>
struct SegNetParams {
  std::array<Tensor<T>, kParamTensors> tensors;

  static bool is_encoder(std::size_t i) { return i < kEncoderTensors; }
  std::size_t num_parameters() const;
  std::size_t classes() const { return tensors[8].dim(0); }

  template <typename U>
  SegNetParams<U> cast() const {
    SegNetParams<U> out;
    for (std::size_t i = 0; i < kParamTensors; ++i) out.tensors[i] = tensors[i].template cast<U>();
    return out;
  }

  friend bool operator==(const SegNetParams&, const SegNetParams&) = default;
};

/// He-normal weights (std sqrt(2 / fan_in)), zero biases.
template <typename T>
SegNetParams<T> init_params(std::uint64_t seed, std::size_t classes = kNumClasses);

/// Parameters placed on a tape.
template <typename T>
struct SegNetVars {
  std::array<Var<T>, kParamTensors> p;
};

template <typename T>
SegNetVars<T> bind(Tape<T>& tape, const SegNetParams<T>& params, bool requires_grad);

/// Image tensor 3 x H x W (H, W multiples of 4) -> features 64 x H/4 x W/4.
template <typename T>
Var<T> encode(const SegNetVars<T>& net, Var<T> image);

/// Features 64 x h x w -> logits C x 4h x 4w.
template <typename T>
Var<T> decode(const SegNetVars<T>& net, Var<T> features);

template <typename T>
Var<T> forward(const SegNetVars<T>& net, Var<T> image) {
  return decode(net, encode(net, image));
}

/// Gradient-free evaluation helpers.
template <typename T>
Tensor<T> encode(const SegNetParams<T>& params, const Image& image);
template <typename T>
Tensor<T> decode(const SegNetParams<T>& params, const Tensor<T>& features);
template <typename T>
Tensor<T> forward_logits(const SegNetParams<T>& params, const Image& image);

/// Per-pixel argmax of the logits, ties to the lowest class id.
template <typename T>
LabelMap predict(const SegNetParams<T>& params, const Image& image);

// ---------------------------------------------------------------------------
// Checkpoints: "CISSCKPT", u32 version, then records
// {u32 name_len, name, u32 ndim, u32 dims[ndim], f32 data[]}, little-endian.

constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointRecord {
  std::string name;
  Shape dims;
  std::vector<float> data;

  friend bool operator==(const CheckpointRecord&, const CheckpointRecord&) = default;
};

void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> read_checkpoint(const std::filesystem::path& path);

/// Records named "<prefix><param name>".
template <typename T>
void append_records(std::vector<CheckpointRecord>& out, const std::string& prefix, const SegNetParams<T>& params);

/// Extracts the ten parameter tensors under `prefix`; throws DataError if any
/// is missing or misshapen.
template <typename T>
SegNetParams<T> params_from_records(const std::vector<CheckpointRecord>& records, const std::string& prefix);

}  // namespace ciss
