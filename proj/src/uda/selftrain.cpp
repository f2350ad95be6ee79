#include <algorithm>
#include <random>

#include "ciss/uda.hpp"

namespace ciss {

template <typename T>
PseudoLabels pseudolabel_from_probs(const Tensor<T>& probs, double tau) {
  if (probs.rank() != 3) throw ShapeError("pseudolabel: expected C x H x W probabilities, got " + shape_str(probs.shape()));
  const std::size_t c_n = probs.dim(0), h = probs.dim(1), w = probs.dim(2), hw = h * w;
  if (!(tau > 1.0 / static_cast<double>(c_n) && tau < 1.0)) {
    throw ConfigError("pseudolabel threshold must lie in (1/C, 1), got " + std::to_string(tau));
  }
  PseudoLabels out{LabelMap(h, w), 0.0};
  std::size_t confident = 0;
  for (std::size_t p = 0; p < hw; ++p) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < c_n; ++c) {
      if (probs[c * hw + p] > probs[best * hw + p]) best = c;
    }
    out.labels.data[p] = static_cast<std::uint8_t>(best);
    if (static_cast<double>(probs[best * hw + p]) >= tau) ++confident;
  }
  out.confidence = static_cast<double>(confident) / static_cast<double>(hw);
  return out;
}

template <typename T>
PseudoLabels pseudolabel(const SegNetParams<T>& teacher, const Image& target, double tau) {
  Tape<T> tape;
  const auto net = bind(tape, teacher, false);
  const auto probs = softmax_channels(forward(net, tape.constant(to_tensor<T>(target))));
  return pseudolabel_from_probs(probs.value(), tau);
}

std::vector<std::uint8_t> classmix_mask(const LabelMap& source_labels, std::uint64_t seed) {
  std::array<bool, 256> present{};
  for (auto v : source_labels.data) present[v] = true;
  std::vector<std::uint8_t> classes;
  for (std::size_t c = 0; c < 256; ++c) {
    if (present[c] && c != LabelMap::kIgnore) classes.push_back(static_cast<std::uint8_t>(c));
  }
  std::mt19937_64 rng(seed);
  std::shuffle(classes.begin(), classes.end(), rng);
  std::array<bool, 256> chosen{};
  for (std::size_t i = 0; i < (classes.size() + 1) / 2; ++i) chosen[classes[i]] = true;

  std::vector<std::uint8_t> mask(source_labels.data.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = chosen[source_labels.data[i]] ? 1 : 0;
  return mask;
}

std::pair<Image, LabelMap> apply_mix(const Image& src, const LabelMap& src_labels, const Image& tgt,
                                     const LabelMap& tgt_labels, const std::vector<std::uint8_t>& mask) {
  const std::size_t hw = src.plane_size();
  if (!src.same_size(tgt) || src_labels.height != src.height || src_labels.width != src.width ||
      tgt_labels.height != src.height || tgt_labels.width != src.width || mask.size() != hw) {
    throw ShapeError("class mixing needs equally sized images, labels and mask");
  }
  std::pair<Image, LabelMap> out{tgt, tgt_labels};
  for (std::size_t p = 0; p < hw; ++p) {
    if (!mask[p]) continue;
    out.second.data[p] = src_labels.data[p];
    for (std::size_t c = 0; c < Image::kChannels; ++c) out.first.data[c * hw + p] = src.data[c * hw + p];
  }
  return out;
}

std::pair<Image, LabelMap> dacs_mix(const Image& src, const LabelMap& src_labels, const Image& tgt,
                                    const LabelMap& tgt_labels, std::uint64_t seed) {
  return apply_mix(src, src_labels, tgt, tgt_labels, classmix_mask(src_labels, seed));
}

template <typename T>
void ema_update(SegNetParams<T>& teacher, const SegNetParams<T>& student, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("EMA rate must lie in [0, 1]");
  const T a = static_cast<T>(alpha), b = static_cast<T>(1.0 - alpha);
  for (std::size_t i = 0; i < kParamTensors; ++i) {
    auto& t = teacher.tensors[i];
    const auto& s = student.tensors[i];
    if (t.shape() != s.shape()) {
      throw ShapeError(std::string("EMA: ") + kParamNames[i] + " teacher " + shape_str(t.shape()) + " vs student " +
                       shape_str(s.shape()));
    }
    auto td = t.data();
    const auto sd = s.data();
    for (std::size_t k = 0; k < td.size(); ++k) td[k] = a * td[k] + b * sd[k];
  }
}

#define CISS_INSTANTIATE_SELFTRAIN(T)                                        \
  template PseudoLabels pseudolabel_from_probs(const Tensor<T>&, double);   \
  template PseudoLabels pseudolabel(const SegNetParams<T>&, const Image&, double); \
  template void ema_update(SegNetParams<T>&, const SegNetParams<T>&, double);

CISS_INSTANTIATE_SELFTRAIN(float)
CISS_INSTANTIATE_SELFTRAIN(double)

}  // namespace ciss
