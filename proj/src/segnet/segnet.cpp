#include "ciss/segnet.hpp"

#include <cmath>
#include <random>

namespace ciss {

std::array<Shape, kParamTensors> param_shapes(std::size_t classes) {
  return {Shape{16, 3, 3, 3},  Shape{16}, Shape{32, 16, 3, 3}, Shape{32}, Shape{64, 32, 3, 3},
          Shape{64},           Shape{32, 64, 3, 3}, Shape{32},  Shape{classes, 32, 1, 1}, Shape{classes}};
}

template <typename T>
std::size_t SegNetParams<T>::num_parameters() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.numel();
  return n;
}

template <typename T>
SegNetParams<T> init_params(std::uint64_t seed, std::size_t classes) {
  if (classes < 2) throw ConfigError("segmentation needs at least 2 classes");
  const auto shapes = param_shapes(classes);
  std::mt19937_64 rng(seed);
  SegNetParams<T> p;
  for (std::size_t i = 0; i < kParamTensors; ++i) {
    p.tensors[i] = Tensor<T>(shapes[i], T{0});
    if (shapes[i].size() != 4) continue;
    const double fan_in = static_cast<double>(shapes[i][1] * shapes[i][2] * shapes[i][3]);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (auto& v : p.tensors[i].data()) v = static_cast<T>(dist(rng));
  }
  return p;
}

template <typename T>
SegNetVars<T> bind(Tape<T>& tape, const SegNetParams<T>& params, bool requires_grad) {
  SegNetVars<T> v;
  for (std::size_t i = 0; i < kParamTensors; ++i) v.p[i] = tape.leaf(params.tensors[i], requires_grad);
  return v;
}

template <typename T>
Var<T> encode(const SegNetVars<T>& net, Var<T> image) {
  const auto& s = image.shape();
  if (s.size() != 3 || s[0] != 3 || s[1] % 4 != 0 || s[2] % 4 != 0) {
    throw ShapeError("encode: expected a 3 x H x W image with H, W multiples of 4, got " + shape_str(s));
  }
  auto h = relu(conv2d(image, net.p[0], net.p[1], 2, 1));
  h = relu(conv2d(h, net.p[2], net.p[3], 2, 1));
  return relu(conv2d(h, net.p[4], net.p[5], 1, 1));
}

template <typename T>
Var<T> decode(const SegNetVars<T>& net, Var<T> features) {
  const auto& s = features.shape();
  if (s.size() != 3 || s[0] != kFeatureChannels) {
    throw ShapeError("decode: expected 64 x h x w features, got " + shape_str(s));
  }
  auto h = relu(conv2d(features, net.p[6], net.p[7], 1, 1));
  h = conv2d(h, net.p[8], net.p[9], 1, 0);
  return upsample_bilinear(h, 4);
}

template <typename T>
Tensor<T> encode(const SegNetParams<T>& params, const Image& image) {
  Tape<T> tape;
  auto net = bind(tape, params, false);
  return encode(net, tape.constant(to_tensor<T>(image))).value();
}

template <typename T>
Tensor<T> decode(const SegNetParams<T>& params, const Tensor<T>& features) {
  Tape<T> tape;
  auto net = bind(tape, params, false);
  return decode(net, tape.constant(features)).value();
}

template <typename T>
Tensor<T> forward_logits(const SegNetParams<T>& params, const Image& image) {
  Tape<T> tape;
  auto net = bind(tape, params, false);
  return forward(net, tape.constant(to_tensor<T>(image))).value();
}

template <typename T>
LabelMap predict(const SegNetParams<T>& params, const Image& image) {
  const auto logits = forward_logits(params, image);
  const std::size_t c_n = logits.dim(0), h = logits.dim(1), w = logits.dim(2), hw = h * w;
  LabelMap out(h, w);
  for (std::size_t p = 0; p < hw; ++p) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < c_n; ++c) {
      if (logits[c * hw + p] > logits[best * hw + p]) best = c;
    }
    out.data[p] = static_cast<std::uint8_t>(best);
  }
  return out;
}

#define CISS_INSTANTIATE_SEGNET(T)                                             \
  template struct SegNetParams<T>;                                             \
  template SegNetParams<T> init_params<T>(std::uint64_t, std::size_t);         \
  template SegNetVars<T> bind(Tape<T>&, const SegNetParams<T>&, bool);         \
  template Var<T> encode(const SegNetVars<T>&, Var<T>);                        \
  template Var<T> decode(const SegNetVars<T>&, Var<T>);                        \
  template Tensor<T> encode(const SegNetParams<T>&, const Image&);             \
  template Tensor<T> decode(const SegNetParams<T>&, const Tensor<T>&);         \
  template Tensor<T> forward_logits(const SegNetParams<T>&, const Image&);     \
  template LabelMap predict(const SegNetParams<T>&, const Image&);

CISS_INSTANTIATE_SEGNET(float)
CISS_INSTANTIATE_SEGNET(double)

}  // namespace ciss
