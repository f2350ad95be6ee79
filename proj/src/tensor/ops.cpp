#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

#include "ciss/tensor.hpp"

namespace ciss {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

struct ConvGeometry {
  std::size_t channels, height, width, ksize, out_h, out_w;
  int stride, pad;
  std::size_t rows() const { return channels * ksize * ksize; }
  std::size_t cols() const { return out_h * out_w; }
};

template <typename T>
void im2col(const T* in, const ConvGeometry& g, T* col) {
  const auto k = g.ksize;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* row = col + ((c * k + ki) * k + kj) * g.cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ki);
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.height)) {
            std::fill(dst, dst + g.out_w, T{0});
            continue;
          }
          const T* src = in + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kj);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.width)) ? T{0} : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* out) {
  const auto k = g.ksize;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* row = col + ((c * k + ki) * k + kj) * g.cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ki);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          const T* src = row + oy * g.out_w;
          T* dst = out + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kj);
            if (ix >= 0 && ix < static_cast<long>(g.width)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

// Source index pair and blend weight for one output coordinate.
struct Tap {
  std::size_t lo, hi;
  double w_hi;
};

std::vector<Tap> bilinear_taps(std::size_t in_extent, int factor) {
  std::vector<Tap> taps(in_extent * static_cast<std::size_t>(factor));
  for (std::size_t o = 0; o < taps.size(); ++o) {
    double src = (static_cast<double>(o) + 0.5) / factor - 0.5;
    if (src < 0) src = 0;
    auto lo = static_cast<std::size_t>(src);
    if (lo > in_extent - 1) lo = in_extent - 1;
    const std::size_t hi = std::min(lo + 1, in_extent - 1);
    taps[o] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> kernel, Var<T> bias, int stride, int pad) {
  const auto& x = input.value();
  const auto& w = kernel.value();
  const auto& b = bias.value();
  if (x.rank() != 3) throw ShapeError("conv2d: input must be C x H x W, got " + shape_str(x.shape()));
  if (w.rank() != 4) throw ShapeError("conv2d: kernel must be C_out x C_in x k x k, got " + shape_str(w.shape()));
  if (w.dim(2) != w.dim(3)) throw ShapeError("conv2d: kernel must be square, got " + shape_str(w.shape()));
  if (w.dim(2) % 2 == 0) throw ConfigError("conv2d: kernel size must be odd, got " + std::to_string(w.dim(2)));
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (pad < 0) throw ConfigError("conv2d: pad must be >= 0");
  if (w.dim(1) != x.dim(0)) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(w.dim(1)) + " input channels, input has " +
                     std::to_string(x.dim(0)));
  }
  if (b.rank() != 1 || b.dim(0) != w.dim(0)) {
    throw ShapeError("conv2d: bias must have " + std::to_string(w.dim(0)) + " entries, got " + shape_str(b.shape()));
  }
  const long span_h = static_cast<long>(x.dim(1)) + 2L * pad - static_cast<long>(w.dim(2));
  const long span_w = static_cast<long>(x.dim(2)) + 2L * pad - static_cast<long>(w.dim(2));
  if (span_h < 0 || span_w < 0) {
    throw ShapeError("conv2d: kernel " + std::to_string(w.dim(2)) + " larger than padded input " + shape_str(x.shape()));
  }

  ConvGeometry g{x.dim(0),
                 x.dim(1),
                 x.dim(2),
                 w.dim(2),
                 static_cast<std::size_t>(span_h / stride + 1),
                 static_cast<std::size_t>(span_w / stride + 1),
                 stride,
                 pad};
  const auto out_c = w.dim(0);
  const bool pointwise = g.ksize == 1 && stride == 1 && pad == 0;

  // Eigen only sees owned matrices; their aligned storage keeps the
  // vectorized summation order independent of heap addresses.
  auto col = std::make_shared<RowMat<T>>(static_cast<long>(g.rows()), static_cast<long>(g.cols()));
  if (pointwise)
    *col = CMapMat<T>(x.data().data(), col->rows(), col->cols());
  else
    im2col(x.data().data(), g, col->data());

  Tensor<T> out(Shape{out_c, g.out_h, g.out_w});
  {
    const RowMat<T> wm = CMapMat<T>(w.data().data(), static_cast<long>(out_c), static_cast<long>(g.rows()));
    RowMat<T> om = wm * *col;
    for (std::size_t o = 0; o < out_c; ++o) om.row(static_cast<long>(o)).array() += b[o];
    MapMat<T>(out.data().data(), om.rows(), om.cols()) = om;
  }

  return input.tape().record(
      std::move(out), {input, kernel, bias},
      [input, kernel, bias, g, out_c, col, pointwise](Tape<T>& tape, std::span<const T> grad_out, const Tensor<T>&) {
        const long rows = static_cast<long>(g.rows());
        const long cols = static_cast<long>(g.cols());
        const RowMat<T> gm = CMapMat<T>(grad_out.data(), static_cast<long>(out_c), cols);
        if (kernel.requires_grad()) {
          const RowMat<T> dw = gm * col->transpose();
          MapMat<T>(tape.grad_buffer(kernel).data(), static_cast<long>(out_c), rows) += dw;
        }
        if (bias.requires_grad()) {
          auto db = tape.grad_buffer(bias);
          for (std::size_t o = 0; o < out_c; ++o) db[o] += gm.row(static_cast<long>(o)).sum();
        }
        if (input.requires_grad()) {
          const RowMat<T> wm = CMapMat<T>(kernel.value().data().data(), static_cast<long>(out_c), rows);
          const RowMat<T> dcol = wm.transpose() * gm;
          auto dx = tape.grad_buffer(input);
          if (pointwise)
            MapMat<T>(dx.data(), rows, cols) += dcol;
          else
            col2im_add(dcol.data(), g, dx.data());
        }
      },
      "conv2d");
}

template <typename T>
Var<T> relu(Var<T> x) {
  const auto& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = xv[i] > T{0} ? xv[i] : T{0};
  return x.tape().record(
      std::move(out), {x},
      [x](Tape<T>& tape, std::span<const T> g, const Tensor<T>&) {
        const auto& xv = x.value();
        auto dx = tape.grad_buffer(x);
        for (std::size_t i = 0; i < dx.size(); ++i) {
          if (xv[i] > T{0}) dx[i] += g[i];
        }
      },
      "relu");
}

template <typename T>
Var<T> softmax_channels(Var<T> logits) {
  const auto& z = logits.value();
  if (z.rank() != 3) throw ShapeError("softmax_channels: expected C x H x W, got " + shape_str(z.shape()));
  const std::size_t c_n = z.dim(0);
  if (c_n < 2) throw ShapeError("softmax_channels: need at least 2 channels");
  const std::size_t hw = z.dim(1) * z.dim(2);
  Tensor<T> out(z.shape());
  for (std::size_t p = 0; p < hw; ++p) {
    T mx = z[p];
    for (std::size_t c = 1; c < c_n; ++c) mx = std::max(mx, z[c * hw + p]);
    T total{0};
    for (std::size_t c = 0; c < c_n; ++c) {
      const T e = std::exp(z[c * hw + p] - mx);
      out[c * hw + p] = e;
      total += e;
    }
    for (std::size_t c = 0; c < c_n; ++c) out[c * hw + p] /= total;
  }
  return logits.tape().record(
      std::move(out), {logits},
      [logits, c_n, hw](Tape<T>& tape, std::span<const T> g, const Tensor<T>& p) {
        auto dz = tape.grad_buffer(logits);
        for (std::size_t px = 0; px < hw; ++px) {
          T dot{0};
          for (std::size_t c = 0; c < c_n; ++c) dot += g[c * hw + px] * p[c * hw + px];
          for (std::size_t c = 0; c < c_n; ++c) dz[c * hw + px] += p[c * hw + px] * (g[c * hw + px] - dot);
        }
      },
      "softmax_channels");
}

template <typename T>
Var<T> upsample_bilinear(Var<T> x, int factor) {
  if (factor != 2 && factor != 4) {
    throw ConfigError("upsample_bilinear: factor must be 2 or 4, got " + std::to_string(factor));
  }
  const auto& xv = x.value();
  if (xv.rank() != 3) throw ShapeError("upsample_bilinear: expected C x H x W, got " + shape_str(xv.shape()));
  const std::size_t c_n = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  const std::size_t oh = h * factor, ow = w * factor;
  auto ty = bilinear_taps(h, factor);
  auto tx = bilinear_taps(w, factor);

  Tensor<T> out(Shape{c_n, oh, ow});
  for (std::size_t c = 0; c < c_n; ++c) {
    const T* src = xv.data().data() + c * h * w;
    T* dst = out.data().data() + c * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const auto& a = ty[oy];
      const T wy = static_cast<T>(a.w_hi);
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const auto& b = tx[ox];
        const T wx = static_cast<T>(b.w_hi);
        const T top = src[a.lo * w + b.lo] * (T{1} - wx) + src[a.lo * w + b.hi] * wx;
        const T bot = src[a.hi * w + b.lo] * (T{1} - wx) + src[a.hi * w + b.hi] * wx;
        dst[oy * ow + ox] = top * (T{1} - wy) + bot * wy;
      }
    }
  }
  return x.tape().record(
      std::move(out), {x},
      [x, ty, tx, c_n, h, w, oh, ow](Tape<T>& tape, std::span<const T> g, const Tensor<T>&) {
        auto dx = tape.grad_buffer(x);
        for (std::size_t c = 0; c < c_n; ++c) {
          const T* go = g.data() + c * oh * ow;
          T* dst = dx.data() + c * h * w;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const auto& a = ty[oy];
            const T wy = static_cast<T>(a.w_hi);
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const auto& b = tx[ox];
              const T wx = static_cast<T>(b.w_hi);
              const T v = go[oy * ow + ox];
              dst[a.lo * w + b.lo] += v * (T{1} - wy) * (T{1} - wx);
              dst[a.lo * w + b.hi] += v * (T{1} - wy) * wx;
              dst[a.hi * w + b.lo] += v * wy * (T{1} - wx);
              dst[a.hi * w + b.hi] += v * wy * wx;
            }
          }
        }
      },
      "upsample_bilinear");
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
  return a.tape().record(
      std::move(out), {a, b},
      [a, b](Tape<T>& tape, std::span<const T> g, const Tensor<T>&) {
        for (const auto& v : {a, b}) {
          if (!v.requires_grad()) continue;
          auto d = tape.grad_buffer(v);
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
        }
      },
      "add");
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
  return a.tape().record(
      std::move(out), {a, b},
      [a, b](Tape<T>& tape, std::span<const T> g, const Tensor<T>&) {
        if (a.requires_grad()) {
          auto d = tape.grad_buffer(a);
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
        }
        if (b.requires_grad()) {
          auto d = tape.grad_buffer(b);
          for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g[i];
        }
      },
      "sub");
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
  return a.tape().record(
      std::move(out), {a, b},
      [a, b](Tape<T>& tape, std::span<const T> g, const Tensor<T>&) {
        if (a.requires_grad()) {
          auto d = tape.grad_buffer(a);
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * b.value()[i];
        }
        if (b.requires_grad()) {
          auto d = tape.grad_buffer(b);
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * a.value()[i];
        }
      },
      "mul");
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x.value()[i] * factor;
  return x.tape().record(
      std::move(out), {x},
      [x, factor](Tape<T>& tape, std::span<const T> g, const Tensor<T>&) {
        auto d = tape.grad_buffer(x);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * factor;
      },
      "scale");
}

template <typename T>
Var<T> sum(Var<T> x) {
  T total{0};
  for (auto v : x.value().data()) total += v;
  return x.tape().record(
      Tensor<T>::scalar(total), {x},
      [x](Tape<T>& tape, std::span<const T> g, const Tensor<T>&) {
        auto d = tape.grad_buffer(x);
        for (auto& v : d) v += g[0];
      },
      "sum");
}

template <typename T>
Var<T> mean(Var<T> x) {
  return scale(sum(x), T{1} / static_cast<T>(x.value().numel()));
}

#define CISS_INSTANTIATE_OPS(T)                                 \
  template Var<T> conv2d(Var<T>, Var<T>, Var<T>, int, int);     \
  template Var<T> relu(Var<T>);                                 \
  template Var<T> softmax_channels(Var<T>);                     \
  template Var<T> upsample_bilinear(Var<T>, int);               \
  template Var<T> add(Var<T>, Var<T>);                          \
  template Var<T> sub(Var<T>, Var<T>);                          \
  template Var<T> mul(Var<T>, Var<T>);                          \
  template Var<T> scale(Var<T>, T);                             \
  template Var<T> sum(Var<T>);                                  \
  template Var<T> mean(Var<T>);

CISS_INSTANTIATE_OPS(float)
CISS_INSTANTIATE_OPS(double)

}  // namespace ciss
