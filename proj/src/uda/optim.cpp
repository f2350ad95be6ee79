#include <algorithm>
#include <cmath>

#include "ciss/uda.hpp"

namespace ciss {

void AdamWConfig::validate() const {
  if (!(lr_encoder >= 0.0) || !(lr_decoder >= 0.0)) throw ConfigError("learning rates must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("Adam eps must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
}

double poly_scale(std::uint64_t iter, std::size_t iterations, double power) {
  if (power == 0.0 || iterations == 0) return 1.0;
  const double left = 1.0 - static_cast<double>(std::min<std::uint64_t>(iter, iterations)) / static_cast<double>(iterations);
  return std::pow(left, power);
}

template <typename T>
AdamState<T> AdamState<T>::zeros_like(const SegNetParams<T>& params) {
  AdamState s;
  for (std::size_t i = 0; i < kParamTensors; ++i) {
    s.m[i] = Tensor<T>(params.tensors[i].shape(), T{0});
    s.v[i] = Tensor<T>(params.tensors[i].shape(), T{0});
  }
  return s;
}

double warmup_scale(std::uint64_t iter, std::size_t warmup_iters) {
  if (warmup_iters == 0 || iter >= warmup_iters) return 1.0;
  return static_cast<double>(iter + 1) / static_cast<double>(warmup_iters);
}

template <typename T>
void adamw_step(SegNetParams<T>& params, AdamState<T>& state, const std::array<Tensor<T>, kParamTensors>& grads,
                const AdamWConfig& cfg, double lr_scale) {
  for (std::size_t i = 0; i < kParamTensors; ++i) {
    if (grads[i].shape() != params.tensors[i].shape() || state.m[i].shape() != params.tensors[i].shape() ||
        state.v[i].shape() != params.tensors[i].shape()) {
      throw ShapeError(std::string("adamw: shape mismatch for ") + kParamNames[i]);
    }
    const auto g = grads[i].data();
    const auto bad = std::find_if(g.begin(), g.end(), [](T v) { return !std::isfinite(v); });
    if (bad != g.end()) {
      throw NumericalError(std::string("non-finite gradient in ") + kParamNames[i] + " at element " +
                           std::to_string(bad - g.begin()) + " (optimizer step " + std::to_string(state.step + 1) + ")");
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T eps = static_cast<T>(cfg.eps);

  for (std::size_t i = 0; i < kParamTensors; ++i) {
    const double lr_d = (SegNetParams<T>::is_encoder(i) ? cfg.lr_encoder : cfg.lr_decoder) * lr_scale;
    const T lr = static_cast<T>(lr_d);
    const T decay = static_cast<T>(1.0 - lr_d * cfg.weight_decay);
    const T inv_c1 = static_cast<T>(1.0 / c1), inv_c2 = static_cast<T>(1.0 / c2);
    auto p = params.tensors[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    const auto g = grads[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1 * m[k] + (T{1} - b1) * g[k];
      v[k] = b2 * v[k] + (T{1} - b2) * g[k] * g[k];
      const T m_hat = m[k] * inv_c1;
      const T v_hat = v[k] * inv_c2;
      p[k] = p[k] * decay - lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

#define CISS_INSTANTIATE_OPTIM(T)                                                                         \
  template struct AdamState<T>;                                                                           \
  template void adamw_step(SegNetParams<T>&, AdamState<T>&, const std::array<Tensor<T>, kParamTensors>&, \
                           const AdamWConfig&, double);

CISS_INSTANTIATE_OPTIM(float)
CISS_INSTANTIATE_OPTIM(double)

}  // namespace ciss
