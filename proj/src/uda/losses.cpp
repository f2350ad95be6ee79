#include <cmath>

#include "ciss/uda.hpp"

namespace ciss {

std::string to_string(LossVariant v) {
  switch (v) {
    case LossVariant::basic: return "basic";
    case LossVariant::fda: return "fda";
    case LossVariant::ce_full: return "ce_full";
    case LossVariant::ciss: return "ciss";
  }
  return "?";
}

std::string to_string(InvariancePoint p) { return p == InvariancePoint::encoder ? "encoder" : "output"; }
std::string to_string(InvarianceNorm n) { return n == InvarianceNorm::frobenius_sq ? "frobenius_sq" : "l1"; }

LossVariant parse_loss_variant(const std::string& s) {
  if (s == "basic") return LossVariant::basic;
  if (s == "fda") return LossVariant::fda;
  if (s == "ce_full") return LossVariant::ce_full;
  if (s == "ciss") return LossVariant::ciss;
  throw ConfigError("unknown loss variant '" + s + "' (basic, fda, ce_full, ciss)");
}

InvariancePoint parse_invariance_point(const std::string& s) {
  if (s == "encoder") return InvariancePoint::encoder;
  if (s == "output") return InvariancePoint::output;
  throw ConfigError("unknown invariance point '" + s + "' (encoder, output)");
}

InvarianceNorm parse_invariance_norm(const std::string& s) {
  if (s == "frobenius_sq") return InvarianceNorm::frobenius_sq;
  if (s == "l1") return InvarianceNorm::l1;
  throw ConfigError("unknown invariance norm '" + s + "' (frobenius_sq, l1)");
}

void LossConfig::validate() const {
  if (!(lambda_s >= 0.0) || !std::isfinite(lambda_s)) throw ConfigError("lambda_s must be a finite value >= 0");
  if (!(lambda_t >= 0.0) || !std::isfinite(lambda_t)) throw ConfigError("lambda_t must be a finite value >= 0");
  style.validate();
}

template <typename T>
Var<T> cross_entropy(Var<T> probs, const LabelMap& labels, T pixel_weight) {
  const auto& s = probs.shape();
  if (s.size() != 3 || s[1] != labels.height || s[2] != labels.width) {
    throw ShapeError("cross_entropy: prediction " + shape_str(s) + " vs labels " + std::to_string(labels.height) + "x" +
                     std::to_string(labels.width));
  }
  const std::size_t c_n = s[0], hw = s[1] * s[2];
  const auto p = probs.value().data();
  constexpr T kFloor = static_cast<T>(1e-12);

  std::size_t count = 0;
  T acc{0};
  for (std::size_t i = 0; i < hw; ++i) {
    const auto y = labels.data[i];
    if (y == LabelMap::kIgnore) continue;
    if (y >= c_n) throw DataError("label " + std::to_string(y) + " outside [0, " + std::to_string(c_n) + ")");
    acc -= std::log(std::max(p[y * hw + i], kFloor));
    ++count;
  }
  const T value = count == 0 ? T{0} : pixel_weight * acc / static_cast<T>(count);

  return probs.tape().record(
      Tensor<T>::scalar(value), {probs},
      [probs, labels, pixel_weight, count, hw](Tape<T>& tape, std::span<const T> g, const Tensor<T>&) {
        if (count == 0) return;
        auto gp = tape.grad_buffer(probs);
        const auto pv = probs.value().data();
        const T coef = g[0] * pixel_weight / static_cast<T>(count);
        for (std::size_t i = 0; i < hw; ++i) {
          const auto y = labels.data[i];
          if (y == LabelMap::kIgnore) continue;
          const T pi = pv[y * hw + i];
          if (pi > kFloor) gp[y * hw + i] -= coef / pi;
        }
      },
      "cross_entropy");
}

template <typename T>
Var<T> feature_invariance(Var<T> a, Var<T> b, InvarianceNorm norm) {
  if (a.shape() != b.shape()) {
    throw ShapeError("feature_invariance: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const auto av = a.value().data();
  const auto bv = b.value().data();
  const std::size_t n = av.size();
  T acc{0};
  for (std::size_t i = 0; i < n; ++i) {
    const T d = av[i] - bv[i];
    acc += norm == InvarianceNorm::frobenius_sq ? d * d : std::abs(d);
  }
  return a.tape().record(
      Tensor<T>::scalar(acc / static_cast<T>(n)), {a, b},
      [a, b, norm, n](Tape<T>& tape, std::span<const T> g, const Tensor<T>&) {
        const auto av = a.value().data();
        const auto bv = b.value().data();
        std::vector<T> d(n);
        const T coef = g[0] / static_cast<T>(n);
        for (std::size_t i = 0; i < n; ++i) {
          const T diff = av[i] - bv[i];
          if (norm == InvarianceNorm::frobenius_sq) {
            d[i] = T{2} * coef * diff;
          } else {
            d[i] = diff > T{0} ? coef : (diff < T{0} ? -coef : T{0});
          }
        }
        if (a.requires_grad()) {
          auto ga = tape.grad_buffer(a);
          for (std::size_t i = 0; i < n; ++i) ga[i] += d[i];
        }
        if (b.requires_grad()) {
          auto gb = tape.grad_buffer(b);
          for (std::size_t i = 0; i < n; ++i) gb[i] -= d[i];
        }
      },
      "feature_invariance");
}

namespace {

template <typename T>
struct View {
  Var<T> features;
  Var<T> probs;
};

}  // namespace

template <typename T>
LossResult<T> compose_loss(const LossConfig& cfg, const TrainBatch& batch, const SegNetVars<T>& net) {
  Tape<T>& tape = net.p[0].tape();
  const T q = static_cast<T>(batch.confidence);

  auto view = [&](const Image& image) {
    View<T> v;
    v.features = encode(net, tape.constant(to_tensor<T>(image)));
    v.probs = softmax_channels(decode(net, v.features));
    return v;
  };
  auto need = [&](const std::optional<Image>& img, const char* what) -> const Image& {
    if (!img) throw DataError(std::string("loss variant '") + to_string(cfg.variant) + "' needs the " + what + " view");
    return *img;
  };
  auto invariance = [&](const View<T>& x, const View<T>& y) {
    return cfg.invariance_point == InvariancePoint::encoder
               ? feature_invariance(x.features, y.features, cfg.invariance_norm)
               : feature_invariance(x.probs, y.probs, cfg.invariance_norm);
  };

  LossResult<T> out;
  Var<T> ce_src, ce_tgt;
  std::optional<Var<T>> inv_src, inv_tgt;

  switch (cfg.variant) {
    case LossVariant::basic: {
      ce_src = cross_entropy(view(batch.source).probs, batch.source_labels, T{1});
      ce_tgt = cross_entropy(view(batch.target_ce_image()).probs, batch.target_ce_labels(), q);
      break;
    }
    case LossVariant::fda: {
      ce_src = cross_entropy(view(need(batch.source_to_target, "source-to-target")).probs, batch.source_labels, T{1});
      ce_tgt = cross_entropy(view(batch.target_ce_image()).probs, batch.target_ce_labels(), q);
      break;
    }
    case LossVariant::ce_full: {
      const auto& s2t = need(batch.source_to_target, "source-to-target");
      const auto& t2s = need(batch.target_to_source, "target-to-source");
      ce_src = add(cross_entropy(view(s2t).probs, batch.source_labels, T{1}),
                   cross_entropy(view(batch.source).probs, batch.source_labels, T{1}));
      ce_tgt = add(cross_entropy(view(batch.target_ce_image()).probs, batch.target_ce_labels(), q),
                   cross_entropy(view(t2s).probs, batch.target_pseudo, q));
      break;
    }
    case LossVariant::ciss: {
      const auto src = view(batch.source);
      const auto tgt_ce = view(batch.target_ce_image());
      ce_src = cross_entropy(src.probs, batch.source_labels, T{1});
      ce_tgt = cross_entropy(tgt_ce.probs, batch.target_ce_labels(), q);
      if (cfg.lambda_s > 0.0) {
        inv_src = invariance(src, view(need(batch.source_to_target, "source-to-target")));
      }
      if (cfg.lambda_t > 0.0) {
        // The pair is always the unmixed target and its stylized view.
        const auto tgt = batch.mixed_target ? view(batch.target) : tgt_ce;
        inv_tgt = invariance(tgt, view(need(batch.target_to_source, "target-to-source")));
      }
      break;
    }
  }

  out.total = add(ce_src, ce_tgt);
  if (inv_src) out.total = add(out.total, scale(*inv_src, static_cast<T>(cfg.lambda_s)));
  if (inv_tgt) out.total = add(out.total, scale(*inv_tgt, static_cast<T>(cfg.lambda_t)));

  out.terms.total = static_cast<double>(out.total.value().item());
  out.terms.ce_src = static_cast<double>(ce_src.value().item());
  out.terms.ce_tgt = static_cast<double>(ce_tgt.value().item());
  if (inv_src) out.terms.inv_src = static_cast<double>(inv_src->value().item());
  if (inv_tgt) out.terms.inv_tgt = static_cast<double>(inv_tgt->value().item());
  return out;
}

template <typename T>
LossTerms compose_loss(const LossConfig& cfg, const TrainBatch& batch, const SegNetParams<T>& params) {
  Tape<T> tape;
  const auto net = bind(tape, params, false);
  return compose_loss(cfg, batch, net).terms;
}

#define CISS_INSTANTIATE_LOSSES(T)                                                           \
  template Var<T> cross_entropy(Var<T>, const LabelMap&, T);                                 \
  template Var<T> feature_invariance(Var<T>, Var<T>, InvarianceNorm);                        \
  template LossResult<T> compose_loss(const LossConfig&, const TrainBatch&, const SegNetVars<T>&); \
  template LossTerms compose_loss(const LossConfig&, const TrainBatch&, const SegNetParams<T>&);

CISS_INSTANTIATE_LOSSES(float)
CISS_INSTANTIATE_LOSSES(double)

}  // namespace ciss
