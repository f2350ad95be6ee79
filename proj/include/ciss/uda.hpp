#pragma once

// Loss formulations, pseudolabel self-training, class mixing, EMA teacher,
// AdamW and the training loop.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ciss/image.hpp"
#include "ciss/segnet.hpp"
#include "ciss/stylize.hpp"
#include "ciss/synthscenes.hpp"
#include "ciss/tensor.hpp"

namespace ciss {

enum class LossVariant { basic, fda, ce_full, ciss };
enum class InvariancePoint { encoder, output };
enum class InvarianceNorm { frobenius_sq, l1 };

std::string to_string(LossVariant v);
std::string to_string(InvariancePoint p);
std::string to_string(InvarianceNorm n);
LossVariant parse_loss_variant(const std::string& s);
InvariancePoint parse_invariance_point(const std::string& s);
InvarianceNorm parse_invariance_norm(const std::string& s);

struct LossConfig {
  LossVariant variant = LossVariant::ciss;
  double lambda_s = 1.0;
  double lambda_t = 1.0;
  InvariancePoint invariance_point = InvariancePoint::encoder;
  InvarianceNorm invariance_norm = InvarianceNorm::frobenius_sq;
  StyleConfig style;

  void validate() const;
};

/// Mean of -log p_true over non-ignored pixels, times `pixel_weight`.
/// Probabilities are floored at 1e-12 before the log. All-ignored maps give 0.
template <typename T>
Var<T> cross_entropy(Var<T> probs, const LabelMap& labels, T pixel_weight);

/// frobenius_sq: mean squared difference; l1: mean absolute difference.
template <typename T>
Var<T> feature_invariance(Var<T> a, Var<T> b, InvarianceNorm norm);

/// One training sample with its stylized views, pseudolabels and optional
/// class-mixed target.
struct TrainBatch {
  Image source;
  LabelMap source_labels;
  Image target;
  std::optional<Image> source_to_target;
  std::optional<Image> target_to_source;
  LabelMap target_pseudo;
  double confidence = 1.0;
  std::optional<Image> mixed_target;
  std::optional<LabelMap> mixed_labels;

  /// Image and labels used by the target cross-entropy term.
  const Image& target_ce_image() const { return mixed_target ? *mixed_target : target; }
  const LabelMap& target_ce_labels() const { return mixed_labels ? *mixed_labels : target_pseudo; }
};

struct LossTerms {
  double total = 0.0;
  double ce_src = 0.0;
  double ce_tgt = 0.0;
  double inv_src = 0.0;  // unweighted
  double inv_tgt = 0.0;  // unweighted
};

template <typename T>
struct LossResult {
  Var<T> total;
  LossTerms terms;
};

/// Builds the configured objective on the tape holding `net`.
///   basic   CE(s) + q CE(t)
///   fda     CE(s->t) + q CE(t)
///   ce_full CE(s->t) + CE(s) + q CE(t) + q CE(t->s)
///   ciss    CE(s) + q CE(t) + lambda_s Inv(s, s->t) + lambda_t Inv(t, t->s)
/// Invariance terms with a zero weight are not evaluated.
template <typename T>
LossResult<T> compose_loss(const LossConfig& cfg, const TrainBatch& batch, const SegNetVars<T>& net);

/// Value-only convenience wrapper.
template <typename T>
LossTerms compose_loss(const LossConfig& cfg, const TrainBatch& batch, const SegNetParams<T>& params);

struct PseudoLabels {
  LabelMap labels;
  double confidence = 0.0;  // fraction of pixels with max probability >= tau
};

/// Teacher argmax labels (ties to the lowest id) and confidence weight.
/// Never allocates gradient buffers.
template <typename T>
PseudoLabels pseudolabel(const SegNetParams<T>& teacher, const Image& target, double tau);

/// Same, from precomputed class probabilities C x H x W.
template <typename T>
PseudoLabels pseudolabel_from_probs(const Tensor<T>& probs, double tau);

/// 1 where the source pixel's class is among ceil(K/2) classes drawn from the
/// K classes present in `source_labels`.
std::vector<std::uint8_t> classmix_mask(const LabelMap& source_labels, std::uint64_t seed);

/// mask ? source : target, for both image and labels.
std::pair<Image, LabelMap> apply_mix(const Image& src, const LabelMap& src_labels, const Image& tgt,
                                     const LabelMap& tgt_labels, const std::vector<std::uint8_t>& mask);

std::pair<Image, LabelMap> dacs_mix(const Image& src, const LabelMap& src_labels, const Image& tgt,
                                    const LabelMap& tgt_labels, std::uint64_t seed);

/// teacher <- alpha teacher + (1 - alpha) student.
template <typename T>
void ema_update(SegNetParams<T>& teacher, const SegNetParams<T>& student, double alpha);

struct AdamWConfig {
  double lr_encoder = 1e-3;
  double lr_decoder = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  void validate() const;
};

template <typename T>
struct AdamState {
  std::array<Tensor<T>, kParamTensors> m;
  std::array<Tensor<T>, kParamTensors> v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const SegNetParams<T>& params);
};

/// Linear warm-up multiplier for zero-based iteration `iter`.
double warmup_scale(std::uint64_t iter, std::size_t warmup_iters);

/// Polynomial decay (1 - iter/iterations)^power; power 0 keeps the rate constant.
double poly_scale(std::uint64_t iter, std::size_t iterations, double power);

/// Decoupled-weight-decay Adam with bias correction and separate encoder and
/// decoder rates; `lr_scale` carries the warm-up. Throws NumericalError on
/// non-finite gradients.
template <typename T>
void adamw_step(SegNetParams<T>& params, AdamState<T>& state, const std::array<Tensor<T>, kParamTensors>& grads,
                const AdamWConfig& cfg, double lr_scale = 1.0);

// ---------------------------------------------------------------------------

struct TrainConfig {
  LossConfig loss;
  AdamWConfig optim;
  std::size_t iterations = 2000;
  std::size_t batch_size = 1;
  double tau = 0.968;
  double ema_alpha = 0.999;
  double dacs_prob = 0.5;
  double warmup_fraction = 0.1;
  double lr_power = 1.0;  // polynomial decay exponent over the run
  std::uint64_t master_seed = 0;

  void validate() const;
};

/// Named random sub-streams derived from the master seed.
enum class Stream : std::uint64_t { data = 11, init = 12, dacs = 13, jitter = 14 };
std::uint64_t stream_seed(std::uint64_t master, Stream s, std::uint64_t index);

template <typename T>
struct TrainState {
  SegNetParams<T> student;
  SegNetParams<T> teacher;
  AdamState<T> optimizer;
  std::uint64_t iteration = 0;  // all per-step randomness derives from (master_seed, iteration)
};

template <typename T>
TrainState<T> init_train_state(std::uint64_t master_seed);

struct MetricsRow {
  std::uint64_t iter = 0;
  double loss_total = 0.0;
  double loss_ce_src = 0.0;
  double loss_ce_tgt = 0.0;
  double loss_inv_src = 0.0;
  double loss_inv_tgt = 0.0;
  double q_weight = 0.0;
  double lr = 0.0;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

inline constexpr const char* kMetricsHeader = "iter,loss_total,loss_ce_src,loss_ce_tgt,loss_inv_src,loss_inv_tgt,q_weight,lr";

std::string metrics_csv(const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> parse_metrics_csv(const std::string& text);

/// Assembles the batch for one sample: stylized views, teacher pseudolabels
/// and, when `mix` is set, the class-mixed target.
template <typename T>
TrainBatch make_batch(const Image& source, const LabelMap& source_labels, const Image& target,
                      const SegNetParams<T>& teacher, const TrainConfig& cfg, std::uint64_t jitter_seed,
                      std::optional<std::uint64_t> mix_seed);

/// One optimization step. Reads only source labels from `data`.
template <typename T>
MetricsRow train_step(TrainState<T>& state, const Dataset& data, const TrainConfig& cfg);

std::vector<CheckpointRecord> checkpoint_records(const TrainState<float>& state);
TrainState<float> train_state_from_records(const std::vector<CheckpointRecord>& records);

}  // namespace ciss
