#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "ciss/uda.hpp"

namespace ciss {

void TrainConfig::validate() const {
  loss.validate();
  optim.validate();
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0, 1)");
  if (!(ema_alpha >= 0.0 && ema_alpha <= 1.0)) throw ConfigError("ema_alpha must lie in [0, 1]");
  if (!(dacs_prob >= 0.0 && dacs_prob <= 1.0)) throw ConfigError("dacs_prob must lie in [0, 1]");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) throw ConfigError("warmup_fraction must lie in [0, 1]");
  if (!(lr_power >= 0.0 && lr_power <= 10.0)) throw ConfigError("lr_power must lie in [0, 10]");
}

std::uint64_t stream_seed(std::uint64_t master, Stream s, std::uint64_t index) {
  return derive_seed(master, static_cast<std::uint64_t>(s), index);
}

template <typename T>
TrainState<T> init_train_state(std::uint64_t master_seed) {
  TrainState<T> s;
  s.student = init_params<T>(stream_seed(master_seed, Stream::init, 0));
  s.teacher = s.student;
  s.optimizer = AdamState<T>::zeros_like(s.student);
  return s;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<unsigned long long>(r.iter), r.loss_total, r.loss_ce_src, r.loss_ce_tgt, r.loss_inv_src,
                  r.loss_inv_tgt, r.q_weight, r.lr);
    out += buf;
  }
  return out;
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw DataError("metrics CSV: unexpected header");
  std::vector<MetricsRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 8) throw DataError("metrics CSV line " + std::to_string(lineno) + ": expected 8 fields");
    try {
      MetricsRow r;
      r.iter = std::stoull(f[0]);
      r.loss_total = std::stod(f[1]);
      r.loss_ce_src = std::stod(f[2]);
      r.loss_ce_tgt = std::stod(f[3]);
      r.loss_inv_src = std::stod(f[4]);
      r.loss_inv_tgt = std::stod(f[5]);
      r.q_weight = std::stod(f[6]);
      r.lr = std::stod(f[7]);
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw DataError("metrics CSV line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return rows;
}

template <typename T>
TrainBatch make_batch(const Image& source, const LabelMap& source_labels, const Image& target,
                      const SegNetParams<T>& teacher, const TrainConfig& cfg, std::uint64_t jitter_seed,
                      std::optional<std::uint64_t> mix_seed) {
  TrainBatch b;
  b.source = source;
  b.source_labels = source_labels;
  b.target = target;
  b.source_to_target = stylize(source, target, cfg.loss.style, jitter_seed);
  b.target_to_source = stylize(target, source, cfg.loss.style, mix64(jitter_seed));
  auto pl = pseudolabel(teacher, target, cfg.tau);
  b.target_pseudo = std::move(pl.labels);
  b.confidence = pl.confidence;
  if (mix_seed) {
    auto [img, lab] = dacs_mix(source, source_labels, target, b.target_pseudo, *mix_seed);
    b.mixed_target = std::move(img);
    b.mixed_labels = std::move(lab);
  }
  return b;
}

template <typename T>
MetricsRow train_step(TrainState<T>& state, const Dataset& data, const TrainConfig& cfg) {
  const std::size_t n_src = data.size(Split::source_train), n_tgt = data.size(Split::target_train);
  if (n_src == 0 || n_tgt == 0) throw DataError("training needs non-empty source_train and target_train splits");
  const std::uint64_t iter = state.iteration;
  const std::size_t B = cfg.batch_size;

  Tape<T> tape;
  const auto net = bind(tape, state.student, true);
  Var<T> total;
  LossTerms acc;
  double q_acc = 0.0;

  for (std::size_t b = 0; b < B; ++b) {
    const std::uint64_t sample = iter * B + b;
    std::mt19937_64 data_rng(stream_seed(cfg.master_seed, Stream::data, sample));
    const std::size_t is = static_cast<std::size_t>(data_rng() % n_src);
    const std::size_t it = static_cast<std::size_t>(data_rng() % n_tgt);
    std::mt19937_64 dacs_rng(stream_seed(cfg.master_seed, Stream::dacs, sample));
    const bool mix = std::uniform_real_distribution<double>(0.0, 1.0)(dacs_rng) < cfg.dacs_prob;
    const std::uint64_t mix_seed = dacs_rng();

    const auto batch = make_batch(data.image(Split::source_train, is), data.labels(Split::source_train, is),
                                  data.image(Split::target_train, it), state.teacher, cfg,
                                  stream_seed(cfg.master_seed, Stream::jitter, sample),
                                  mix ? std::optional<std::uint64_t>(mix_seed) : std::nullopt);
    const auto res = compose_loss(cfg.loss, batch, net);
    total = b == 0 ? res.total : add(total, res.total);
    acc.ce_src += res.terms.ce_src;
    acc.ce_tgt += res.terms.ce_tgt;
    acc.inv_src += res.terms.inv_src;
    acc.inv_tgt += res.terms.inv_tgt;
    q_acc += batch.confidence;
  }
  if (B > 1) total = scale(total, static_cast<T>(1.0 / static_cast<double>(B)));

  const double inv_b = 1.0 / static_cast<double>(B);
  MetricsRow row;
  row.iter = iter + 1;
  row.loss_total = static_cast<double>(total.value().item());
  row.loss_ce_src = acc.ce_src * inv_b;
  row.loss_ce_tgt = acc.ce_tgt * inv_b;
  row.loss_inv_src = acc.inv_src * inv_b;
  row.loss_inv_tgt = acc.inv_tgt * inv_b;
  row.q_weight = q_acc * inv_b;
  const std::pair<const char*, double> terms[] = {{"loss_total", row.loss_total},     {"loss_ce_src", row.loss_ce_src},
                                                  {"loss_ce_tgt", row.loss_ce_tgt},   {"loss_inv_src", row.loss_inv_src},
                                                  {"loss_inv_tgt", row.loss_inv_tgt}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) throw NumericalError(std::string("non-finite ") + name + " at iteration " + std::to_string(iter + 1));
  }

  tape.backward(total);
  std::array<Tensor<T>, kParamTensors> grads;
  for (std::size_t i = 0; i < kParamTensors; ++i) grads[i] = tape.grad(net.p[i]);

  const auto warmup = static_cast<std::size_t>(std::llround(cfg.warmup_fraction * static_cast<double>(cfg.iterations)));
  const double lr_scale = warmup_scale(iter, warmup) * poly_scale(iter, cfg.iterations, cfg.lr_power);
  row.lr = cfg.optim.lr_encoder * lr_scale;
  adamw_step(state.student, state.optimizer, grads, cfg.optim, lr_scale);

  // Short-horizon ramp: the teacher tracks the student closely early on.
  const double alpha = std::min(1.0 - 1.0 / static_cast<double>(iter + 1), cfg.ema_alpha);
  ema_update(state.teacher, state.student, alpha);
  ++state.iteration;
  return row;
}

namespace {

constexpr const char* kCounterRecord = "state.counters";

}  // namespace

std::vector<CheckpointRecord> checkpoint_records(const TrainState<float>& state) {
  constexpr std::uint64_t kExact = std::uint64_t{1} << 24;
  if (state.iteration > kExact || state.optimizer.step > kExact) {
    throw DataError("iteration counter too large for the checkpoint format");
  }
  std::vector<CheckpointRecord> out;
  append_records(out, "student.", state.student);
  append_records(out, "teacher.", state.teacher);
  SegNetParams<float> m, v;
  m.tensors = state.optimizer.m;
  v.tensors = state.optimizer.v;
  append_records(out, "adam_m.", m);
  append_records(out, "adam_v.", v);
  out.push_back({kCounterRecord, Shape{2},
                 {static_cast<float>(state.iteration), static_cast<float>(state.optimizer.step)}});
  return out;
}

TrainState<float> train_state_from_records(const std::vector<CheckpointRecord>& records) {
  TrainState<float> s;
  s.student = params_from_records<float>(records, "student.");
  s.teacher = params_from_records<float>(records, "teacher.");
  s.optimizer.m = params_from_records<float>(records, "adam_m.").tensors;
  s.optimizer.v = params_from_records<float>(records, "adam_v.").tensors;
  auto it = std::find_if(records.begin(), records.end(), [](const auto& r) { return r.name == kCounterRecord; });
  if (it == records.end() || it->data.size() != 2) throw DataError("checkpoint has no training counters");
  s.iteration = static_cast<std::uint64_t>(it->data[0]);
  s.optimizer.step = static_cast<std::uint64_t>(it->data[1]);
  return s;
}

#define CISS_INSTANTIATE_TRAINER(T)                                                                             \
  template TrainState<T> init_train_state<T>(std::uint64_t);                                                    \
  template TrainBatch make_batch(const Image&, const LabelMap&, const Image&, const SegNetParams<T>&,           \
                                 const TrainConfig&, std::uint64_t, std::optional<std::uint64_t>);             \
  template MetricsRow train_step(TrainState<T>&, const Dataset&, const TrainConfig&);

CISS_INSTANTIATE_TRAINER(float)
CISS_INSTANTIATE_TRAINER(double)

}  // namespace ciss
