#include <cmath>
#include <random>
#include <set>

#include "ciss/uda.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace ciss;

namespace {

TrainBatch sample_batch(std::uint64_t seed, std::size_t n = 64) {
  const auto s = gen_scene(seed, Domain::source);
  const auto t = gen_scene(seed + 1000, Domain::target);
  TrainBatch b;
  b.source = s.image;
  b.source_labels = s.labels;
  b.target = t.image;
  StyleConfig sc;
  b.source_to_target = fda_stylize(s.image, t.image, sc.beta);
  b.target_to_source = fda_stylize(t.image, s.image, sc.beta);
  b.target_pseudo = t.labels;  // any valid map works for loss algebra
  b.confidence = 0.37;
  if (n != 64) {
    auto shrink = [n](const Image& img) {
      Image out(n, n);
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < n; ++y)
          for (std::size_t x = 0; x < n; ++x) out.at(c, y, x) = img.at(c, y + 20, x + 20);
      return out;
    };
    auto shrink_l = [n](const LabelMap& l) {
      LabelMap out(n, n);
      for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) out.at(y, x) = l.at(y + 20, x + 20);
      return out;
    };
    b.source = shrink(b.source);
    b.target = shrink(b.target);
    b.source_to_target = shrink(*b.source_to_target);
    b.target_to_source = shrink(*b.target_to_source);
    b.source_labels = shrink_l(b.source_labels);
    b.target_pseudo = shrink_l(b.target_pseudo);
  }
  return b;
}

// Straight-line recomputation of each objective from module primitives, one
// fresh evaluation per view.
double ce_of(const SegNetParams<double>& p, const Image& img, const LabelMap& y, double w) {
  Tape<double> t;
  auto net = bind(t, p, false);
  return cross_entropy(softmax_channels(forward(net, t.constant(to_tensor<double>(img)))), y, w).value().item();
}

double inv_of(const SegNetParams<double>& p, const Image& a, const Image& b, InvariancePoint point, InvarianceNorm norm) {
  Tape<double> t;
  auto net = bind(t, p, false);
  auto side = [&](const Image& img) {
    auto f = encode(net, t.constant(to_tensor<double>(img)));
    return point == InvariancePoint::encoder ? f : softmax_channels(decode(net, f));
  };
  return feature_invariance(side(a), side(b), norm).value().item();
}

double oracle_loss(const LossConfig& cfg, const TrainBatch& b, const SegNetParams<double>& p) {
  const double q = b.confidence;
  const auto& ti = b.target_ce_image();
  const auto& tl = b.target_ce_labels();
  switch (cfg.variant) {
    case LossVariant::basic: return ce_of(p, b.source, b.source_labels, 1) + ce_of(p, ti, tl, q);
    case LossVariant::fda: return ce_of(p, *b.source_to_target, b.source_labels, 1) + ce_of(p, ti, tl, q);
    case LossVariant::ce_full:
      return ce_of(p, *b.source_to_target, b.source_labels, 1) + ce_of(p, b.source, b.source_labels, 1) +
             ce_of(p, ti, tl, q) + ce_of(p, *b.target_to_source, b.target_pseudo, q);
    case LossVariant::ciss:
      return ce_of(p, b.source, b.source_labels, 1) + ce_of(p, ti, tl, q) +
             cfg.lambda_s * inv_of(p, b.source, *b.source_to_target, cfg.invariance_point, cfg.invariance_norm) +
             cfg.lambda_t * inv_of(p, b.target, *b.target_to_source, cfg.invariance_point, cfg.invariance_norm);
  }
  return 0.0;
}

Dataset tiny_dataset(std::size_t n_src = 4, std::size_t n_tgt = 4, std::size_t n_val = 2) {
  return Dataset::generate(build_splits(77, n_src, n_tgt, n_val));
}

}  // namespace

TEST_SUITE("uda") {
  TEST_CASE("cross-entropy of a uniform prediction is ln C") {
    Tape<double> t;
    auto p = t.leaf(Tensord({5, 4, 4}, 0.2));
    LabelMap y(4, 4);
    for (std::size_t i = 0; i < 16; ++i) y.data[i] = static_cast<std::uint8_t>(i % 5);
    CHECK(std::abs(cross_entropy(p, y, 1.0).value().item() - std::log(5.0)) < 1e-9);
  }

  TEST_CASE("cross-entropy of a correct one-hot prediction is near zero") {
    Tape<double> t;
    Tensord probs({3, 2, 2}, 0.0);
    LabelMap y(2, 2);
    for (std::size_t i = 0; i < 4; ++i) {
      y.data[i] = static_cast<std::uint8_t>(i % 3);
      probs[y.data[i] * 4 + i] = 1.0;
    }
    CHECK(cross_entropy(t.constant(probs), y, 1.0).value().item() < 1e-11);
  }

  TEST_CASE("cross-entropy over an all-ignored map is zero with zero gradient") {
    Tape<double> t;
    auto p = t.leaf(Tensord({2, 3, 3}, 0.5));
    auto loss = cross_entropy(p, LabelMap(3, 3, LabelMap::kIgnore), 1.0);
    CHECK(loss.value().item() == 0.0);
    t.backward(loss);
    CHECK(t.grad(p) == Tensord({2, 3, 3}, 0.0));
  }

  TEST_CASE("cross-entropy validates labels and weights pixels") {
    Tape<double> t;
    auto p = t.leaf(Tensord({2, 1, 2}, 0.5));
    CHECK_THROWS_AS(cross_entropy(p, LabelMap(1, 2, 3), 1.0), DataError);
    CHECK_THROWS_AS(cross_entropy(p, LabelMap(2, 2, 0), 1.0), ShapeError);
    CHECK(cross_entropy(p, LabelMap(1, 2, 1), 0.5).value().item() == doctest::Approx(0.5 * std::log(2.0)));
  }

  TEST_CASE("cross-entropy gradient matches finite differences") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t c = 2 + rng() % 4, h = 1 + rng() % 4, w = 1 + rng() % 4;
      LabelMap y(h, w);
      for (auto& v : y.data) v = rng() % 5 == 0 ? LabelMap::kIgnore : static_cast<std::uint8_t>(rng() % c);
      auto r = oracle::check_gradients({oracle::random_tensor({c, h, w}, rng, -2, 2)}, [&](Tape<double>&, const auto& v) {
        return cross_entropy(softmax_channels(v[0]), y, 0.8);
      });
      CHECK(r.max_rel_err < 1e-4);
    }
  }

  TEST_CASE("feature invariance values") {
    Tape<double> t;
    std::mt19937_64 rng(4);
    auto a = t.leaf(oracle::random_tensor({3, 4, 4}, rng));
    auto b = t.leaf(oracle::random_tensor({3, 4, 4}, rng));
    auto a2 = t.constant(Tensord({2, 2, 2}, 1.0));
    auto b2 = t.constant(Tensord({2, 2, 2}, 3.0));
    for (auto n : {InvarianceNorm::frobenius_sq, InvarianceNorm::l1}) {
      CHECK(feature_invariance(a, a, n).value().item() == 0.0);
      const double ab = feature_invariance(a, b, n).value().item();
      CHECK(ab == feature_invariance(b, a, n).value().item());
      CHECK(ab > 0.0);
    }
    CHECK(feature_invariance(a2, b2, InvarianceNorm::frobenius_sq).value().item() == 4.0);
    CHECK(feature_invariance(a2, b2, InvarianceNorm::l1).value().item() == 2.0);
    CHECK_THROWS_AS(feature_invariance(a, a2, InvarianceNorm::l1), ShapeError);
  }

  TEST_CASE("feature invariance gradients match finite differences") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      const Shape s{1 + rng() % 4, 1 + rng() % 5, 1 + rng() % 5};
      std::vector<Tensord> in = {oracle::random_tensor(s, rng), oracle::random_tensor(s, rng)};
      for (auto n : {InvarianceNorm::frobenius_sq, InvarianceNorm::l1}) {
        auto r = oracle::check_gradients(in, [&](Tape<double>&, const auto& v) { return feature_invariance(v[0], v[1], n); });
        CHECK(r.max_rel_err < 1e-4);
      }
    }
  }

  TEST_CASE("ciss with zero weights equals basic bit for bit") {
    const auto p = init_params<double>(3);
    const auto b = sample_batch(5);
    LossConfig basic, ciss;
    basic.variant = LossVariant::basic;
    ciss.variant = LossVariant::ciss;
    ciss.lambda_s = ciss.lambda_t = 0.0;
    const auto lb = compose_loss(basic, b, p), lc = compose_loss(ciss, b, p);
    CHECK(lb.total == lc.total);
    CHECK(lc.inv_src == 0.0);
    CHECK(lc.inv_tgt == 0.0);
  }

  TEST_CASE("identical views give exactly zero invariance") {
    const auto p = init_params<double>(3);
    auto b = sample_batch(6);
    b.source_to_target = b.source;
    b.target_to_source = b.target;
    for (auto point : {InvariancePoint::encoder, InvariancePoint::output}) {
      for (auto norm : {InvarianceNorm::frobenius_sq, InvarianceNorm::l1}) {
        LossConfig cfg;
        cfg.invariance_point = point;
        cfg.invariance_norm = norm;
        const auto r = compose_loss(cfg, b, p);
        CHECK(r.inv_src == 0.0);
        CHECK(r.inv_tgt == 0.0);
      }
    }
  }

  TEST_CASE("every variant matches a straight-line recomputation") {
    const auto p = init_params<double>(4);
    auto b = sample_batch(7);
    for (bool mixed : {false, true}) {
      if (mixed) {
        auto [img, lab] = dacs_mix(b.source, b.source_labels, b.target, b.target_pseudo, 9);
        b.mixed_target = img;
        b.mixed_labels = lab;
      }
      for (auto v : {LossVariant::basic, LossVariant::fda, LossVariant::ce_full, LossVariant::ciss}) {
        for (auto point : {InvariancePoint::encoder, InvariancePoint::output}) {
          for (auto norm : {InvarianceNorm::frobenius_sq, InvarianceNorm::l1}) {
            LossConfig cfg;
            cfg.variant = v;
            cfg.lambda_s = 2.5;
            cfg.lambda_t = 0.75;
            cfg.invariance_point = point;
            cfg.invariance_norm = norm;
            const double got = compose_loss(cfg, b, p).total;
            const double want = oracle_loss(cfg, b, p);
            INFO(to_string(v), " ", to_string(point), " ", to_string(norm), " mixed=", mixed);
            CHECK(std::abs(got - want) <= 1e-12 * std::abs(want));
          }
        }
      }
    }
  }

  TEST_CASE("variants needing stylized views reject batches without them") {
    const auto p = init_params<double>(4);
    auto b = sample_batch(8);
    b.source_to_target.reset();
    LossConfig cfg;
    cfg.variant = LossVariant::fda;
    CHECK_THROWS_AS(compose_loss(cfg, b, p), DataError);
    cfg.variant = LossVariant::basic;
    CHECK_NOTHROW(compose_loss(cfg, b, p));
  }

  TEST_CASE("target invariance ignores the class-mixing draw") {
    const auto p = init_params<double>(5);
    auto plain = sample_batch(9);
    auto mixed = plain;
    auto [img, lab] = dacs_mix(plain.source, plain.source_labels, plain.target, plain.target_pseudo, 3);
    mixed.mixed_target = img;
    mixed.mixed_labels = lab;
    LossConfig cfg;
    const auto a = compose_loss(cfg, plain, p), b = compose_loss(cfg, mixed, p);
    CHECK(a.inv_tgt == b.inv_tgt);
    CHECK(a.inv_src == b.inv_src);
    CHECK(a.ce_tgt != b.ce_tgt);
  }

  TEST_CASE("full objective gradient on a 16x16 crop matches finite differences") {
    const auto p = init_params<double>(6);
    auto b = sample_batch(10, 16);
    auto [img, lab] = dacs_mix(b.source, b.source_labels, b.target, b.target_pseudo, 4);
    b.mixed_target = img;
    b.mixed_labels = lab;
    LossConfig cfg;
    cfg.lambda_s = 3.0;
    cfg.lambda_t = 2.0;
    std::vector<Tensord> in(p.tensors.begin(), p.tensors.end());
    auto r = oracle::check_gradients(
        in,
        [&](Tape<double>&, const auto& v) {
          SegNetVars<double> net;
          for (std::size_t i = 0; i < kParamTensors; ++i) net.p[i] = v[i];
          return compose_loss(cfg, b, net).total;
        },
        1e-6, 25, 8);
    CHECK(r.max_rel_err < 1e-3);
  }

  TEST_CASE("pseudolabels from uniform and saturated teachers") {
    SegNetParams<double> zero = init_params<double>(1);
    for (auto& t : zero.tensors)
      for (auto& v : t.data()) v = 0.0;
    const auto img = gen_scene(1, Domain::target).image;
    const auto u = pseudolabel(zero, img, 0.968);
    CHECK(u.confidence == 0.0);
    for (auto v : u.labels.data) CHECK(v == 0);

    Tensord sat({3, 2, 2}, 0.0);
    for (std::size_t i = 0; i < 4; ++i) sat[(i % 3) * 4 + i] = 1.0;
    const auto s = pseudolabel_from_probs(sat, 0.968);
    CHECK(s.confidence == 1.0);
    CHECK(s.labels.data == std::vector<std::uint8_t>{0, 1, 2, 0});

    const auto teacher = init_params<double>(2);
    const auto a = pseudolabel(teacher, img, 0.5), b = pseudolabel(teacher, img, 0.5);
    CHECK(a.labels == b.labels);
    CHECK(a.confidence == b.confidence);
    CHECK_THROWS_AS(pseudolabel(teacher, img, 0.1), ConfigError);
  }

  TEST_CASE("teacher evaluation never allocates gradient buffers") {
    const auto teacher = init_params<float>(2);
    Tape<float> t;
    auto net = bind(t, teacher, false);
    auto probs = softmax_channels(forward(net, t.constant(to_tensor<float>(gen_scene(2, Domain::target).image))));
    CHECK_FALSE(probs.requires_grad());
    CHECK(t.grad_buffer_count() == 0);
  }

  TEST_CASE("class mixing follows the mask exactly") {
    const auto s = gen_scene(21, Domain::source);
    const auto t = gen_scene(22, Domain::target);
    const LabelMap tl = gen_scene(22, Domain::source).labels;
    const std::size_t hw = s.image.plane_size();

    const auto none = apply_mix(s.image, s.labels, t.image, tl, std::vector<std::uint8_t>(hw, 0));
    CHECK(none.first == t.image);
    CHECK(none.second == tl);
    const auto all = apply_mix(s.image, s.labels, t.image, tl, std::vector<std::uint8_t>(hw, 1));
    CHECK(all.first == s.image);
    CHECK(all.second == s.labels);

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto mask = classmix_mask(s.labels, seed);
      const auto [img, lab] = dacs_mix(s.image, s.labels, t.image, tl, seed);
      std::set<int> present, chosen;
      for (std::size_t p = 0; p < hw; ++p) {
        present.insert(s.labels.data[p]);
        if (mask[p]) chosen.insert(s.labels.data[p]);
        const auto& from_img = mask[p] ? s.image : t.image;
        CHECK(lab.data[p] == (mask[p] ? s.labels.data[p] : tl.data[p]));
        for (std::size_t c = 0; c < 3; ++c) CHECK(img.data[c * hw + p] == from_img.data[c * hw + p]);
      }
      CHECK(chosen.size() == (present.size() + 1) / 2);
      // A class is either fully pasted or not at all.
      for (std::size_t p = 0; p < hw; ++p) CHECK(static_cast<bool>(mask[p]) == static_cast<bool>(chosen.count(s.labels.data[p])));
    }
    CHECK(classmix_mask(s.labels, 5) == classmix_mask(s.labels, 5));
  }

  TEST_CASE("EMA update examples") {
    SegNetParams<double> t = init_params<double>(1), s = init_params<double>(2);
    auto t1 = t;
    ema_update(t1, s, 1.0);
    CHECK(t1 == t);
    auto t0 = t;
    ema_update(t0, s, 0.0);
    CHECK(t0 == s);

    SegNetParams<double> one = t, two = t;
    for (auto& x : one.tensors)
      for (auto& v : x.data()) v = 1.0;
    for (auto& x : two.tensors)
      for (auto& v : x.data()) v = 2.0;
    ema_update(one, two, 0.9);
    CHECK(one.tensors[0][0] == doctest::Approx(1.1).epsilon(1e-15));

    auto other = init_params<double>(1, 4);
    CHECK_THROWS_AS(ema_update(other, s, 0.5), ShapeError);
    CHECK_THROWS_AS(ema_update(t1, s, 1.5), ConfigError);
  }

  TEST_CASE("AdamW: zero gradients apply only the decoupled decay") {
    auto p = init_params<double>(3);
    const auto p0 = p;
    auto st = AdamState<double>::zeros_like(p);
    std::array<Tensord, kParamTensors> g;
    for (std::size_t i = 0; i < kParamTensors; ++i) g[i] = Tensord(p.tensors[i].shape(), 0.0);
    AdamWConfig cfg;
    cfg.lr_encoder = 0.01;
    cfg.lr_decoder = 0.05;
    cfg.weight_decay = 0.1;
    adamw_step(p, st, g, cfg);
    for (std::size_t i = 0; i < kParamTensors; ++i) {
      const double lr = SegNetParams<double>::is_encoder(i) ? 0.01 : 0.05;
      for (std::size_t k = 0; k < p.tensors[i].numel(); ++k) CHECK(p.tensors[i][k] == p0.tensors[i][k] * (1.0 - lr * 0.1));
    }
  }

  TEST_CASE("AdamW: zero learning rate leaves parameters unchanged") {
    std::mt19937_64 rng(4);
    auto p = init_params<double>(3);
    const auto p0 = p;
    auto st = AdamState<double>::zeros_like(p);
    std::array<Tensord, kParamTensors> g;
    for (std::size_t i = 0; i < kParamTensors; ++i) g[i] = oracle::random_tensor(p.tensors[i].shape(), rng);
    AdamWConfig cfg;
    cfg.lr_encoder = cfg.lr_decoder = 0.0;
    adamw_step(p, st, g, cfg);
    CHECK(p == p0);
  }

  TEST_CASE("AdamW: two steps against the update formula") {
    std::mt19937_64 rng(5);
    auto p = init_params<double>(3);
    auto st = AdamState<double>::zeros_like(p);
    std::array<Tensord, kParamTensors> g1, g2;
    for (std::size_t i = 0; i < kParamTensors; ++i) {
      g1[i] = oracle::random_tensor(p.tensors[i].shape(), rng);
      g2[i] = oracle::random_tensor(p.tensors[i].shape(), rng);
    }
    AdamWConfig cfg;
    cfg.lr_encoder = 0.002;
    cfg.lr_decoder = 0.02;
    cfg.weight_decay = 0.05;
    auto ref = p;
    adamw_step(p, st, g1, cfg, 0.5);
    adamw_step(p, st, g2, cfg, 1.0);
    const double b1 = cfg.beta1, b2 = cfg.beta2, eps = cfg.eps;
    for (std::size_t i = 0; i < kParamTensors; ++i) {
      const double lr = SegNetParams<double>::is_encoder(i) ? cfg.lr_encoder : cfg.lr_decoder;
      for (std::size_t k = 0; k < ref.tensors[i].numel(); ++k) {
        double x = ref.tensors[i][k];
        const double a = g1[i][k], b = g2[i][k];
        // step 1 (lr scaled by 0.5): m_hat = g, v_hat = g^2
        x = x * (1 - 0.5 * lr * cfg.weight_decay) - 0.5 * lr * a / (std::abs(a) + eps);
        const double m = b1 * (1 - b1) * a + (1 - b1) * b;
        const double v = b2 * (1 - b2) * a * a + (1 - b2) * b * b;
        x = x * (1 - lr * cfg.weight_decay) - lr * (m / (1 - b1 * b1)) / (std::sqrt(v / (1 - b2 * b2)) + eps);
        CHECK(p.tensors[i][k] == doctest::Approx(x).epsilon(1e-12));
      }
    }
    CHECK(st.step == 2);
  }

  TEST_CASE("AdamW aborts on a NaN gradient") {
    auto p = init_params<double>(3);
    auto st = AdamState<double>::zeros_like(p);
    std::array<Tensord, kParamTensors> g;
    for (std::size_t i = 0; i < kParamTensors; ++i) g[i] = Tensord(p.tensors[i].shape(), 0.0);
    g[4][7] = std::nan("");
    CHECK_THROWS_WITH_AS(adamw_step(p, st, g, AdamWConfig{}), doctest::Contains("enc3.weight"), NumericalError);
    CHECK(st.step == 0);
  }

  TEST_CASE("warm-up ramps linearly") {
    CHECK(warmup_scale(0, 0) == 1.0);
    CHECK(warmup_scale(0, 10) == 0.1);
    CHECK(warmup_scale(4, 10) == 0.5);
    CHECK(warmup_scale(9, 10) == 1.0);
    CHECK(warmup_scale(50, 10) == 1.0);
  }

  TEST_CASE("polynomial decay scales the rate down to zero") {
    CHECK(poly_scale(7, 100, 0.0) == 1.0);
    CHECK(poly_scale(0, 100, 1.0) == 1.0);
    CHECK(poly_scale(50, 100, 1.0) == 0.5);
    CHECK(poly_scale(75, 100, 2.0) == 0.0625);
    CHECK(poly_scale(100, 100, 1.0) == 0.0);
    CHECK(poly_scale(500, 100, 1.0) == 0.0);
  }

  TEST_CASE("the logged rate combines warm-up and decay") {
    const auto data = tiny_dataset();
    TrainConfig cfg;
    cfg.iterations = 10;
    cfg.warmup_fraction = 0.2;
    cfg.lr_power = 1.0;
    auto st = init_train_state<float>(1);
    for (std::uint64_t i = 0; i < 4; ++i) {
      const auto row = train_step(st, data, cfg);
      const double expect = cfg.optim.lr_encoder * std::min(1.0, (i + 1) / 2.0) * (1.0 - i / 10.0);
      CHECK(row.lr == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  TEST_CASE("the batch pipeline passes label maps through untouched") {
    const auto s = gen_scene(31, Domain::source), t = gen_scene(32, Domain::target);
    const auto teacher = init_params<float>(1);
    TrainConfig cfg;
    const auto b = make_batch(s.image, s.labels, t.image, teacher, cfg, 5, std::nullopt);
    CHECK(b.source_labels == s.labels);
    CHECK(b.source_to_target->same_size(s.image));
    CHECK(b.target_to_source->same_size(t.image));
    CHECK_FALSE(b.mixed_target.has_value());
    const auto m = make_batch(s.image, s.labels, t.image, teacher, cfg, 5, 8);
    CHECK(m.mixed_target.has_value());
    CHECK(m.source_labels == s.labels);
  }

  TEST_CASE("basic training reports zero invariance terms") {
    const auto data = tiny_dataset();
    TrainConfig cfg;
    cfg.iterations = 3;
    cfg.loss.variant = LossVariant::basic;
    auto st = init_train_state<float>(1);
    for (int i = 0; i < 3; ++i) {
      const auto row = train_step(st, data, cfg);
      CHECK(row.loss_inv_src == 0.0);
      CHECK(row.loss_inv_tgt == 0.0);
      CHECK(row.iter == static_cast<std::uint64_t>(i + 1));
    }
  }

  TEST_CASE("training is deterministic and the metrics CSV round-trips") {
    const auto data = tiny_dataset();
    TrainConfig cfg;
    cfg.iterations = 6;
    cfg.master_seed = 3;
    auto run = [&] {
      auto st = init_train_state<float>(cfg.master_seed);
      std::vector<MetricsRow> rows;
      for (std::size_t i = 0; i < cfg.iterations; ++i) rows.push_back(train_step(st, data, cfg));
      return std::make_pair(metrics_csv(rows), st.student);
    };
    const auto a = run(), b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
    CHECK(a.first.rfind(std::string(kMetricsHeader) + "\n", 0) == 0);
    const auto rows = parse_metrics_csv(a.first);
    CHECK(rows.size() == 6);
    CHECK(metrics_csv(rows) == a.first);
    CHECK_THROWS_AS(parse_metrics_csv("iter,loss\n"), DataError);
  }

  TEST_CASE("teacher moves only by the EMA rule") {
    const auto data = tiny_dataset();
    TrainConfig cfg;
    cfg.iterations = 10;
    auto st = init_train_state<double>(2);
    for (int i = 0; i < 4; ++i) train_step(st, data, cfg);
    const auto teacher_before = st.teacher;
    train_step(st, data, cfg);
    auto expected = teacher_before;
    ema_update(expected, st.student, std::min(1.0 - 1.0 / 5.0, cfg.ema_alpha));
    CHECK(st.teacher == expected);
  }

  TEST_CASE("training state checkpoint round trip resumes identically") {
    const auto data = tiny_dataset();
    TrainConfig cfg;
    cfg.iterations = 8;
    auto a = init_train_state<float>(4);
    for (int i = 0; i < 4; ++i) train_step(a, data, cfg);
    auto b = train_state_from_records(checkpoint_records(a));
    CHECK(b.iteration == a.iteration);
    CHECK(b.student == a.student);
    CHECK(b.teacher == a.teacher);
    std::vector<MetricsRow> ra, rb;
    for (int i = 0; i < 4; ++i) {
      ra.push_back(train_step(a, data, cfg));
      rb.push_back(train_step(b, data, cfg));
    }
    CHECK(ra == rb);
    CHECK(a.student == b.student);
  }

  TEST_CASE("divergence is reported as a numerical error") {
    const auto data = tiny_dataset();
    TrainConfig cfg;
    cfg.iterations = 50;
    cfg.warmup_fraction = 0.0;
    cfg.optim.lr_encoder = cfg.optim.lr_decoder = 1e30;
    auto st = init_train_state<float>(1);
    CHECK_THROWS_AS(
        for (int i = 0; i < 50; ++i) train_step(st, data, cfg), NumericalError);
  }

  TEST_CASE("invariance terms shrink over 200 steps on a fixed pair") {
    // Default seeds; the ratio depends on how far apart the views start.
    const auto data = Dataset::generate(build_splits(0, 1, 1, 1));
    TrainConfig cfg;
    cfg.iterations = 200;
    auto st = init_train_state<float>(0);
    std::vector<MetricsRow> rows;
    for (int i = 0; i < 200; ++i) rows.push_back(train_step(st, data, cfg));
    INFO("inv_src ", rows.front().loss_inv_src, " -> ", rows.back().loss_inv_src);
    INFO("inv_tgt ", rows.front().loss_inv_tgt, " -> ", rows.back().loss_inv_tgt);
    CHECK(rows.back().loss_inv_src < 0.1 * rows.front().loss_inv_src);
    CHECK(rows.back().loss_inv_tgt < 0.1 * rows.front().loss_inv_tgt);
  }

  TEST_CASE("config enums parse and print") {
    for (auto v : {LossVariant::basic, LossVariant::fda, LossVariant::ce_full, LossVariant::ciss})
      CHECK(parse_loss_variant(to_string(v)) == v);
    CHECK(parse_invariance_point("output") == InvariancePoint::output);
    CHECK(parse_invariance_norm("l1") == InvarianceNorm::l1);
    CHECK_THROWS_AS(parse_loss_variant("adv"), ConfigError);
    LossConfig bad;
    bad.lambda_s = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}
