#include <doctest.h>

#include "cbi/calibration.hpp"
#include "cbi/io.hpp"
#include "oracles.hpp"

using namespace cbi;
using namespace cbi::testing;

namespace {

// Channel counts stay low so the OR-over-channels detection can actually
// suppress pixels at small taus; wide layers almost never see every channel
// delta below tau on dense noise.
NetworkSpec two_conv_spec(std::uint32_t seed, int h, int w) {
  NetworkSpec spec;
  spec.in_channels = 1;
  spec.in_height = h;
  spec.in_width = w;
  LayerDesc a;
  a.kind = LayerKind::Conv;
  a.name = "A";
  a.conv = {1, 2, 3, 3, 1, 1};
  a.fuse_relu = true;
  spec.layers.push_back(a);
  LayerDesc b;
  b.kind = LayerKind::Conv;
  b.name = "B";
  b.conv = {2, 2, 3, 3, 1, 1};
  spec.layers.push_back(b);
  fill_random_weights(spec, seed);
  return spec;
}

EvalSequence make_eval(const DenseNetwork& net, std::vector<Tensor3> frames) {
  EvalSequence s;
  s.reference = make_reference(net, frames);
  s.frames = std::move(frames);
  return s;
}

std::vector<Tensor3> noisy_frames(std::uint32_t seed, int n, int h, int w, float noise) {
  SyntheticConfig cfg;
  cfg.height = h;
  cfg.width = w;
  cfg.channels = 1;
  cfg.n_frames = n;
  cfg.n_objects = 1;
  cfg.object_size = 6;
  cfg.noise_std = noise;
  cfg.seed = seed;
  return gen_synthetic(cfg);
}

}  // namespace

TEST_CASE("pixel_accuracy and mse: hand cases") {
  Rng rng(60);
  Tensor3 x = random_tensor(rng, 4, 5, 5);
  CHECK(pixel_accuracy(x, x) == 1.0);
  CHECK(mse(x, x) == 0.0);

  Tensor3 pred(2, 1, 2);
  pred.data = {1.0f, 0.0f, 0.0f, 1.0f};  // argmax: [0, 1]
  Tensor3 ref = pred;
  ref.data = {0.0f, 1.0f, 1.0f, 0.0f};  // argmax: [1, 0]
  CHECK(pixel_accuracy(pred, ref) == 0.0);
  ref.data = {1.0f, 0.0f, 0.0f, 1.0f};
  CHECK(pixel_accuracy(pred, ref) == 1.0);
  ref.data = {1.0f, 1.0f, 0.0f, 0.0f};  // argmax: [0, 0] -> one of two matches
  CHECK(pixel_accuracy(pred, ref) == 0.5);

  Tensor3 a(1, 1, 2), b(1, 1, 2);
  a.data = {0.0f, 0.0f};
  b.data = {1.0f, 1.0f};
  CHECK(mse(a, b) == 1.0);
  Tensor3 c(1, 2, 2);
  CHECK_THROWS_AS(mse(a, c), InvalidInputError);
}

TEST_CASE("pixel_accuracy: single-channel reference is read as class labels") {
  Tensor3 pred(3, 1, 2);
  pred.data = {0.1f, 0.0f, 0.9f, 0.2f, 0.0f, 0.8f};  // argmax: [1, 2]
  Tensor3 labels(1, 1, 2);
  labels.data = {1.0f, 2.0f};
  CHECK(pixel_accuracy(pred, labels) == 1.0);
  labels.data = {1.0f, 0.0f};
  CHECK(pixel_accuracy(pred, labels) == 0.5);
}

TEST_CASE("select_thresholds: zero budget on noisy data returns the zero vector") {
  DenseNetwork net = build_network(two_conv_spec(1, 24, 24));
  std::vector<EvalSequence> seqs{make_eval(net, noisy_frames(5, 6, 24, 24, 0.08f))};
  CBNetwork cb = convert_to_cb(net, {0.0f, 0.0f});

  CalibConfig cfg;
  cfg.per_layer_budget = 0.0;
  cfg.initial_tau = 0.01;
  cfg.max_steps = 16;
  CalibResult r = select_thresholds(cb, seqs, cfg);
  CHECK(r.taus == std::vector<float>{0.0f, 0.0f});
  for (bool capped : r.hit_cap) CHECK(!capped);
}

TEST_CASE("select_thresholds: identical frames grow to the step cap and report it") {
  DenseNetwork net = build_network(two_conv_spec(2, 24, 24));
  Rng rng(61);
  std::vector<Tensor3> frames(5, random_tensor(rng, 1, 24, 24, 0.0f, 1.0f));
  std::vector<EvalSequence> seqs{make_eval(net, frames)};
  CBNetwork cb = convert_to_cb(net, {0.0f, 0.0f});

  CalibConfig cfg;
  cfg.per_layer_budget = 0.001;
  cfg.initial_tau = 0.01;
  cfg.growth_factor = 2.0;
  cfg.max_steps = 8;
  CalibResult r = select_thresholds(cb, seqs, cfg);
  for (bool capped : r.hit_cap) CHECK(capped);
  // Last candidate: initial * growth^(max_steps-1).
  CHECK(r.taus[0] == doctest::Approx(0.01 * 128.0));
}

TEST_CASE("select_thresholds: budget respected on re-evaluation") {
  DenseNetwork net = build_network(two_conv_spec(3, 24, 24));
  std::vector<EvalSequence> seqs{make_eval(net, noisy_frames(7, 6, 24, 24, 0.02f))};
  CBNetwork cb = convert_to_cb(net, {0.0f, 0.0f});

  CalibConfig cfg;
  cfg.per_layer_budget = 2e-4;
  cfg.initial_tau = 0.005;
  cfg.growth_factor = 1.5;
  cfg.max_steps = 20;
  CalibResult r = select_thresholds(cb, seqs, cfg);

  // Replay the definition: each layer's incremental loss vs zeroing it.
  auto eval_at = [&](std::vector<float> taus) {
    CBNetwork run = cb;
    run.set_thresholds(taus);
    run.reset();
    for (const Tensor3& f : seqs[0].frames) run.forward_frame(f);
    return loss_value(cfg.metric, run.output(), seqs[0].reference.back());
  };
  for (std::size_t l = 0; l < r.taus.size(); ++l) {
    std::vector<float> zeroed = r.taus;
    zeroed[l] = 0.0f;
    CHECK(eval_at(r.taus) - eval_at(zeroed) <= cfg.per_layer_budget + 1e-12);
  }

  // Zero-vector lower bound.
  for (float t : r.taus) CHECK(t >= 0.0f);
  CHECK(eval_at(r.taus) >= eval_at(std::vector<float>(r.taus.size(), 0.0f)) - 1e-12);
}

TEST_CASE("select_thresholds: trace taus strictly increase per layer") {
  DenseNetwork net = build_network(two_conv_spec(4, 16, 16));
  std::vector<EvalSequence> seqs{make_eval(net, noisy_frames(9, 4, 16, 16, 0.03f))};
  CBNetwork cb = convert_to_cb(net, {0.0f, 0.0f});
  CalibConfig cfg;
  cfg.per_layer_budget = 1e-3;
  cfg.max_steps = 10;
  CalibResult r = select_thresholds(cb, seqs, cfg);
  double last_tau = 0.0;
  int last_layer = -1;
  for (const CalibTracePoint& p : r.trace) {
    if (p.layer != last_layer) {
      last_layer = p.layer;
      last_tau = 0.0;
    }
    CHECK(p.tau > last_tau);
    last_tau = p.tau;
  }
}

TEST_CASE("select_thresholds: trace is flat under budget, then crosses it") {
  // The per-layer loss-vs-tau trace has the protocol's shape: candidates sit
  // within budget of the layer's zero-tau baseline until the final one, which
  // violates it and is discarded.
  DenseNetwork net = build_network(two_conv_spec(8, 24, 24));
  std::vector<EvalSequence> seqs{make_eval(net, noisy_frames(17, 6, 24, 24, 0.05f))};
  CBNetwork cb = convert_to_cb(net, {0.0f, 0.0f});

  CalibConfig cfg;
  cfg.per_layer_budget = 5e-4;
  cfg.initial_tau = 0.002;
  cfg.growth_factor = 1.5;
  cfg.max_steps = 24;
  CalibResult r = select_thresholds(cb, seqs, cfg);

  for (int layer = 0; layer < 2; ++layer) {
    if (r.hit_cap[layer]) continue;
    std::vector<CalibTracePoint> pts;
    for (const CalibTracePoint& p : r.trace)
      if (p.layer == layer) pts.push_back(p);
    REQUIRE(pts.size() >= 2);
    CHECK(pts.back().tau > r.taus[layer]);       // the violating candidate was discarded
    CHECK(r.taus[layer] == doctest::Approx(pts[pts.size() - 2].tau));
  }
}

TEST_CASE("select_thresholds: per-layer budget overrides and worst-case aggregation") {
  DenseNetwork net = build_network(two_conv_spec(9, 24, 24));
  std::vector<EvalSequence> seqs{make_eval(net, noisy_frames(19, 6, 24, 24, 0.08f)),
                                 make_eval(net, noisy_frames(20, 6, 24, 24, 0.08f))};
  CBNetwork cb = convert_to_cb(net, {0.0f, 0.0f});

  CalibConfig cfg;
  cfg.initial_tau = 0.01;
  cfg.growth_factor = 1.5;
  cfg.max_steps = 10;
  cfg.budget_overrides = {0.0, 0.05};  // starve layer A, give layer B headroom
  cfg.aggregation = LossAggregation::Worst;
  CalibResult r = select_thresholds(cb, seqs, cfg);
  CHECK(r.taus[0] == 0.0f);
  CHECK(r.taus[1] > 0.0f);

  cfg.budget_overrides = {0.0};  // wrong length
  CHECK_THROWS_AS(select_thresholds(cb, seqs, cfg), InvalidInputError);
}

TEST_CASE("select_thresholds: config validation") {
  DenseNetwork net = build_network(two_conv_spec(5, 16, 16));
  std::vector<EvalSequence> seqs{make_eval(net, noisy_frames(11, 3, 16, 16, 0.02f))};
  CBNetwork cb = convert_to_cb(net, {0.0f, 0.0f});
  CalibConfig cfg;
  cfg.initial_tau = 0.0;
  CHECK_THROWS_AS(select_thresholds(cb, seqs, cfg), InvalidInputError);
  cfg = {};
  cfg.growth_factor = 1.0;
  CHECK_THROWS_AS(select_thresholds(cb, seqs, cfg), InvalidInputError);
  cfg = {};
  CHECK_THROWS_AS(select_thresholds(cb, {}, cfg), InvalidInputError);
}

TEST_CASE("sweep_threshold_factor: factor 0 is lossless and maximal in ops") {
  DenseNetwork net = build_network(two_conv_spec(6, 24, 24));
  std::vector<EvalSequence> seqs{make_eval(net, noisy_frames(13, 6, 24, 24, 0.02f))};
  CBNetwork cb = convert_to_cb(net, {0.0f, 0.0f});

  std::vector<TradeoffRow> curve = sweep_threshold_factor(
      cb, {0.04f, 0.04f}, {0.0, 0.5, 1.0, 2.0}, seqs, LossMetric::Mse);
  REQUIRE(curve.size() == 4);
  CHECK(curve[0].loss <= 1e-9);
  for (const TradeoffRow& row : curve) {
    CHECK(row.total_eff_ops <= curve[0].total_eff_ops);
    CHECK(row.loss >= curve[0].loss - 1e-12);
  }
  // loss(2) >= loss(1) on noisy data
  CHECK(curve[3].loss >= curve[2].loss - 1e-9);
  // ops column non-increasing
  for (std::size_t i = 1; i < curve.size(); ++i)
    CHECK(curve[i].total_eff_ops <= curve[i - 1].total_eff_ops);
}

TEST_CASE("sweep_threshold_factor: factors must be strictly increasing") {
  DenseNetwork net = build_network(two_conv_spec(7, 16, 16));
  std::vector<EvalSequence> seqs{make_eval(net, noisy_frames(15, 3, 16, 16, 0.02f))};
  CBNetwork cb = convert_to_cb(net, {0.0f, 0.0f});
  CHECK_THROWS_AS(sweep_threshold_factor(cb, {0.1f, 0.1f}, {0.0, 0.0}, seqs), InvalidInputError);
  CHECK_THROWS_AS(sweep_threshold_factor(cb, {0.1f, 0.1f}, {-1.0, 0.0}, seqs), InvalidInputError);
}
