#include <doctest.h>

#include "cbi/io.hpp"
#include "cbi/network.hpp"
#include "oracles.hpp"

using namespace cbi;
using namespace cbi::testing;

namespace {

NetworkSpec diamond_spec(Rng& rng, LayerKind join) {
  NetworkSpec spec;
  spec.in_channels = 2;
  spec.in_height = 12;
  spec.in_width = 12;

  LayerDesc stem;
  stem.kind = LayerKind::Conv;
  stem.name = "stem";
  stem.conv = random_spec(rng, 2, 3);
  stem.conv.stride = 1;
  stem.conv.padding = stem.conv.kernel_h / 2;
  spec.layers.push_back(stem);

  for (const char* name : {"left", "right"}) {
    LayerDesc d;
    d.kind = LayerKind::Conv;
    d.name = name;
    d.conv = random_spec(rng, stem.conv.out_channels, 3);
    d.conv.out_channels = 4;
    d.conv.stride = 1;
    d.conv.padding = d.conv.kernel_h / 2;
    d.conv.weights.resize(d.conv.weight_count());
    d.conv.bias.resize(4);
    for (float& w : d.conv.weights) w = rng.uniform(-0.2f, 0.2f);
    d.from = {"stem"};
    spec.layers.push_back(d);
  }

  LayerDesc j;
  j.kind = join;
  j.name = "join";
  j.from = {"left", "right"};
  spec.layers.push_back(j);

  LayerDesc head;
  head.kind = LayerKind::Conv;
  head.name = "head";
  head.conv = random_spec(rng, join == LayerKind::Add ? 4 : 8, 3);
  head.conv.stride = 1;
  head.conv.padding = head.conv.kernel_h / 2;
  spec.layers.push_back(head);
  return spec;
}

}  // namespace

TEST_CASE("resolve: incompatible chained dims name the offending layer") {
  NetworkSpec spec;
  spec.in_channels = 3;
  spec.in_height = spec.in_width = 16;
  LayerDesc d;
  d.kind = LayerKind::Conv;
  d.name = "bad";
  d.conv.in_channels = 4;  // input has 3
  d.conv.out_channels = 2;
  d.conv.kernel_h = d.conv.kernel_w = 3;
  d.conv.weights.assign(d.conv.weight_count(), 0.0f);
  d.conv.bias.assign(2, 0.0f);
  spec.layers.push_back(d);
  try {
    resolve(spec);
    FAIL("expected InvalidInputError");
  } catch (const InvalidInputError& e) {
    CHECK(std::string(e.what()).find("bad") != std::string::npos);
    CHECK(std::string(e.what()).find("layer 0") != std::string::npos);
  }
}

TEST_CASE("resolve: single conv layer makes a one-layer network") {
  Rng rng(40);
  NetworkSpec spec;
  spec.in_channels = 2;
  spec.in_height = spec.in_width = 8;
  LayerDesc d;
  d.kind = LayerKind::Conv;
  d.conv = random_spec(rng, 2, 3);
  spec.layers.push_back(d);
  DenseNetwork net = build_network(spec);
  Tensor3 out = net.forward(random_tensor(rng, 2, 8, 8));
  CHECK(out.channels == d.conv.out_channels);
}

TEST_CASE("seg7 bench topology resolves to its pinned row dims") {
  NetworkSpec spec = make_seg7_spec(1);
  const ResolvedTopology topo = resolve(spec);
  // L1, L2a, L2b, L3, L4a, L4b, L5, L6, L7
  CHECK(topo.shape[0] == Shape3{16, 541, 871});
  CHECK(topo.shape[2] == Shape3{16, 271, 436});
  CHECK(topo.shape[3] == Shape3{64, 271, 436});
  CHECK(topo.shape[5] == Shape3{64, 136, 218});
  CHECK(topo.shape[6] == Shape3{256, 136, 218});
  CHECK(topo.shape[7] == Shape3{64, 136, 218});
  CHECK(topo.shape[8] == Shape3{8, 136, 218});
}

TEST_CASE("seg7 builds and a CB stream runs a full-resolution frame" * doctest::timeout(120)) {
  DenseNetwork dense = build_network(make_seg7_spec(3));
  CBNetwork cb = convert_to_cb(dense, std::vector<float>(5, 0.0f));
  CHECK(cb.conv_layer_count() == 5);
  int pools = 0;
  for (const CBNode& n : cb.nodes()) pools += n.kind == LayerKind::Pool;
  CHECK(pools == 2);

  Rng rng(41);
  Tensor3 frame = random_tensor(rng, 3, 776, 1040, 0.0f, 1.0f);
  FrameStats fs;
  const Tensor3& out = cb.forward_frame(frame, {}, &fs);
  CHECK(out.channels == 8);
  CHECK(out.height == 136);
  CHECK(out.width == 218);
  for (float v : out.data) CHECK(std::isfinite(v));
  // Identical second frame: nothing recomputed anywhere.
  FrameStats fs2;
  cb.forward_frame(frame, {}, &fs2);
  for (const LayerFrameStats& l : fs2.layers) CHECK(l.changed_px == 0);
}

TEST_CASE("fold_batchnorm: identity parameters change nothing") {
  Rng rng(42);
  ConvSpec s = random_spec(rng, 3);
  BatchNormParams bn;
  bn.gamma.assign(s.out_channels, 1.0f);
  bn.beta.assign(s.out_channels, 0.0f);
  bn.mean.assign(s.out_channels, 0.0f);
  bn.var.assign(s.out_channels, 1.0f);
  bn.eps = 0.0f;
  ConvSpec folded = fold_batchnorm(s, bn);
  CHECK(folded.weights == s.weights);
  CHECK(folded.bias == s.bias);
}

TEST_CASE("fold_batchnorm: gamma=2 doubles weights and bias") {
  Rng rng(43);
  ConvSpec s = random_spec(rng, 2);
  BatchNormParams bn;
  bn.gamma.assign(s.out_channels, 2.0f);
  bn.beta.assign(s.out_channels, 0.0f);
  bn.mean.assign(s.out_channels, 0.0f);
  bn.var.assign(s.out_channels, 1.0f);
  bn.eps = 0.0f;
  ConvSpec folded = fold_batchnorm(s, bn);
  for (std::size_t i = 0; i < s.weights.size(); ++i)
    CHECK(folded.weights[i] == doctest::Approx(2.0f * s.weights[i]));
  for (int o = 0; o < s.out_channels; ++o)
    CHECK(folded.bias[o] == doctest::Approx(2.0f * s.bias[o]));
}

TEST_CASE("fold_batchnorm: folded conv equals bn(conv(x)) on random data") {
  Rng rng(44);
  for (int round = 0; round < 5; ++round) {
    ConvSpec s = random_spec(rng, 3);
    BatchNormParams bn;
    for (int o = 0; o < s.out_channels; ++o) {
      bn.gamma.push_back(rng.uniform(0.5f, 2.0f));
      bn.beta.push_back(rng.uniform(-0.5f, 0.5f));
      bn.mean.push_back(rng.uniform(-0.5f, 0.5f));
      bn.var.push_back(rng.uniform(0.1f, 2.0f));
    }
    Tensor3 x = random_tensor(rng, 3, 9, 9);
    Tensor3 want = conv2d_dense(x, s);
    for (int o = 0; o < s.out_channels; ++o) {
      const float scale = bn.gamma[o] / std::sqrt(bn.var[o] + bn.eps);
      for (int j = 0; j < want.height; ++j)
        for (int i = 0; i < want.width; ++i)
          want.at(o, j, i) = (want.at(o, j, i) - bn.mean[o]) * scale + bn.beta[o];
    }
    CHECK(max_rel_err(conv2d_dense(x, fold_batchnorm(s, bn)), want) < 1e-5);
  }
}

TEST_CASE("fold_batchnorm: channel mismatch is rejected") {
  Rng rng(45);
  ConvSpec s = random_spec(rng, 2);
  BatchNormParams bn;
  bn.gamma.assign(s.out_channels + 1, 1.0f);
  bn.beta.assign(s.out_channels + 1, 0.0f);
  bn.mean.assign(s.out_channels + 1, 0.0f);
  bn.var.assign(s.out_channels + 1, 1.0f);
  CHECK_THROWS_AS(fold_batchnorm(s, bn), InvalidInputError);
}

TEST_CASE("convert_to_cb: threshold validation") {
  DenseNetwork net = build_network(make_small_spec(1, 3, 32, 32));
  CHECK_THROWS_AS(convert_to_cb(net, {0.1f}), InvalidInputError);          // count
  CHECK_THROWS_AS(convert_to_cb(net, {0.1f, -0.2f, 0.1f}), InvalidInputError);  // sign
  CHECK_NOTHROW(convert_to_cb(net, {0.1f, 0.2f, 0.3f}));
}

TEST_CASE("convert_to_cb: propagate on the first layer is a configuration error") {
  DenseNetwork net = build_network(make_small_spec(1, 3, 32, 32));
  std::vector<DetectionPolicy> pol{DetectionPolicy::Propagate, DetectionPolicy::Detect,
                                   DetectionPolicy::Detect};
  CHECK_THROWS_AS(convert_to_cb(net, {0.0f, 0.0f, 0.0f}, &pol), ConfigError);
}

TEST_CASE("convert_to_cb: reuse_1x1 allowed exactly on 1x1 stride-1 rows") {
  DenseNetwork seg = build_network(make_seg7_spec(2));
  std::vector<DetectionPolicy> pol(5, DetectionPolicy::Detect);
  pol[3] = DetectionPolicy::Reuse1x1;  // L6, 1x1
  pol[4] = DetectionPolicy::Reuse1x1;  // L7, 1x1
  CHECK_NOTHROW(convert_to_cb(seg, std::vector<float>(5, 0.0f), &pol));
  pol[1] = DetectionPolicy::Reuse1x1;  // L3 is 7x7
  CHECK_THROWS_AS(convert_to_cb(seg, std::vector<float>(5, 0.0f), &pol), ConfigError);
}

TEST_CASE("forward_sequence: repeated identical frames cost zero conv ops after bootstrap") {
  Rng rng(46);
  DenseNetwork net = build_network(make_small_spec(4, 2, 24, 24));
  CBNetwork cb = convert_to_cb(net, {0.05f, 0.05f, 0.05f});
  std::vector<Tensor3> frames(5, random_tensor(rng, 2, 24, 24, 0.0f, 1.0f));
  SequenceResult r = forward_sequence(cb, frames);
  for (const FrameStats& f : r.stats.frames) {
    if (f.frame < 2) continue;
    for (const LayerFrameStats& l : f.layers) {
      CHECK(l.changed_px == 0);
      CHECK(l.eff_ops == 0);
    }
  }
}

TEST_CASE("forward_sequence: resolution mismatch mid-sequence is rejected") {
  Rng rng(47);
  DenseNetwork net = build_network(make_small_spec(5, 2, 24, 24));
  CBNetwork cb = convert_to_cb(net, {0.0f, 0.0f, 0.0f});
  std::vector<Tensor3> frames{random_tensor(rng, 2, 24, 24), random_tensor(rng, 2, 20, 24)};
  CHECK_THROWS_AS(forward_sequence(cb, frames), InvalidInputError);
}

TEST_CASE("reset + replay reproduces identical stats and outputs") {
  SyntheticConfig cfg;
  cfg.height = cfg.width = 32;
  cfg.channels = 2;
  cfg.n_frames = 6;
  cfg.noise_std = 0.01f;
  cfg.object_size = 6;
  cfg.n_objects = 1;
  cfg.seed = 9;
  std::vector<Tensor3> frames = gen_synthetic(cfg);

  DenseNetwork net = build_network(make_small_spec(6, 2, 32, 32));
  CBNetwork cb = convert_to_cb(net, {0.02f, 0.02f, 0.02f});
  SequenceResult a = forward_sequence(cb, frames);
  cb.reset();
  SequenceResult b = forward_sequence(cb, frames);
  CHECK(a.stats.same_counts(b.stats));
  for (std::size_t t = 0; t < frames.size(); ++t)
    CHECK(a.outputs[t].data == b.outputs[t].data);
}

TEST_CASE("reset isolates unrelated sequences") {
  Rng rng(48);
  DenseNetwork net = build_network(make_small_spec(7, 2, 24, 24));
  CBNetwork cb = convert_to_cb(net, {0.05f, 0.05f, 0.05f});
  std::vector<Tensor3> seq = random_frames(rng, 4, 2, 24, 24);

  forward_sequence(cb, random_frames(rng, 6, 2, 24, 24));  // unrelated prior traffic
  cb.reset();
  SequenceResult after_noise = forward_sequence(cb, seq);

  CBNetwork fresh = convert_to_cb(net, {0.05f, 0.05f, 0.05f});
  SequenceResult clean = forward_sequence(fresh, seq);
  CHECK(after_noise.stats.same_counts(clean.stats));
}

TEST_CASE("reset mid-stream reconverges after its bootstrap frame at tau = 0") {
  Rng rng(49);
  DenseNetwork net = build_network(make_small_spec(8, 2, 24, 24));
  CBNetwork a = convert_to_cb(net, {0.0f, 0.0f, 0.0f});
  CBNetwork b = convert_to_cb(net, {0.0f, 0.0f, 0.0f});
  std::vector<Tensor3> frames = random_frames(rng, 6, 2, 24, 24);

  for (int t = 0; t < 3; ++t) {
    a.forward_frame(frames[t]);
    b.forward_frame(frames[t]);
  }
  b.reset();
  for (int t = 3; t < 6; ++t) {
    const Tensor3& ya = a.forward_frame(frames[t]);
    const Tensor3& yb = b.forward_frame(frames[t]);
    CHECK(ya.data == yb.data);  // tau = 0: both equal the dense result exactly
  }
}

TEST_CASE("scaling all thresholds up never increases changed-pixel totals") {
  SyntheticConfig cfg;
  cfg.height = cfg.width = 48;
  cfg.channels = 2;
  cfg.n_frames = 8;
  cfg.n_objects = 1;
  cfg.object_size = 8;
  cfg.noise_std = 0.01f;
  cfg.seed = 21;
  std::vector<Tensor3> frames = gen_synthetic(cfg);
  DenseNetwork net = build_network(make_small_spec(9, 2, 48, 48));

  std::vector<std::int64_t> prev_totals;
  for (float scale : {0.5f, 1.0f, 2.0f, 4.0f}) {
    CBNetwork cb = convert_to_cb(net, {0.02f * scale, 0.02f * scale, 0.02f * scale});
    SequenceResult r = forward_sequence(cb, frames);
    std::vector<std::int64_t> totals(r.stats.frames[0].layers.size(), 0);
    for (const FrameStats& f : r.stats.frames)
      for (std::size_t k = 0; k < f.layers.size(); ++k) totals[k] += f.layers[k].changed_px;
    if (!prev_totals.empty())
      for (std::size_t k = 0; k < totals.size(); ++k) CHECK(totals[k] <= prev_totals[k]);
    prev_totals = totals;
  }
}

TEST_CASE("re-convergent paths: add and concat joins match the dense oracle") {
  for (LayerKind join : {LayerKind::Add, LayerKind::Concat}) {
    Rng rng(join == LayerKind::Add ? 50 : 51);
    NetworkSpec spec = diamond_spec(rng, join);
    DenseNetwork dense = build_network(spec);
    CBNetwork cb = convert_to_cb(dense, std::vector<float>(4, 0.0f));

    std::vector<Tensor3> frames = random_frames(rng, 5, 2, 12, 12);
    SequenceResult r = forward_sequence(cb, frames);
    for (std::size_t t = 0; t < frames.size(); ++t)
      CHECK(max_rel_err(r.outputs[t], dense.forward(frames[t])) < 1e-5);
  }
}

TEST_CASE("join nodes mark a pixel dirty when any parent marked it") {
  Rng rng(52);
  NetworkSpec spec = diamond_spec(rng, LayerKind::Add);
  DenseNetwork dense = build_network(spec);
  CBNetwork cb = convert_to_cb(dense, std::vector<float>(4, 0.0f));

  Tensor3 frame = random_tensor(rng, 2, 12, 12);
  cb.forward_frame(frame);
  frame.at(0, 6, 6) += 1.0f;
  StatsConfig cfg;
  cfg.record_maps = true;
  FrameStats fs;
  cb.forward_frame(frame, cfg, &fs);

  const ChangeMap *left = nullptr, *right = nullptr, *join = nullptr;
  for (const LayerFrameStats& l : fs.layers) {
    if (l.layer == "left") left = &l.map;
    if (l.layer == "right") right = &l.map;
    if (l.layer == "join") join = &l.map;
  }
  REQUIRE((left && right && join));
  for (std::size_t i = 0; i < join->bits.size(); ++i)
    CHECK(join->bits[i] == (left->bits[i] | right->bits[i]));
}

TEST_CASE("feed-forward mode misses gradual drift that closed loop catches") {
  ConvSpec s;
  s.in_channels = s.out_channels = 1;
  s.kernel_h = s.kernel_w = 1;
  s.weights = {1.0f};
  s.bias = {0.0f};
  NetworkSpec spec;
  spec.in_channels = 1;
  spec.in_height = spec.in_width = 4;
  LayerDesc d;
  d.kind = LayerKind::Conv;
  d.conv = s;
  spec.layers.push_back(d);
  DenseNetwork net = build_network(spec);

  CBNetwork ff = convert_to_cb(net, {0.1f}, nullptr, DetectMode::FeedForward);
  CBNetwork cl = convert_to_cb(net, {0.1f}, nullptr, DetectMode::ClosedLoop);

  Tensor3 frame(1, 4, 4);
  ff.forward_frame(frame);
  cl.forward_frame(frame);
  std::int64_t ff_updates = 0, cl_updates = 0;
  for (int t = 1; t <= 10; ++t) {
    for (float& v : frame.data) v += 0.04f;  // always below tau per step
    FrameStats a, b;
    ff.forward_frame(frame, {}, &a);
    cl.forward_frame(frame, {}, &b);
    ff_updates += a.layers[0].changed_px;
    cl_updates += b.layers[0].changed_px;
  }
  CHECK(ff_updates == 0);    // per-frame deltas never exceed tau
  CHECK(cl_updates > 0);     // accumulated drift against the input state does
  CHECK(max_rel_err(cl.output(), frame) < 0.11);  // stale by at most tau
}

TEST_CASE("per-frame loss is recorded against a reference") {
  Rng rng(53);
  DenseNetwork net = build_network(make_small_spec(10, 2, 24, 24));
  CBNetwork cb = convert_to_cb(net, {0.1f, 0.1f, 0.1f});
  std::vector<Tensor3> frames = random_frames(rng, 4, 2, 24, 24);
  std::vector<Tensor3> ref = make_reference(net, frames);
  SequenceResult r = forward_sequence(cb, frames, &ref, LossMetric::Mse);
  for (const FrameStats& f : r.stats.frames) {
    CHECK(f.has_loss);
    CHECK(f.loss >= 0.0);
  }
  CHECK(r.stats.frames[0].loss == doctest::Approx(0.0));  // bootstrap equals dense
}
