#include "cbi/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cbi {

namespace {

int argmax_channel(const Tensor3& t, int j, int i) {
  int best = 0;
  float best_v = t.at(0, j, i);
  for (int c = 1; c < t.channels; ++c) {
    const float v = t.at(c, j, i);
    if (v > best_v) {
      best_v = v;
      best = c;
    }
  }
  return best;
}

}  // namespace

double pixel_accuracy(const Tensor3& pred, const Tensor3& ref) {
  if (pred.height != ref.height || pred.width != ref.width)
    throw InvalidInputError("pixel_accuracy: spatial dims differ");
  if (ref.channels != 1 && ref.channels != pred.channels)
    throw InvalidInputError("pixel_accuracy: reference channels must be 1 (labels) or match");

  std::int64_t hits = 0;
  for (int j = 0; j < pred.height; ++j) {
    for (int i = 0; i < pred.width; ++i) {
      const int p = argmax_channel(pred, j, i);
      const int r = ref.channels == 1 ? static_cast<int>(ref.at(0, j, i))
                                      : argmax_channel(ref, j, i);
      hits += p == r;
    }
  }
  return static_cast<double>(hits) / (static_cast<std::int64_t>(pred.height) * pred.width);
}

double mse(const Tensor3& a, const Tensor3& b) {
  if (!a.same_shape(b)) throw InvalidInputError("mse: shapes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.data.size());
}

double loss_value(LossMetric metric, const Tensor3& pred, const Tensor3& ref) {
  return metric == LossMetric::Mse ? mse(pred, ref) : 1.0 - pixel_accuracy(pred, ref);
}

std::vector<Tensor3> make_reference(const DenseNetwork& net, const std::vector<Tensor3>& frames) {
  std::vector<Tensor3> ref;
  ref.reserve(frames.size());
  for (const Tensor3& f : frames) ref.push_back(net.forward(f));
  return ref;
}

namespace {

// Aggregated final-frame loss of a threshold vector over all sequences.
double eval_taus(const CBNetwork& prototype, const std::vector<float>& taus,
                 const std::vector<EvalSequence>& sequences, const CalibConfig& cfg) {
  double mean = 0.0;
  double worst = 0.0;
  for (const EvalSequence& seq : sequences) {
    if (seq.frames.empty() || seq.reference.size() != seq.frames.size())
      throw InvalidInputError("calibration sequence needs frames and per-frame references");
    CBNetwork net = prototype;
    net.set_thresholds(taus);
    net.reset();
    StatsConfig quiet;
    quiet.timing = false;
    for (const Tensor3& f : seq.frames) net.forward_frame(f, quiet, nullptr);
    const double loss = loss_value(cfg.metric, net.output(), seq.reference.back());
    mean += loss;
    worst = std::max(worst, loss);
  }
  mean /= static_cast<double>(sequences.size());
  return cfg.aggregation == LossAggregation::Mean ? mean : worst;
}

}  // namespace

CalibResult select_thresholds(const CBNetwork& net, const std::vector<EvalSequence>& sequences,
                              const CalibConfig& cfg) {
  if (cfg.initial_tau <= 0.0) throw InvalidInputError("calibration: initial_tau must be > 0");
  if (cfg.growth_factor <= 1.0)
    throw InvalidInputError("calibration: growth_factor must be > 1");
  if (cfg.per_layer_budget < 0.0)
    throw InvalidInputError("calibration: per_layer_budget must be >= 0");
  if (cfg.max_steps < 1) throw InvalidInputError("calibration: max_steps must be >= 1");
  if (sequences.empty()) throw InvalidInputError("calibration: no evaluation sequences");

  const int n_conv = net.conv_layer_count();
  if (!cfg.budget_overrides.empty() &&
      static_cast<int>(cfg.budget_overrides.size()) != n_conv)
    throw InvalidInputError("calibration: budget override count != conv layer count");

  CalibResult result;
  result.taus.assign(n_conv, 0.0f);
  result.hit_cap.assign(n_conv, false);

  for (int layer = 0; layer < n_conv; ++layer) {
    const double budget =
        cfg.budget_overrides.empty() ? cfg.per_layer_budget : cfg.budget_overrides[layer];
    const double base_loss = eval_taus(net, result.taus, sequences, cfg);

    float selected = 0.0f;
    double tau = cfg.initial_tau;
    bool capped = true;
    for (int step = 0; step < cfg.max_steps; ++step) {
      std::vector<float> candidate = result.taus;
      candidate[layer] = static_cast<float>(tau);
      const double loss = eval_taus(net, candidate, sequences, cfg);
      result.trace.push_back({layer, tau, loss});
      if (loss - base_loss > budget) {
        capped = false;
        break;
      }
      selected = static_cast<float>(tau);
      tau *= cfg.growth_factor;
    }
    result.taus[layer] = selected;
    result.hit_cap[layer] = capped;
  }
  return result;
}

std::vector<TradeoffRow> sweep_threshold_factor(const CBNetwork& net,
                                                const std::vector<float>& base_tau,
                                                const std::vector<double>& factors,
                                                const std::vector<EvalSequence>& sequences,
                                                LossMetric metric) {
  if (static_cast<int>(base_tau.size()) != net.conv_layer_count())
    throw InvalidInputError("sweep: expected one base tau per conv layer");
  for (std::size_t i = 0; i < factors.size(); ++i) {
    if (factors[i] < 0.0) throw InvalidInputError("sweep: factors must be >= 0");
    if (i > 0 && factors[i] <= factors[i - 1])
      throw InvalidInputError("sweep: factors must be strictly increasing");
  }
  if (sequences.empty()) throw InvalidInputError("sweep: no evaluation sequences");

  std::vector<TradeoffRow> curve;
  curve.reserve(factors.size());
  for (double f : factors) {
    std::vector<float> taus(base_tau.size());
    for (std::size_t i = 0; i < base_tau.size(); ++i)
      taus[i] = static_cast<float>(f * base_tau[i]);

    TradeoffRow row;
    row.factor = f;
    double loss_sum = 0.0;
    std::int64_t loss_count = 0;
    for (const EvalSequence& seq : sequences) {
      if (seq.reference.size() != seq.frames.size())
        throw InvalidInputError("sweep sequence needs per-frame references");
      CBNetwork run = net;
      run.set_thresholds(taus);
      run.reset();
      SequenceResult r = forward_sequence(run, seq.frames, &seq.reference, metric);
      for (const FrameStats& fs : r.stats.frames) {
        if (fs.frame < 2) continue;
        loss_sum += fs.loss;
        ++loss_count;
      }
      row.total_eff_ops += r.stats.total_eff_ops(2);
      row.wall_ns += r.stats.total_wall_ns();
    }
    row.loss = loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : 0.0;
    curve.push_back(row);
  }
  return curve;
}

}  // namespace cbi
