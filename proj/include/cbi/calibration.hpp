#pragma once

#include "cbi/network.hpp"

namespace cbi {

// Fraction of pixels whose argmax-over-channels class matches. When the
// reference has a single channel its values are read as class ids directly.
double pixel_accuracy(const Tensor3& pred, const Tensor3& ref);

double mse(const Tensor3& a, const Tensor3& b);

// Loss under a metric: Mse -> mse, PixelAccuracyDelta -> 1 - pixel_accuracy.
double loss_value(LossMetric metric, const Tensor3& pred, const Tensor3& ref);

// A calibration/evaluation sequence: frames plus one reference output per
// frame (typically the dense pipeline's outputs on the same frames).
struct EvalSequence {
  std::vector<Tensor3> frames;
  std::vector<Tensor3> reference;
};

std::vector<Tensor3> make_reference(const DenseNetwork& net, const std::vector<Tensor3>& frames);

enum class LossAggregation { Mean, Worst };

struct CalibConfig {
  double initial_tau = 0.01;   // > 0
  double growth_factor = 1.1;  // > 1
  double per_layer_budget = 0.0;
  std::vector<double> budget_overrides;  // optional, one per conv layer
  LossMetric metric = LossMetric::Mse;
  LossAggregation aggregation = LossAggregation::Mean;
  int max_steps = 64;
};

struct CalibTracePoint {
  int layer = 0;  // conv layer index, 0-based
  double tau = 0.0;
  double loss = 0.0;  // aggregated sequence loss at this candidate
};

struct CalibResult {
  std::vector<float> taus;
  std::vector<bool> hit_cap;  // true when growth stopped at max_steps, not at the budget
  std::vector<CalibTracePoint> trace;
};

// Layer-by-layer threshold selection: each conv layer's tau grows
// geometrically from initial_tau while the layer's incremental loss (against
// that layer at tau = 0, earlier layers fixed at their selected values) stays
// within its budget; the last non-violating value is kept. Sequences are
// scored by their final frame after a full stateful replay.
CalibResult select_thresholds(const CBNetwork& net, const std::vector<EvalSequence>& sequences,
                              const CalibConfig& cfg);

struct TradeoffRow {
  double factor = 0.0;
  double loss = 0.0;
  std::int64_t total_eff_ops = 0;
  std::int64_t wall_ns = 0;
};

// Joint scaling of a base threshold vector. For each factor every sequence is
// replayed from a reset state; loss is the mean per-frame loss and ops the
// conv-op total, both over post-bootstrap frames. `factors` must be strictly
// increasing.
std::vector<TradeoffRow> sweep_threshold_factor(const CBNetwork& net,
                                                const std::vector<float>& base_tau,
                                                const std::vector<double>& factors,
                                                const std::vector<EvalSequence>& sequences,
                                                LossMetric metric = LossMetric::Mse);

}  // namespace cbi
