#pragma once

#include <optional>
#include <string>

#include "cbi/layers.hpp"

namespace cbi {

enum class LayerKind { Conv, Act, Pool, Add, Concat };

struct Shape3 {
  int channels = 0;
  int height = 0;
  int width = 0;
  bool operator==(const Shape3&) const = default;
  std::int64_t pixels() const { return static_cast<std::int64_t>(height) * width; }
  std::int64_t values() const { return static_cast<std::int64_t>(channels) * height * width; }
};

// One row of a network description. `from` names producer layers; when empty
// the row consumes the previous row (the network input for row 0). Conv rows
// may fuse ReLU directly; standalone Act rows are absorbed into their
// producing conv on CB conversion.
struct LayerDesc {
  LayerKind kind = LayerKind::Conv;
  std::string name;
  std::vector<std::string> from;

  ConvSpec conv;            // Conv
  bool fuse_relu = false;   // Conv

  int pool_size = 0;        // Pool
  int pool_stride = 0;
  int pool_out_h = 0;       // 0 = floor formula
  int pool_out_w = 0;
};

struct NetworkSpec {
  int in_channels = 0;
  int in_height = 0;
  int in_width = 0;
  std::vector<LayerDesc> layers;
};

// Resolved topology: per-layer producer ids (-1 = network input) and output
// shapes. Produced by resolve(); throws InvalidInputError naming the offending
// layer when dims do not chain.
struct ResolvedTopology {
  std::vector<std::vector<int>> inputs;
  std::vector<Shape3> shape;
};

ResolvedTopology resolve(const NetworkSpec& spec);

// Dense reference pipeline over a validated spec; the oracle every
// change-based path is checked against.
class DenseNetwork {
 public:
  explicit DenseNetwork(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }
  const ResolvedTopology& topology() const { return topo_; }

  Tensor3 forward(const Tensor3& input) const;
  std::vector<Tensor3> forward_all(const Tensor3& input) const;

 private:
  NetworkSpec spec_;
  ResolvedTopology topo_;
};

DenseNetwork build_network(NetworkSpec spec);

struct BatchNormParams {
  std::vector<float> gamma;
  std::vector<float> beta;
  std::vector<float> mean;
  std::vector<float> var;
  float eps = 1e-5f;
};

// Absorb a batch-norm into the convolution:
// w' = w * gamma/sqrt(var+eps), b' = (b - mean) * gamma/sqrt(var+eps) + beta.
ConvSpec fold_batchnorm(const ConvSpec& conv, const BatchNormParams& bn);

// ---------------------------------------------------------------------------
// Change-based network
// ---------------------------------------------------------------------------

struct StatsConfig {
  bool record_worst_case = false;
  bool record_maps = false;
  bool estimate_fg = false;
  bool timing = true;
};

struct LayerFrameStats {
  std::string layer;
  std::int64_t changed_px = 0;
  std::int64_t total_px = 0;
  double change_frac = 0.0;
  std::int64_t eff_ops = 0;
  std::int64_t wall_ns = 0;
  std::int64_t propagated_px = -1;  // -1 = not recorded
  std::int64_t fg_sp_ops = -1;
  std::int64_t fg_fm_ops = -1;
  ChangeMap map;             // only when record_maps
  ChangeMap worst_case_map;  // only when record_maps && record_worst_case
};

struct FrameStats {
  int frame = 0;  // 1-based; frame 1 is the bootstrap full update
  bool has_loss = false;
  double loss = 0.0;
  std::vector<LayerFrameStats> layers;
};

struct RunStats {
  std::vector<FrameStats> frames;

  std::int64_t total_eff_ops(int first_frame = 1) const;
  std::int64_t total_wall_ns() const;
  // Deterministic fields only (wall times ignored).
  bool same_counts(const RunStats& other) const;
};

// A CB node mirrors one non-Act row of the source spec.
struct CBNode {
  LayerKind kind = LayerKind::Conv;
  std::string name;
  std::vector<int> inputs;  // node ids, -1 = network input
  Shape3 out_shape;
  CBConvLayer conv;     // Conv
  CBPoolLayer pool;     // Pool
  Tensor3 prev_output;  // Add/Concat
};

// Per-stream change-based pipeline. Owns all layer state; copying a CBNetwork
// yields an independent stream sharing nothing.
class CBNetwork {
 public:
  CBNetwork() = default;

  const std::vector<CBNode>& nodes() const { return nodes_; }
  std::vector<CBNode>& nodes() { return nodes_; }
  Shape3 input_shape() const { return in_shape_; }
  Shape3 output_shape() const;
  int conv_layer_count() const;

  std::vector<float> thresholds() const;
  void set_thresholds(const std::vector<float>& taus);

  // Zero all states; the next frame is treated as a bootstrap full update.
  void reset();

  // Processes one frame, returns the final node's retained output. Stats for
  // the frame are appended to `frame_stats` when given.
  const Tensor3& forward_frame(const Tensor3& frame, const StatsConfig& cfg = {},
                               FrameStats* frame_stats = nullptr);

  // The final node's retained output (last processed frame's result).
  const Tensor3& output() const;

  friend CBNetwork convert_to_cb(const DenseNetwork& net, const std::vector<float>& taus,
                                 const std::vector<DetectionPolicy>* policies,
                                 DetectMode mode);

 private:
  std::vector<CBNode> nodes_;
  Shape3 in_shape_;
  bool bootstrap_ = true;
};

// Build the CB pipeline: Act rows are absorbed into their producing conv,
// conv rows get one threshold each (in row order), policies default to
// detect. Throws InvalidInputError for negative taus or count mismatches and
// ConfigError for unsupported policy wiring.
CBNetwork convert_to_cb(const DenseNetwork& net, const std::vector<float>& taus,
                        const std::vector<DetectionPolicy>* policies = nullptr,
                        DetectMode mode = DetectMode::ClosedLoop);

enum class LossMetric { Mse, PixelAccuracyDelta };

struct SequenceResult {
  std::vector<Tensor3> outputs;
  RunStats stats;
};

// Runs frames in order carrying state. When `reference` is given (one tensor
// per frame) the per-frame loss is recorded under `metric`.
SequenceResult forward_sequence(CBNetwork& net, const std::vector<Tensor3>& frames,
                                const std::vector<Tensor3>* reference = nullptr,
                                LossMetric metric = LossMetric::Mse,
                                const StatsConfig& cfg = {});

}  // namespace cbi
