#pragma once

#include "cbi/network.hpp"

namespace cbi {

// Op counts are convolution arithmetic only: 1 multiply-add = 2 ops, bias
// adds, detection compares, pooling maxima and data movement excluded.

std::int64_t conv_dense_ops(const ConvSpec& spec, int out_h, int out_w);
std::int64_t conv_cb_ops(const ConvSpec& spec, std::int64_t changed_output_pixels);

// Per-row dense op counts (0 for non-conv rows).
std::vector<std::int64_t> count_ops_dense(const NetworkSpec& spec);

// Per-row CB op counts of one frame, recomputed from the recorded changed
// pixel counts. Rows are matched to stats entries by layer label.
std::vector<std::int64_t> count_ops_cb(const FrameStats& frame, const NetworkSpec& spec);

struct FgEstimate {
  std::int64_t fg_sp_ops = 0;
  std::int64_t fg_fm_ops = 0;
};

// Analytic op counts for the fine-grained variants, never an execution path.
// Per-channel change maps are the detection comparison without the
// OR-over-channels reduction:
//   FG-SP: 2*C_out*C_in * sum over output pixels of changed taps in their window
//   FG-FM: 2*C_out*kh*kw * sum over output pixels of changed input channels
FgEstimate estimate_fg_ops(const Tensor3& x, const Tensor3& state, const ConvSpec& spec,
                           float tau);

enum class MemMode { Naive, Shared, Cb };

// Counts of stored fp32 values. Act rows are in-place and contribute nothing.
//   naive : intermediates = input + every row output, X = sum of full per-conv
//           X sizes, params = all weights + biases.
//   shared: X = max per-conv X size, intermediates = max over producer/consumer
//           edges of (producer + consumer output) sizes.
//   cb    : shared, plus per-layer previous outputs, per-conv input states,
//           and the largest change map, index list and Y matrix.
struct MemReport {
  std::int64_t intermediate_values = 0;
  std::int64_t x_matrix_values = 0;
  std::int64_t param_values = 0;
  std::int64_t cb_extra_values = 0;
  std::int64_t total_values = 0;
};

MemReport memory_accounting(const NetworkSpec& spec, MemMode mode);

struct LayerChangeStats {
  std::string layer;
  double change_fraction = 0.0;   // changed / total output pixels
  double reduction_ratio = 1.0;   // worst-case propagated / detected
};

// Aggregated over the post-bootstrap frames. Ratios need a run recorded with
// StatsConfig::record_worst_case; without it they stay at 1.
std::vector<LayerChangeStats> change_stats(const RunStats& run);

struct LayerOps {
  std::string layer;
  std::int64_t dense_ops = 0;
  std::int64_t cb_ops = 0;
  std::int64_t fg_sp_ops = 0;
  std::int64_t fg_fm_ops = 0;
};

struct OpReport {
  std::vector<LayerOps> layers;
  LayerOps totals;
};

// Per-conv-layer per-frame average op counts over the post-bootstrap frames
// (all frames when the run has only the bootstrap frame). FG columns fall back
// to the coarse count when the run did not record estimates.
OpReport make_op_report(const NetworkSpec& spec, const RunStats& run);

}  // namespace cbi
