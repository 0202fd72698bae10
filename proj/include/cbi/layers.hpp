#pragma once

#include "cbi/change.hpp"
#include "cbi/dense.hpp"

namespace cbi {

enum class DetectionPolicy { Detect, Propagate, Reuse1x1 };

// Scatter the GEMM result into the retained output at the indexed pixels,
// adding bias and applying ReLU there when fused. All other pixels are left
// bit-identical.
void update_output(Tensor3& prev_output, const Matrix& y_partial, const IndexList& indexes,
                   const std::vector<float>& bias, bool fuse_relu);

struct UpstreamChange {
  const ChangeMap* map = nullptr;
  const IndexList* indexes = nullptr;
};

struct ConvForwardOptions {
  bool force_full_update = false;  // bootstrap: mark every output pixel
  bool record_worst_case = false;  // also compute the worst-case propagated map
  bool estimate_fg = false;        // record FG-SP / FG-FM analytic op estimates
};

struct ConvForwardResult {
  ChangeMap out_map;
  IndexList indexes;
  std::int64_t eff_ops = 0;
  ChangeMap worst_case_map;          // only filled when recorded
  std::int64_t propagated_px = -1;   // -1 = not recorded
  std::int64_t fg_sp_ops = -1;
  std::int64_t fg_fm_ops = -1;
};

// Change-based convolution layer. A forward pass runs change detection (per
// policy), index extraction, partial column generation, GEMM against the
// flattened filter matrix, and the in-place output update with optional fused
// ReLU.
//
// Detect policy keeps a closed-loop input state; prev_output is at all times
// the convolution of that state. Propagate/Reuse1x1 read the current input
// directly and derive their update set from the upstream map.
struct CBConvLayer {
  ConvSpec spec;
  KernelMatrix kmat;
  float tau = 0.0f;
  DetectionPolicy policy = DetectionPolicy::Detect;
  DetectMode mode = DetectMode::ClosedLoop;
  bool fuse_relu = false;
  int in_h = 0, in_w = 0;
  int out_h = 0, out_w = 0;
  InputState state;     // detect policy only
  Tensor3 prev_output;

  CBConvLayer() = default;
  CBConvLayer(ConvSpec s, float tau_, DetectionPolicy policy_, bool fuse_relu_,
              DetectMode mode_, int in_height, int in_width);

  ConvForwardResult forward(const Tensor3& x, const UpstreamChange& upstream,
                            const ConvForwardOptions& opt = {});

  // 2 ops per MAC, bias excluded.
  std::int64_t ops_per_pixel() const {
    return 2ll * spec.out_channels * spec.in_channels * spec.kernel_h * spec.kernel_w;
  }
  std::int64_t dense_ops() const { return ops_per_pixel() * out_h * out_w; }
};

struct PoolForwardResult {
  ChangeMap out_map;
  IndexList indexes;
};

// Change-based max pooling. No thresholded detection of its own: the update
// set is the upstream map dilated over the pooling window.
struct CBPoolLayer {
  int size = 0, stride = 0;
  int channels = 0;
  int in_h = 0, in_w = 0;
  int out_h = 0, out_w = 0;
  Tensor3 prev_output;

  CBPoolLayer() = default;
  CBPoolLayer(int size_, int stride_, int channels_, int in_height, int in_width,
              int out_height, int out_width);

  PoolForwardResult forward(const Tensor3& x, const UpstreamChange& upstream,
                            bool force_full_update = false);
};

}  // namespace cbi
