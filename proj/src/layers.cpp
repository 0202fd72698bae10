#include "cbi/layers.hpp"

#include <algorithm>
#include <string>

#include "cbi/analysis.hpp"

namespace cbi {

void update_output(Tensor3& prev_output, const Matrix& y_partial, const IndexList& indexes,
                   const std::vector<float>& bias, bool fuse_relu) {
  if (y_partial.cols != static_cast<int>(indexes.size()))
    throw InvalidInputError("update_output: " + std::to_string(y_partial.cols) +
                            " columns vs " + std::to_string(indexes.size()) + " indexes");
  if (y_partial.rows != prev_output.channels)
    throw InvalidInputError("update_output: row/channel mismatch");
  if (bias.size() != static_cast<std::size_t>(y_partial.rows))
    throw InvalidInputError("update_output: bias length mismatch");
  for (const PixelIndex& p : indexes)
    if (p.row < 0 || p.row >= prev_output.height || p.col < 0 || p.col >= prev_output.width)
      throw InvalidInputError("update_output: index outside the output tensor");

  for (int o = 0; o < y_partial.rows; ++o) {
    const float b = bias[o];
    for (int k = 0; k < y_partial.cols; ++k) {
      float v = y_partial.at(o, k) + b;
      if (fuse_relu) v = std::max(v, 0.0f);
      prev_output.at(o, indexes[k].row, indexes[k].col) = v;
    }
  }
}

CBConvLayer::CBConvLayer(ConvSpec s, float tau_, DetectionPolicy policy_, bool fuse_relu_,
                         DetectMode mode_, int in_height, int in_width)
    : spec(std::move(s)),
      tau(tau_),
      policy(policy_),
      mode(mode_),
      fuse_relu(fuse_relu_),
      in_h(in_height),
      in_w(in_width) {
  spec.validate();
  if (tau < 0.0f) throw InvalidInputError("CBConvLayer: tau must be >= 0");
  out_h = spec.output_height(in_h);
  out_w = spec.output_width(in_w);
  kmat = make_kernel_matrix(spec);
  prev_output = Tensor3(spec.out_channels, out_h, out_w);
  if (policy == DetectionPolicy::Detect) state.state = Tensor3(spec.in_channels, in_h, in_w);
  if (policy == DetectionPolicy::Reuse1x1 &&
      !(spec.kernel_h == 1 && spec.kernel_w == 1 && spec.stride == 1 && out_h == in_h &&
        out_w == in_w))
    throw ConfigError("reuse_1x1 policy requires a 1x1 stride-1 shape-preserving layer");
}

ConvForwardResult CBConvLayer::forward(const Tensor3& x, const UpstreamChange& upstream,
                                       const ConvForwardOptions& opt) {
  if (x.channels != spec.in_channels || x.height != in_h || x.width != in_w)
    throw InvalidInputError("CBConvLayer: input shape mismatch");

  ConvForwardResult res;
  const Tensor3* column_src = &x;
  bool fg_recorded = false;

  if (opt.force_full_update) {
    if (policy == DetectionPolicy::Detect) {
      state.state = x;
      column_src = &state.state;
    }
    res.out_map = ChangeMap(out_h, out_w);
    res.out_map.fill(true);
    res.indexes = extract_indexes(res.out_map);
  } else {
    switch (policy) {
      case DetectionPolicy::Detect: {
        if (opt.estimate_fg) {
          FgEstimate fg = estimate_fg_ops(x, state.state, spec, tau);
          res.fg_sp_ops = fg.fg_sp_ops;
          res.fg_fm_ops = fg.fg_fm_ops;
          fg_recorded = true;
        }
        ChangeMap m = detect_changes(x, state, tau, mode);
        res.out_map = dilate_change_map(m, spec);
        res.indexes = extract_indexes(res.out_map);
        column_src = (mode == DetectMode::ClosedLoop) ? &state.state : &x;
        break;
      }
      case DetectionPolicy::Propagate: {
        if (upstream.map == nullptr)
          throw ConfigError("propagate policy requires an upstream change map");
        if (upstream.map->height != in_h || upstream.map->width != in_w)
          throw InvalidInputError("propagate: upstream map not in this layer's input frame");
        res.out_map = propagate_changes(*upstream.map, spec);
        res.indexes = extract_indexes(res.out_map);
        break;
      }
      case DetectionPolicy::Reuse1x1: {
        if (upstream.map == nullptr || upstream.indexes == nullptr)
          throw ConfigError("reuse_1x1 policy requires upstream map and indexes");
        if (upstream.map->height != out_h || upstream.map->width != out_w)
          throw InvalidInputError("reuse_1x1: upstream map shape mismatch");
        res.out_map = *upstream.map;
        res.indexes = *upstream.indexes;
        break;
      }
    }
  }

  if (opt.record_worst_case) {
    if (upstream.map != nullptr) {
      res.worst_case_map = propagate_changes(*upstream.map, spec);
      res.propagated_px = res.worst_case_map.count();
    } else {
      // First layer: no upstream map, the detected set is its own worst case.
      res.worst_case_map = res.out_map;
      res.propagated_px = static_cast<std::int64_t>(res.indexes.size());
    }
  }

  ColumnMatrix columns = im2col(*column_src, spec, &res.indexes);
  Matrix y = gemm(kmat, columns);
  update_output(prev_output, y, res.indexes, spec.bias, fuse_relu);

  res.eff_ops = ops_per_pixel() * static_cast<std::int64_t>(res.indexes.size());
  if (opt.estimate_fg && !fg_recorded) {
    // Full updates and map-reusing policies have no per-channel detection data;
    // the coarse count is the estimate.
    res.fg_sp_ops = res.eff_ops;
    res.fg_fm_ops = res.eff_ops;
  }
  return res;
}

CBPoolLayer::CBPoolLayer(int size_, int stride_, int channels_, int in_height, int in_width,
                         int out_height, int out_width)
    : size(size_),
      stride(stride_),
      channels(channels_),
      in_h(in_height),
      in_w(in_width),
      out_h(out_height),
      out_w(out_width) {
  if (size < 1 || stride < 1) throw InvalidInputError("CBPoolLayer: size/stride must be >= 1");
  if ((out_h - 1) * stride >= in_h || (out_w - 1) * stride >= in_w || out_h < 1 || out_w < 1)
    throw InvalidInputError("CBPoolLayer: output dims leave an empty window");
  prev_output = Tensor3(channels, out_h, out_w);
}

PoolForwardResult CBPoolLayer::forward(const Tensor3& x, const UpstreamChange& upstream,
                                       bool force_full_update) {
  if (x.channels != channels || x.height != in_h || x.width != in_w)
    throw InvalidInputError("CBPoolLayer: input shape mismatch");

  PoolForwardResult res;
  if (force_full_update) {
    res.out_map = ChangeMap(out_h, out_w);
    res.out_map.fill(true);
  } else {
    if (upstream.map == nullptr)
      throw ConfigError("change-based pooling requires an upstream change map");
    if (upstream.map->height != in_h || upstream.map->width != in_w)
      throw InvalidInputError("cbpool: upstream map not in this layer's input frame");
    res.out_map = dilate_window(*upstream.map, size, size, stride, 0, out_h, out_w);
  }
  res.indexes = extract_indexes(res.out_map);

  for (const PixelIndex& p : res.indexes) {
    const int j0 = p.row * stride;
    const int j1 = std::min(j0 + size, in_h);
    const int i0 = p.col * stride;
    const int i1 = std::min(i0 + size, in_w);
    for (int c = 0; c < channels; ++c) {
      float m = x.at(c, j0, i0);
      for (int j = j0; j < j1; ++j)
        for (int i = i0; i < i1; ++i) m = std::max(m, x.at(c, j, i));
      prev_output.at(c, p.row, p.col) = m;
    }
  }
  return res;
}

}  // namespace cbi
