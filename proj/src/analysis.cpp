#include "cbi/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>

namespace cbi {

std::int64_t conv_dense_ops(const ConvSpec& spec, int out_h, int out_w) {
  return 2ll * out_h * out_w * spec.out_channels * spec.in_channels * spec.kernel_h *
         spec.kernel_w;
}

std::int64_t conv_cb_ops(const ConvSpec& spec, std::int64_t changed_output_pixels) {
  return 2ll * changed_output_pixels * spec.out_channels * spec.in_channels * spec.kernel_h *
         spec.kernel_w;
}

std::vector<std::int64_t> count_ops_dense(const NetworkSpec& spec) {
  const ResolvedTopology topo = resolve(spec);
  std::vector<std::int64_t> ops(spec.layers.size(), 0);
  for (std::size_t i = 0; i < spec.layers.size(); ++i)
    if (spec.layers[i].kind == LayerKind::Conv)
      ops[i] = conv_dense_ops(spec.layers[i].conv, topo.shape[i].height, topo.shape[i].width);
  return ops;
}

std::vector<std::int64_t> count_ops_cb(const FrameStats& frame, const NetworkSpec& spec) {
  std::unordered_map<std::string, std::int64_t> changed;
  for (const LayerFrameStats& l : frame.layers) changed[l.layer] = l.changed_px;

  std::vector<std::int64_t> ops(spec.layers.size(), 0);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerDesc& d = spec.layers[i];
    if (d.kind != LayerKind::Conv) continue;
    const std::string label = d.name.empty() ? "L" + std::to_string(i + 1) : d.name;
    auto it = changed.find(label);
    if (it == changed.end())
      throw InvalidInputError("count_ops_cb: no stats row for layer '" + label + "'");
    ops[i] = conv_cb_ops(d.conv, it->second);
  }
  return ops;
}

FgEstimate estimate_fg_ops(const Tensor3& x, const Tensor3& state, const ConvSpec& spec,
                           float tau) {
  spec.validate();
  if (!x.same_shape(state) || x.channels != spec.in_channels)
    throw InvalidInputError("estimate_fg_ops: frame/state/spec shape mismatch");
  if (tau < 0.0f) throw InvalidInputError("estimate_fg_ops: tau must be >= 0");

  // Per-channel maps: the detection comparison without the OR reduction.
  const int plane = x.height * x.width;
  std::vector<std::uint8_t> mc(x.data.size());
  for (std::size_t i = 0; i < x.data.size(); ++i)
    mc[i] = std::fabs(x.data[i] - state.data[i]) > tau;

  const int oh = spec.output_height(x.height);
  const int ow = spec.output_width(x.width);
  const int s = spec.stride, p = spec.padding;

  std::int64_t changed_taps = 0;
  std::int64_t changed_channels = 0;
  for (int jo = 0; jo < oh; ++jo) {
    for (int io = 0; io < ow; ++io) {
      for (int c = 0; c < spec.in_channels; ++c) {
        bool channel_hit = false;
        for (int kj = 0; kj < spec.kernel_h; ++kj) {
          const int jj = jo * s - p + kj;
          if (jj < 0 || jj >= x.height) continue;
          for (int ki = 0; ki < spec.kernel_w; ++ki) {
            const int ii = io * s - p + ki;
            if (ii < 0 || ii >= x.width) continue;
            if (mc[static_cast<std::size_t>(c) * plane + jj * x.width + ii]) channel_hit = true;
          }
        }
        changed_channels += channel_hit;
      }
      // Spatial taps use the OR-over-channels map.
      for (int kj = 0; kj < spec.kernel_h; ++kj) {
        const int jj = jo * s - p + kj;
        if (jj < 0 || jj >= x.height) continue;
        for (int ki = 0; ki < spec.kernel_w; ++ki) {
          const int ii = io * s - p + ki;
          if (ii < 0 || ii >= x.width) continue;
          bool any = false;
          for (int c = 0; c < spec.in_channels && !any; ++c)
            any = mc[static_cast<std::size_t>(c) * plane + jj * x.width + ii];
          changed_taps += any;
        }
      }
    }
  }

  FgEstimate fg;
  fg.fg_sp_ops = 2ll * spec.out_channels * spec.in_channels * changed_taps;
  fg.fg_fm_ops = 2ll * spec.out_channels * spec.kernel_h * spec.kernel_w * changed_channels;
  return fg;
}

MemReport memory_accounting(const NetworkSpec& spec, MemMode mode) {
  const ResolvedTopology topo = resolve(spec);
  const int n = static_cast<int>(spec.layers.size());
  const Shape3 in_shape{spec.in_channels, spec.in_height, spec.in_width};
  auto shape_of = [&](int id) { return id < 0 ? in_shape : topo.shape[id]; };

  // Act rows run in place; their tensor is the producer's.
  auto through_act = [&](int id) {
    while (id >= 0 && spec.layers[id].kind == LayerKind::Act) id = topo.inputs[id][0];
    return id;
  };

  MemReport r;
  std::int64_t x_naive = 0, x_max = 0;
  std::int64_t inter_naive = in_shape.values();
  std::int64_t pair_max = 0;
  std::int64_t state_values = 0, prev_values = 0;
  std::int64_t map_max = in_shape.pixels(), index_max = 0, y_max = 0;

  for (int i = 0; i < n; ++i) {
    const LayerDesc& d = spec.layers[i];
    if (d.kind == LayerKind::Act) continue;
    const Shape3 out = topo.shape[i];
    inter_naive += out.values();
    prev_values += out.values();
    map_max = std::max(map_max, out.pixels());
    index_max = std::max(index_max, out.pixels());

    for (int id : topo.inputs[i]) {
      const Shape3 src = shape_of(through_act(id));
      pair_max = std::max(pair_max, src.values() + out.values());
    }

    if (d.kind == LayerKind::Conv) {
      r.param_values += static_cast<std::int64_t>(d.conv.weight_count()) + d.conv.out_channels;
      const Shape3 src = shape_of(through_act(topo.inputs[i][0]));
      const std::int64_t x_size = static_cast<std::int64_t>(d.conv.in_channels) *
                                  d.conv.kernel_h * d.conv.kernel_w * out.pixels();
      x_naive += x_size;
      x_max = std::max(x_max, x_size);
      state_values += src.values();
      y_max = std::max(y_max, static_cast<std::int64_t>(out.channels) * out.pixels());
    }
  }

  switch (mode) {
    case MemMode::Naive:
      r.intermediate_values = inter_naive;
      r.x_matrix_values = x_naive;
      break;
    case MemMode::Shared:
      r.intermediate_values = pair_max;
      r.x_matrix_values = x_max;
      break;
    case MemMode::Cb:
      r.intermediate_values = pair_max;
      r.x_matrix_values = x_max;
      r.cb_extra_values = prev_values + state_values + map_max + index_max + y_max;
      break;
  }
  r.total_values =
      r.intermediate_values + r.x_matrix_values + r.param_values + r.cb_extra_values;
  return r;
}

std::vector<LayerChangeStats> change_stats(const RunStats& run) {
  std::vector<LayerChangeStats> out;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::int64_t> changed, total, propagated;

  // The bootstrap frame is a forced full update; skip it when more follow.
  const bool has_steady = run.frames.size() > 1;
  for (const FrameStats& f : run.frames) {
    if (has_steady && f.frame < 2) continue;
    for (const LayerFrameStats& l : f.layers) {
      auto [it, fresh] = index.emplace(l.layer, out.size());
      if (fresh) {
        out.push_back({l.layer, 0.0, 1.0});
        changed.push_back(0);
        total.push_back(0);
        propagated.push_back(0);
      }
      const std::size_t k = it->second;
      changed[k] += l.changed_px;
      total[k] += l.total_px;
      propagated[k] += l.propagated_px >= 0 ? l.propagated_px : l.changed_px;
    }
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k].change_fraction =
        total[k] > 0 ? static_cast<double>(changed[k]) / static_cast<double>(total[k]) : 0.0;
    out[k].reduction_ratio =
        changed[k] > 0 ? static_cast<double>(propagated[k]) / static_cast<double>(changed[k])
                       : 1.0;
  }
  return out;
}

OpReport make_op_report(const NetworkSpec& spec, const RunStats& run) {
  const ResolvedTopology topo = resolve(spec);

  struct Acc {
    std::int64_t cb = 0, sp = 0, fm = 0, frames = 0;
  };
  std::unordered_map<std::string, Acc> acc;
  const bool has_steady = run.frames.size() > 1;
  for (const FrameStats& f : run.frames) {
    if (has_steady && f.frame < 2) continue;
    for (const LayerFrameStats& l : f.layers) {
      Acc& a = acc[l.layer];
      a.cb += l.eff_ops;
      a.sp += l.fg_sp_ops >= 0 ? l.fg_sp_ops : l.eff_ops;
      a.fm += l.fg_fm_ops >= 0 ? l.fg_fm_ops : l.eff_ops;
      ++a.frames;
    }
  }

  OpReport report;
  report.totals.layer = "total";
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerDesc& d = spec.layers[i];
    if (d.kind != LayerKind::Conv) continue;
    const std::string label = d.name.empty() ? "L" + std::to_string(i + 1) : d.name;
    auto it = acc.find(label);
    if (it == acc.end())
      throw InvalidInputError("op report: no stats rows for layer '" + label + "'");
    const Acc& a = it->second;
    LayerOps ops;
    ops.layer = label;
    ops.dense_ops = conv_dense_ops(d.conv, topo.shape[i].height, topo.shape[i].width);
    ops.cb_ops = a.cb / a.frames;
    ops.fg_sp_ops = a.sp / a.frames;
    ops.fg_fm_ops = a.fm / a.frames;
    report.layers.push_back(ops);
    report.totals.dense_ops += ops.dense_ops;
    report.totals.cb_ops += ops.cb_ops;
    report.totals.fg_sp_ops += ops.fg_sp_ops;
    report.totals.fg_fm_ops += ops.fg_fm_ops;
  }
  return report;
}

}  // namespace cbi
