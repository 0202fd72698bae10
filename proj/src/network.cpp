#include "cbi/network.hpp"

#include <chrono>
#include <cmath>
#include <string>
#include <unordered_map>

#include "cbi/calibration.hpp"

namespace cbi {

namespace {

std::string layer_label(const LayerDesc& d, int i) {
  return d.name.empty() ? "L" + std::to_string(i + 1) : d.name;
}

std::string where_label(const LayerDesc& d, int i) {
  return "layer " + std::to_string(i) + " (" + layer_label(d, i) + ")";
}

int pool_out_dim(int in_dim, int size, int stride, int explicit_dim, const std::string& where) {
  if (explicit_dim > 0) {
    if ((explicit_dim - 1) * stride >= in_dim)
      throw InvalidInputError(where + ": pool output dim " + std::to_string(explicit_dim) +
                              " leaves an empty window");
    return explicit_dim;
  }
  if (in_dim < size)
    throw InvalidInputError(where + ": pool window larger than input dim " +
                            std::to_string(in_dim));
  return (in_dim - size) / stride + 1;
}

}  // namespace

ResolvedTopology resolve(const NetworkSpec& spec) {
  if (spec.in_channels < 1 || spec.in_height < 1 || spec.in_width < 1)
    throw InvalidInputError("network spec: input resolution must be positive");
  if (spec.layers.empty()) throw InvalidInputError("network spec: no layers");

  const int n = static_cast<int>(spec.layers.size());
  std::unordered_map<std::string, int> by_name;
  for (int i = 0; i < n; ++i) {
    const std::string& name = spec.layers[i].name;
    if (name.empty()) continue;
    if (name == "input" || !by_name.emplace(name, i).second)
      throw InvalidInputError(where_label(spec.layers[i], i) + ": duplicate or reserved name");
  }

  ResolvedTopology topo;
  topo.inputs.resize(n);
  topo.shape.resize(n);
  const Shape3 in_shape{spec.in_channels, spec.in_height, spec.in_width};
  auto shape_of = [&](int id) { return id < 0 ? in_shape : topo.shape[id]; };

  for (int i = 0; i < n; ++i) {
    const LayerDesc& d = spec.layers[i];
    const std::string where = where_label(d, i);

    std::vector<int>& in = topo.inputs[i];
    if (d.from.empty()) {
      in.push_back(i - 1);
    } else {
      for (const std::string& src : d.from) {
        if (src == "input") {
          in.push_back(-1);
          continue;
        }
        auto it = by_name.find(src);
        if (it == by_name.end() || it->second >= i)
          throw InvalidInputError(where + ": unknown or later producer '" + src + "'");
        in.push_back(it->second);
      }
    }

    try {
      switch (d.kind) {
        case LayerKind::Conv: {
          if (in.size() != 1) throw InvalidInputError("conv takes exactly one producer");
          d.conv.validate();
          const Shape3 s = shape_of(in[0]);
          if (s.channels != d.conv.in_channels)
            throw InvalidInputError("expects " + std::to_string(d.conv.in_channels) +
                                    " input channels, producer has " +
                                    std::to_string(s.channels));
          topo.shape[i] = {d.conv.out_channels, d.conv.output_height(s.height),
                           d.conv.output_width(s.width)};
          break;
        }
        case LayerKind::Act: {
          if (in.size() != 1) throw InvalidInputError("act takes exactly one producer");
          topo.shape[i] = shape_of(in[0]);
          break;
        }
        case LayerKind::Pool: {
          if (in.size() != 1) throw InvalidInputError("pool takes exactly one producer");
          if (d.pool_size < 1 || d.pool_stride < 1)
            throw InvalidInputError("pool size/stride must be >= 1");
          const Shape3 s = shape_of(in[0]);
          topo.shape[i] = {s.channels,
                           pool_out_dim(s.height, d.pool_size, d.pool_stride, d.pool_out_h, "h"),
                           pool_out_dim(s.width, d.pool_size, d.pool_stride, d.pool_out_w, "w")};
          break;
        }
        case LayerKind::Add: {
          if (in.size() < 2) throw InvalidInputError("add takes at least two producers");
          const Shape3 s = shape_of(in[0]);
          for (int id : in)
            if (!(shape_of(id) == s)) throw InvalidInputError("add producers differ in shape");
          topo.shape[i] = s;
          break;
        }
        case LayerKind::Concat: {
          if (in.size() < 2) throw InvalidInputError("concat takes at least two producers");
          const Shape3 s = shape_of(in[0]);
          int channels = 0;
          for (int id : in) {
            const Shape3 si = shape_of(id);
            if (si.height != s.height || si.width != s.width)
              throw InvalidInputError("concat producers differ in spatial dims");
            channels += si.channels;
          }
          topo.shape[i] = {channels, s.height, s.width};
          break;
        }
      }
    } catch (const InvalidInputError& e) {
      throw InvalidInputError(where + ": " + e.what());
    }
  }
  return topo;
}

DenseNetwork::DenseNetwork(NetworkSpec spec) : spec_(std::move(spec)), topo_(resolve(spec_)) {}

DenseNetwork build_network(NetworkSpec spec) { return DenseNetwork(std::move(spec)); }

std::vector<Tensor3> DenseNetwork::forward_all(const Tensor3& input) const {
  if (input.channels != spec_.in_channels || input.height != spec_.in_height ||
      input.width != spec_.in_width)
    throw InvalidInputError("dense forward: input resolution mismatch");

  const int n = static_cast<int>(spec_.layers.size());
  std::vector<Tensor3> outs(n);
  auto tensor_of = [&](int id) -> const Tensor3& { return id < 0 ? input : outs[id]; };

  for (int i = 0; i < n; ++i) {
    const LayerDesc& d = spec_.layers[i];
    const std::vector<int>& in = topo_.inputs[i];
    switch (d.kind) {
      case LayerKind::Conv:
        outs[i] = conv2d_dense(tensor_of(in[0]), d.conv);
        if (d.fuse_relu) relu_inplace(outs[i]);
        break;
      case LayerKind::Act:
        outs[i] = relu(tensor_of(in[0]));
        break;
      case LayerKind::Pool:
        outs[i] = maxpool_to(tensor_of(in[0]), d.pool_size, d.pool_stride,
                             topo_.shape[i].height, topo_.shape[i].width);
        break;
      case LayerKind::Add: {
        Tensor3 acc = tensor_of(in[0]);
        for (std::size_t k = 1; k < in.size(); ++k) {
          const Tensor3& t = tensor_of(in[k]);
          for (std::size_t v = 0; v < acc.data.size(); ++v) acc.data[v] += t.data[v];
        }
        outs[i] = std::move(acc);
        break;
      }
      case LayerKind::Concat: {
        const Shape3 s = topo_.shape[i];
        Tensor3 cat(s.channels, s.height, s.width);
        int off = 0;
        for (int id : in) {
          const Tensor3& t = tensor_of(id);
          std::copy(t.data.begin(), t.data.end(),
                    cat.data.begin() + static_cast<std::size_t>(off) * s.height * s.width);
          off += t.channels;
        }
        outs[i] = std::move(cat);
        break;
      }
    }
  }
  return outs;
}

Tensor3 DenseNetwork::forward(const Tensor3& input) const {
  return forward_all(input).back();
}

ConvSpec fold_batchnorm(const ConvSpec& conv, const BatchNormParams& bn) {
  conv.validate();
  const std::size_t n = static_cast<std::size_t>(conv.out_channels);
  if (bn.gamma.size() != n || bn.beta.size() != n || bn.mean.size() != n || bn.var.size() != n)
    throw InvalidInputError("fold_batchnorm: parameter length != conv out_channels");

  ConvSpec out = conv;
  const std::size_t row = conv.weights.size() / n;
  for (std::size_t o = 0; o < n; ++o) {
    const float scale = bn.gamma[o] / std::sqrt(bn.var[o] + bn.eps);
    for (std::size_t k = 0; k < row; ++k) out.weights[o * row + k] *= scale;
    out.bias[o] = (conv.bias[o] - bn.mean[o]) * scale + bn.beta[o];
  }
  return out;
}

// ---------------------------------------------------------------------------

std::int64_t RunStats::total_eff_ops(int first_frame) const {
  std::int64_t total = 0;
  for (const FrameStats& f : frames) {
    if (f.frame < first_frame) continue;
    for (const LayerFrameStats& l : f.layers) total += l.eff_ops;
  }
  return total;
}

std::int64_t RunStats::total_wall_ns() const {
  std::int64_t total = 0;
  for (const FrameStats& f : frames)
    for (const LayerFrameStats& l : f.layers) total += l.wall_ns;
  return total;
}

bool RunStats::same_counts(const RunStats& other) const {
  if (frames.size() != other.frames.size()) return false;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const FrameStats& a = frames[i];
    const FrameStats& b = other.frames[i];
    if (a.frame != b.frame || a.has_loss != b.has_loss || a.loss != b.loss ||
        a.layers.size() != b.layers.size())
      return false;
    for (std::size_t k = 0; k < a.layers.size(); ++k) {
      const LayerFrameStats& x = a.layers[k];
      const LayerFrameStats& y = b.layers[k];
      if (x.layer != y.layer || x.changed_px != y.changed_px || x.total_px != y.total_px ||
          x.eff_ops != y.eff_ops || x.propagated_px != y.propagated_px ||
          x.fg_sp_ops != y.fg_sp_ops || x.fg_fm_ops != y.fg_fm_ops)
        return false;
    }
  }
  return true;
}

Shape3 CBNetwork::output_shape() const { return nodes_.back().out_shape; }

int CBNetwork::conv_layer_count() const {
  int n = 0;
  for (const CBNode& node : nodes_) n += node.kind == LayerKind::Conv;
  return n;
}

std::vector<float> CBNetwork::thresholds() const {
  std::vector<float> taus;
  for (const CBNode& node : nodes_)
    if (node.kind == LayerKind::Conv) taus.push_back(node.conv.tau);
  return taus;
}

void CBNetwork::set_thresholds(const std::vector<float>& taus) {
  if (static_cast<int>(taus.size()) != conv_layer_count())
    throw InvalidInputError("set_thresholds: expected one tau per conv layer");
  std::size_t k = 0;
  for (CBNode& node : nodes_) {
    if (node.kind != LayerKind::Conv) continue;
    if (taus[k] < 0.0f) throw InvalidInputError("set_thresholds: tau must be >= 0");
    node.conv.tau = taus[k++];
  }
}

void CBNetwork::reset() {
  for (CBNode& node : nodes_) {
    switch (node.kind) {
      case LayerKind::Conv:
        std::fill(node.conv.prev_output.data.begin(), node.conv.prev_output.data.end(), 0.0f);
        std::fill(node.conv.state.state.data.begin(), node.conv.state.state.data.end(), 0.0f);
        break;
      case LayerKind::Pool:
        std::fill(node.pool.prev_output.data.begin(), node.pool.prev_output.data.end(), 0.0f);
        break;
      default:
        std::fill(node.prev_output.data.begin(), node.prev_output.data.end(), 0.0f);
        break;
    }
  }
  bootstrap_ = true;
}

namespace {

const Tensor3& node_output(const CBNode& node) {
  switch (node.kind) {
    case LayerKind::Conv:
      return node.conv.prev_output;
    case LayerKind::Pool:
      return node.pool.prev_output;
    default:
      return node.prev_output;
  }
}

}  // namespace

const Tensor3& CBNetwork::output() const { return node_output(nodes_.back()); }

const Tensor3& CBNetwork::forward_frame(const Tensor3& frame, const StatsConfig& cfg,
                                        FrameStats* frame_stats) {
  if (frame.channels != in_shape_.channels || frame.height != in_shape_.height ||
      frame.width != in_shape_.width)
    throw InvalidInputError("forward_frame: frame resolution mismatch");

  const bool boot = bootstrap_;
  const int n = static_cast<int>(nodes_.size());
  std::vector<ChangeMap> maps(n);
  std::vector<IndexList> idxs(n);
  auto tensor_of = [&](int id) -> const Tensor3& {
    return id < 0 ? frame : node_output(nodes_[id]);
  };

  for (int i = 0; i < n; ++i) {
    CBNode& node = nodes_[i];
    const auto t0 = std::chrono::steady_clock::now();
    LayerFrameStats row;
    row.layer = node.name;
    row.total_px = node.out_shape.pixels();

    switch (node.kind) {
      case LayerKind::Conv: {
        const int src = node.inputs[0];
        UpstreamChange up;
        if (src >= 0) {
          up.map = &maps[src];
          up.indexes = &idxs[src];
        }
        ConvForwardOptions opt;
        opt.force_full_update = boot;
        opt.record_worst_case = cfg.record_worst_case;
        opt.estimate_fg = cfg.estimate_fg;
        ConvForwardResult r = node.conv.forward(tensor_of(src), up, opt);
        row.eff_ops = r.eff_ops;
        row.propagated_px = r.propagated_px;
        row.fg_sp_ops = r.fg_sp_ops;
        row.fg_fm_ops = r.fg_fm_ops;
        if (cfg.record_maps) {
          row.map = r.out_map;
          row.worst_case_map = r.worst_case_map;
        }
        maps[i] = std::move(r.out_map);
        idxs[i] = std::move(r.indexes);
        break;
      }
      case LayerKind::Pool: {
        const int src = node.inputs[0];
        UpstreamChange up{&maps[src], &idxs[src]};
        PoolForwardResult r = node.pool.forward(tensor_of(src), up, boot);
        if (cfg.record_maps) row.map = r.out_map;
        maps[i] = std::move(r.out_map);
        idxs[i] = std::move(r.indexes);
        break;
      }
      case LayerKind::Add:
      case LayerKind::Concat: {
        // A pixel is dirty when any parent marked it.
        ChangeMap m(node.out_shape.height, node.out_shape.width);
        if (boot) {
          m.fill(true);
        } else {
          for (int id : node.inputs)
            for (std::size_t b = 0; b < m.bits.size(); ++b) m.bits[b] |= maps[id].bits[b];
        }
        IndexList idx = extract_indexes(m);
        if (node.kind == LayerKind::Add) {
          for (const PixelIndex& p : idx) {
            for (int c = 0; c < node.out_shape.channels; ++c) {
              float v = 0.0f;
              for (int id : node.inputs) v += tensor_of(id).at(c, p.row, p.col);
              node.prev_output.at(c, p.row, p.col) = v;
            }
          }
        } else {
          for (const PixelIndex& p : idx) {
            int off = 0;
            for (int id : node.inputs) {
              const Tensor3& t = tensor_of(id);
              for (int c = 0; c < t.channels; ++c)
                node.prev_output.at(off + c, p.row, p.col) = t.at(c, p.row, p.col);
              off += t.channels;
            }
          }
        }
        if (cfg.record_maps) row.map = m;
        maps[i] = std::move(m);
        idxs[i] = std::move(idx);
        break;
      }
      default:
        break;
    }

    row.changed_px = static_cast<std::int64_t>(idxs[i].size());
    row.change_frac = row.total_px > 0 ? static_cast<double>(row.changed_px) / row.total_px : 0.0;
    if (cfg.timing)
      row.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    if (frame_stats) frame_stats->layers.push_back(std::move(row));
  }

  bootstrap_ = false;
  return node_output(nodes_.back());
}

CBNetwork convert_to_cb(const DenseNetwork& net, const std::vector<float>& taus,
                        const std::vector<DetectionPolicy>* policies, DetectMode mode) {
  const NetworkSpec& spec = net.spec();
  const ResolvedTopology& topo = net.topology();
  const int n = static_cast<int>(spec.layers.size());

  int conv_rows = 0;
  for (const LayerDesc& d : spec.layers) conv_rows += d.kind == LayerKind::Conv;
  if (static_cast<int>(taus.size()) != conv_rows)
    throw InvalidInputError("convert_to_cb: expected " + std::to_string(conv_rows) +
                            " thresholds, got " + std::to_string(taus.size()));
  for (float t : taus)
    if (t < 0.0f) throw InvalidInputError("convert_to_cb: tau must be >= 0");
  if (policies && static_cast<int>(policies->size()) != conv_rows)
    throw InvalidInputError("convert_to_cb: expected one policy per conv layer");

  // How many consumers each row has; needed to keep ReLU absorption sound.
  std::vector<int> consumers(n, 0);
  for (int i = 0; i < n; ++i)
    for (int id : topo.inputs[i])
      if (id >= 0) ++consumers[id];

  CBNetwork cb;
  cb.in_shape_ = {spec.in_channels, spec.in_height, spec.in_width};
  std::vector<int> new_id(n, -1);
  int conv_idx = 0;

  for (int i = 0; i < n; ++i) {
    const LayerDesc& d = spec.layers[i];
    const std::string where = where_label(d, i);
    const Shape3 in_shape =
        topo.inputs[i][0] < 0 ? cb.in_shape_ : topo.shape[topo.inputs[i][0]];

    if (d.kind == LayerKind::Act) {
      const int src = topo.inputs[i][0];
      if (src < 0 || spec.layers[src].kind != LayerKind::Conv)
        throw ConfigError(where + ": standalone activation can only be absorbed into a conv");
      if (consumers[src] != 1)
        throw ConfigError(where + ": cannot absorb activation, conv output has other consumers");
      cb.nodes_[new_id[src]].conv.fuse_relu = true;
      new_id[i] = new_id[src];
      continue;
    }

    CBNode node;
    node.kind = d.kind;
    node.name = layer_label(d, i);
    node.out_shape = topo.shape[i];
    for (int id : topo.inputs[i]) node.inputs.push_back(id < 0 ? -1 : new_id[id]);

    switch (d.kind) {
      case LayerKind::Conv: {
        const DetectionPolicy policy =
            policies ? (*policies)[conv_idx] : DetectionPolicy::Detect;
        if (policy != DetectionPolicy::Detect && node.inputs[0] < 0)
          throw ConfigError(where + ": " +
                            (policy == DetectionPolicy::Propagate ? "propagate" : "reuse_1x1") +
                            " policy needs an upstream change-based layer");
        try {
          node.conv = CBConvLayer(d.conv, taus[conv_idx], policy, d.fuse_relu, mode,
                                  in_shape.height, in_shape.width);
        } catch (const ConfigError& e) {
          throw ConfigError(where + ": " + e.what());
        }
        ++conv_idx;
        break;
      }
      case LayerKind::Pool: {
        if (node.inputs[0] < 0)
          throw ConfigError(where + ": change-based pooling needs an upstream layer");
        node.pool = CBPoolLayer(d.pool_size, d.pool_stride, in_shape.channels, in_shape.height,
                                in_shape.width, node.out_shape.height, node.out_shape.width);
        break;
      }
      default:
        for (int id : node.inputs)
          if (id < 0)
            throw ConfigError(where + ": change-based joins need upstream layers, not the input");
        node.prev_output =
            Tensor3(node.out_shape.channels, node.out_shape.height, node.out_shape.width);
        break;
    }

    new_id[i] = static_cast<int>(cb.nodes_.size());
    cb.nodes_.push_back(std::move(node));
  }
  return cb;
}

SequenceResult forward_sequence(CBNetwork& net, const std::vector<Tensor3>& frames,
                                const std::vector<Tensor3>* reference, LossMetric metric,
                                const StatsConfig& cfg) {
  if (reference && reference->size() != frames.size())
    throw InvalidInputError("forward_sequence: reference count != frame count");

  SequenceResult result;
  result.outputs.reserve(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    FrameStats fs;
    fs.frame = static_cast<int>(t) + 1;
    const Tensor3& out = net.forward_frame(frames[t], cfg, &fs);
    if (reference) {
      fs.loss = loss_value(metric, out, (*reference)[t]);
      fs.has_loss = true;
    }
    result.outputs.push_back(out);
    result.stats.frames.push_back(std::move(fs));
  }
  return result;
}

}  // namespace cbi
