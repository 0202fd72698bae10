#include "cbi/change.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace cbi {

std::int64_t ChangeMap::count() const {
  std::int64_t n = 0;
  for (std::uint8_t b : bits) n += b != 0;
  return n;
}

void ChangeMap::fill(bool v) {
  std::memset(bits.data(), v ? 1 : 0, bits.size());
}

ChangeMap detect_changes(const Tensor3& x, InputState& state, float tau, DetectMode mode) {
  if (!x.same_shape(state.state))
    throw InvalidInputError("detect_changes: frame and state shapes differ");
  if (tau < 0.0f) throw InvalidInputError("detect_changes: tau must be >= 0");

  ChangeMap m(x.height, x.width);
  const int plane = x.height * x.width;
  for (int j = 0; j < x.height; ++j) {
    for (int i = 0; i < x.width; ++i) {
      const std::size_t px = static_cast<std::size_t>(j) * x.width + i;
      bool changed = false;
      for (int c = 0; c < x.channels && !changed; ++c)
        changed = std::fabs(x.data[c * plane + px] - state.state.data[c * plane + px]) > tau;
      if (changed) {
        m.bits[px] = 1;
        if (mode == DetectMode::ClosedLoop)
          for (int c = 0; c < x.channels; ++c)
            state.state.data[c * plane + px] = x.data[c * plane + px];
      }
    }
  }
  if (mode == DetectMode::FeedForward) state.state = x;
  return m;
}

ChangeMap dilate_window(const ChangeMap& m, int kernel_h, int kernel_w, int stride,
                        int padding, int out_h, int out_w) {
  ChangeMap out(out_h, out_w);
  for (int j = 0; j < m.height; ++j) {
    for (int i = 0; i < m.width; ++i) {
      if (!m.at(j, i)) continue;
      // Output rows jo with jo*stride - padding <= j <= jo*stride - padding + kh - 1.
      const int jo0 = std::max(0, ceil_div(j + padding - kernel_h + 1, stride));
      const int jo1 = std::min(out_h - 1, floor_div(j + padding, stride));
      const int io0 = std::max(0, ceil_div(i + padding - kernel_w + 1, stride));
      const int io1 = std::min(out_w - 1, floor_div(i + padding, stride));
      for (int jo = jo0; jo <= jo1; ++jo)
        for (int io = io0; io <= io1; ++io) out.at(jo, io) = 1;
    }
  }
  return out;
}

ChangeMap dilate_change_map(const ChangeMap& m, const ConvSpec& spec) {
  const int oh = spec.output_height(m.height);
  const int ow = spec.output_width(m.width);
  return dilate_window(m, spec.kernel_h, spec.kernel_w, spec.stride, spec.padding, oh, ow);
}

ChangeMap propagate_changes(const ChangeMap& prev, const ConvSpec& spec) {
  if (spec.kernel_h == 1 && spec.kernel_w == 1 && spec.stride == 1 &&
      spec.output_height(prev.height) == prev.height &&
      spec.output_width(prev.width) == prev.width)
    return prev;
  return dilate_change_map(prev, spec);
}

IndexList extract_indexes(const ChangeMap& m) {
  IndexList idx;
  idx.reserve(static_cast<std::size_t>(m.count()));
  for (int j = 0; j < m.height; ++j)
    for (int i = 0; i < m.width; ++i)
      if (m.at(j, i)) idx.push_back({j, i});
  return idx;
}

}  // namespace cbi
