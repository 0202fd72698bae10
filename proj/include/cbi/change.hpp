#pragma once

#include <cstdint>

#include "cbi/tensor.hpp"

namespace cbi {

// Boolean per-pixel grid in the coordinate frame of the tensor it annotates:
// input frame for detected maps, output frame for dilated maps.
struct ChangeMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  ChangeMap() = default;
  ChangeMap(int h, int w) : height(h), width(w), bits(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t& at(int j, int i) { return bits[static_cast<std::size_t>(j) * width + i]; }
  std::uint8_t at(int j, int i) const { return bits[static_cast<std::size_t>(j) * width + i]; }

  std::int64_t count() const;
  void fill(bool v);
  bool operator==(const ChangeMap&) const = default;
};

// Per-layer persistent copy of the layer input. In closed-loop mode it is
// rewritten only at pixels that triggered a change, so the stored output stays
// exactly the convolution of this tensor.
struct InputState {
  Tensor3 state;
};

enum class DetectMode { FeedForward, ClosedLoop };

// m(j,i) = OR over channels of |x(c,j,i) - state(c,j,i)| > tau (strict, so
// tau = 0 still skips exactly-equal pixels).
//
// ClosedLoop: all channels of x are copied into the state at (and only at)
// marked pixels. FeedForward: the state is wholly replaced by x afterwards.
ChangeMap detect_changes(const Tensor3& x, InputState& state, float tau, DetectMode mode);

// Input-frame map -> output-frame map: output pixel true iff any input pixel
// inside its kernel window is true. Stride subsampling and border clipping
// are applied here; padding taps never mark anything.
ChangeMap dilate_change_map(const ChangeMap& m, const ConvSpec& spec);

// Generic window dilation used by both conv and pooling maps.
ChangeMap dilate_window(const ChangeMap& m, int kernel_h, int kernel_w, int stride,
                        int padding, int out_h, int out_w);

// Worst-case propagation of the previous layer's output map. Same computation
// as dilate_change_map; 1x1 stride-1 kernels pass the map through unchanged.
ChangeMap propagate_changes(const ChangeMap& prev, const ConvSpec& spec);

// Row-major coordinates of the true bits.
IndexList extract_indexes(const ChangeMap& m);

}  // namespace cbi
