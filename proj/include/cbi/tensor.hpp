#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cbi/common.hpp"

namespace cbi {

// channels x height x width, fp32, channel-major with row-major planes:
// data[(c*height + j)*width + i].
struct Tensor3 {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Tensor3() = default;
  Tensor3(int c, int h, int w)
      : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, 0.0f) {}

  float& at(int c, int j, int i) {
    return data[(static_cast<std::size_t>(c) * height + j) * width + i];
  }
  float at(int c, int j, int i) const {
    return data[(static_cast<std::size_t>(c) * height + j) * width + i];
  }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Tensor3& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

// Output-pixel coordinate (row-major ordering throughout).
struct PixelIndex {
  int row = 0;
  int col = 0;
  bool operator==(const PixelIndex&) const = default;
};

using IndexList = std::vector<PixelIndex>;

// A convolution layer's static description. Weight layout is
// weights[((o*in + c)*kernel_h + j)*kernel_w + i].
//
// out_h/out_w default to 0, meaning the usual
// floor((in + 2*padding - kernel)/stride) + 1. Nonzero values pin the output
// resolution explicitly; output pixel (0,0) keeps its window anchored at
// (-padding, -padding), so smaller-than-derived dims behave as a crop and
// out-of-range taps read as zero padding.
struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_h = 0;
  int kernel_w = 0;
  int stride = 1;
  int padding = 0;
  int out_h = 0;
  int out_w = 0;
  std::vector<float> weights;
  std::vector<float> bias;

  float weight(int o, int c, int j, int i) const {
    return weights[((static_cast<std::size_t>(o) * in_channels + c) * kernel_h + j) *
                       kernel_w + i];
  }

  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel_h * kernel_w;
  }

  int output_height(int in_h) const;
  int output_width(int in_w) const;

  // Throws InvalidInputError on inconsistent sizes.
  void validate() const;
};

// Row-major out_channels x (in_channels*kernel_h*kernel_w) filter matrix:
// entry (o, (c*kernel_h + j)*kernel_w + i) = weights(o,c,j,i).
struct KernelMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;

  float at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

KernelMatrix make_kernel_matrix(const ConvSpec& spec);

// Column-major (in_channels*kernel_h*kernel_w) x n_pixels patch matrix; one
// column per selected output pixel, so partial generation appends whole
// contiguous columns.
struct ColumnMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;

  float at(int r, int c) const { return data[static_cast<std::size_t>(c) * rows + r]; }
};

// Dense row-major matrix, used for GEMM results (out_channels x n_pixels).
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0f) {}

  float& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  float at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

}  // namespace cbi
