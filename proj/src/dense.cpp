#include "cbi/dense.hpp"

#include <algorithm>
#include <string>

namespace cbi {

Tensor3 conv2d_dense(const Tensor3& x, const ConvSpec& spec) {
  spec.validate();
  if (x.channels != spec.in_channels)
    throw InvalidInputError("conv2d_dense: input has " + std::to_string(x.channels) +
                            " channels, spec expects " + std::to_string(spec.in_channels));
  const int oh = spec.output_height(x.height);
  const int ow = spec.output_width(x.width);
  const int s = spec.stride, p = spec.padding;

  Tensor3 y(spec.out_channels, oh, ow);
  for (int o = 0; o < spec.out_channels; ++o) {
    const float* w = spec.weights.data() +
                     static_cast<std::size_t>(o) * spec.in_channels * spec.kernel_h * spec.kernel_w;
    for (int jo = 0; jo < oh; ++jo) {
      for (int io = 0; io < ow; ++io) {
        float acc = 0.0f;
        const float* wk = w;
        for (int c = 0; c < spec.in_channels; ++c) {
          for (int kj = 0; kj < spec.kernel_h; ++kj) {
            const int jj = jo * s - p + kj;
            for (int ki = 0; ki < spec.kernel_w; ++ki, ++wk) {
              const int ii = io * s - p + ki;
              const float v = (jj >= 0 && jj < x.height && ii >= 0 && ii < x.width)
                                  ? x.at(c, jj, ii)
                                  : 0.0f;
              acc += *wk * v;
            }
          }
        }
        y.at(o, jo, io) = acc + spec.bias[o];
      }
    }
  }
  return y;
}

ColumnMatrix im2col(const Tensor3& x, const ConvSpec& spec, const IndexList* selected) {
  spec.validate();
  if (x.channels != spec.in_channels)
    throw InvalidInputError("im2col: input/spec channel mismatch");
  const int oh = spec.output_height(x.height);
  const int ow = spec.output_width(x.width);
  const int s = spec.stride, p = spec.padding;

  ColumnMatrix m;
  m.rows = spec.in_channels * spec.kernel_h * spec.kernel_w;
  m.cols = selected ? static_cast<int>(selected->size()) : oh * ow;
  m.data.resize(static_cast<std::size_t>(m.rows) * m.cols);

  for (int col = 0; col < m.cols; ++col) {
    int jo, io;
    if (selected) {
      jo = (*selected)[col].row;
      io = (*selected)[col].col;
      if (jo < 0 || jo >= oh || io < 0 || io >= ow)
        throw InvalidInputError("im2col: selected pixel (" + std::to_string(jo) + "," +
                                std::to_string(io) + ") outside " + std::to_string(oh) +
                                "x" + std::to_string(ow) + " output");
    } else {
      jo = col / ow;
      io = col % ow;
    }
    float* dst = m.data.data() + static_cast<std::size_t>(col) * m.rows;
    for (int c = 0; c < spec.in_channels; ++c) {
      for (int kj = 0; kj < spec.kernel_h; ++kj) {
        const int jj = jo * s - p + kj;
        for (int ki = 0; ki < spec.kernel_w; ++ki) {
          const int ii = io * s - p + ki;
          *dst++ = (jj >= 0 && jj < x.height && ii >= 0 && ii < x.width) ? x.at(c, jj, ii)
                                                                         : 0.0f;
        }
      }
    }
  }
  return m;
}

Matrix gemm(const KernelMatrix& k, const ColumnMatrix& x) {
  if (k.cols != x.rows)
    throw InvalidInputError("gemm: K is " + std::to_string(k.rows) + "x" +
                            std::to_string(k.cols) + " but X has " + std::to_string(x.rows) +
                            " rows");
  Matrix y(k.rows, x.cols);
  if (k.rows == 0 || x.cols == 0) return y;

  // K transposed once so the inner loop runs over contiguous output channels;
  // each (o, col) still accumulates in plain shared-dimension order.
  std::vector<float> kt(static_cast<std::size_t>(k.rows) * k.cols);
  for (int o = 0; o < k.rows; ++o)
    for (int r = 0; r < k.cols; ++r)
      kt[static_cast<std::size_t>(r) * k.rows + o] = k.data[static_cast<std::size_t>(o) * k.cols + r];

  std::vector<float> acc(static_cast<std::size_t>(k.rows));
  for (int col = 0; col < x.cols; ++col) {
    std::fill(acc.begin(), acc.end(), 0.0f);
    const float* xc = x.data.data() + static_cast<std::size_t>(col) * x.rows;
    for (int r = 0; r < x.rows; ++r) {
      const float xv = xc[r];
      const float* kr = kt.data() + static_cast<std::size_t>(r) * k.rows;
      for (int o = 0; o < k.rows; ++o) acc[o] += kr[o] * xv;
    }
    for (int o = 0; o < k.rows; ++o) y.at(o, col) = acc[o];
  }
  return y;
}

Tensor3 maxpool_dense(const Tensor3& x, int size, int stride) {
  if (size < 1 || stride < 1) throw InvalidInputError("maxpool: size and stride must be >= 1");
  if (x.height < size || x.width < size)
    throw InvalidInputError("maxpool: input " + std::to_string(x.height) + "x" +
                            std::to_string(x.width) + " smaller than window " +
                            std::to_string(size));
  const int oh = (x.height - size) / stride + 1;
  const int ow = (x.width - size) / stride + 1;
  return maxpool_to(x, size, stride, oh, ow);
}

Tensor3 maxpool_to(const Tensor3& x, int size, int stride, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw InvalidInputError("maxpool: output dims must be >= 1");
  if ((out_h - 1) * stride >= x.height || (out_w - 1) * stride >= x.width)
    throw InvalidInputError("maxpool: output dims leave an empty window");
  Tensor3 y(x.channels, out_h, out_w);
  for (int c = 0; c < x.channels; ++c) {
    for (int jo = 0; jo < out_h; ++jo) {
      const int j0 = jo * stride;
      const int j1 = std::min(j0 + size, x.height);
      for (int io = 0; io < out_w; ++io) {
        const int i0 = io * stride;
        const int i1 = std::min(i0 + size, x.width);
        float m = x.at(c, j0, i0);
        for (int j = j0; j < j1; ++j)
          for (int i = i0; i < i1; ++i) m = std::max(m, x.at(c, j, i));
        y.at(c, jo, io) = m;
      }
    }
  }
  return y;
}

Tensor3 relu(const Tensor3& x) {
  Tensor3 y = x;
  relu_inplace(y);
  return y;
}

void relu_inplace(Tensor3& x) {
  for (float& v : x.data) v = std::max(v, 0.0f);
}

}  // namespace cbi
