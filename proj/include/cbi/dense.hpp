#pragma once

#include "cbi/tensor.hpp"

namespace cbi {

// Reference convolution. The accumulation order per output element is fixed:
// channel-major, then kernel row, then kernel column, each padding tap
// contributing an explicit +0 term, bias added last. gemm(K, im2col(x)) walks
// the same sequence, so the two routes agree exactly, not just within
// tolerance.
Tensor3 conv2d_dense(const Tensor3& x, const ConvSpec& spec);

// Patch matrix: one column per output pixel, rows ordered channel-major then
// kernel row then kernel column. With `selected` null every output pixel
// appears, row-major; otherwise columns follow the given order. Zero padding
// is materialized as 0 entries.
ColumnMatrix im2col(const Tensor3& x, const ConvSpec& spec,
                    const IndexList* selected = nullptr);

// Y = K * X. Each output element is one sequential reduction over the shared
// dimension; parallelism, if any, may only split independent output elements.
Matrix gemm(const KernelMatrix& k, const ColumnMatrix& x);

// Max pooling, no padding, window must fit (floor-mode output dims).
Tensor3 maxpool_dense(const Tensor3& x, int size, int stride);

// Max pooling with pinned output dims; border windows are clipped to valid
// taps (ceil-mode when out dims exceed the floor formula).
Tensor3 maxpool_to(const Tensor3& x, int size, int stride, int out_h, int out_w);

Tensor3 relu(const Tensor3& x);
void relu_inplace(Tensor3& x);

}  // namespace cbi
