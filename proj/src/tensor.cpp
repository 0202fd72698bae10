#include "cbi/tensor.hpp"

#include <string>

namespace cbi {

namespace {

int derived_dim(int in_dim, int kernel, int stride, int padding) {
  int v = (in_dim + 2 * padding - kernel) / stride + 1;
  if (in_dim + 2 * padding - kernel < 0 || v < 1) {
    throw InvalidInputError("conv output dim < 1 (input " + std::to_string(in_dim) +
                            ", kernel " + std::to_string(kernel) + ", stride " +
                            std::to_string(stride) + ", padding " +
                            std::to_string(padding) + ")");
  }
  return v;
}

}  // namespace

int ConvSpec::output_height(int in_h) const {
  return out_h > 0 ? out_h : derived_dim(in_h, kernel_h, stride, padding);
}

int ConvSpec::output_width(int in_w) const {
  return out_w > 0 ? out_w : derived_dim(in_w, kernel_w, stride, padding);
}

void ConvSpec::validate() const {
  if (in_channels < 1 || out_channels < 1 || kernel_h < 1 || kernel_w < 1)
    throw InvalidInputError("conv spec: channel and kernel dims must be >= 1");
  if (stride < 1) throw InvalidInputError("conv spec: stride must be >= 1");
  if (padding < 0) throw InvalidInputError("conv spec: padding must be >= 0");
  if (out_h < 0 || out_w < 0 || (out_h > 0) != (out_w > 0))
    throw InvalidInputError("conv spec: explicit output dims must both be set and >= 1");
  if (weights.size() != weight_count())
    throw InvalidInputError("conv spec: weight count " + std::to_string(weights.size()) +
                            " != out*in*kh*kw = " + std::to_string(weight_count()));
  if (bias.size() != static_cast<std::size_t>(out_channels))
    throw InvalidInputError("conv spec: bias count " + std::to_string(bias.size()) +
                            " != out_channels = " + std::to_string(out_channels));
}

KernelMatrix make_kernel_matrix(const ConvSpec& spec) {
  KernelMatrix k;
  k.rows = spec.out_channels;
  k.cols = spec.in_channels * spec.kernel_h * spec.kernel_w;
  k.data.resize(static_cast<std::size_t>(k.rows) * k.cols);
  std::size_t n = 0;
  for (int o = 0; o < spec.out_channels; ++o)
    for (int c = 0; c < spec.in_channels; ++c)
      for (int j = 0; j < spec.kernel_h; ++j)
        for (int i = 0; i < spec.kernel_w; ++i) k.data[n++] = spec.weight(o, c, j, i);
  return k;
}

}  // namespace cbi
