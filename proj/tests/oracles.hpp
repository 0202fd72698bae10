#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "cbi/change.hpp"
#include "cbi/network.hpp"

// Test-only reference implementations and generators. These deliberately take
// different routes from the library (double accumulators, tap-major loops,
// per-output receptive-field scans) so they can serve as independent oracles.
namespace cbi::testing {

inline Tensor3 conv2d_brute(const Tensor3& x, const ConvSpec& spec) {
  const int oh = spec.output_height(x.height);
  const int ow = spec.output_width(x.width);
  Tensor3 y(spec.out_channels, oh, ow);
  for (int o = 0; o < spec.out_channels; ++o) {
    for (int jo = 0; jo < oh; ++jo) {
      for (int io = 0; io < ow; ++io) {
        double acc = spec.bias[o];
        for (int kj = 0; kj < spec.kernel_h; ++kj) {
          for (int ki = 0; ki < spec.kernel_w; ++ki) {
            const int jj = jo * spec.stride - spec.padding + kj;
            const int ii = io * spec.stride - spec.padding + ki;
            if (jj < 0 || jj >= x.height || ii < 0 || ii >= x.width) continue;
            for (int c = 0; c < spec.in_channels; ++c)
              acc += static_cast<double>(spec.weight(o, c, kj, ki)) * x.at(c, jj, ii);
          }
        }
        y.at(o, jo, io) = static_cast<float>(acc);
      }
    }
  }
  return y;
}

// Per-output receptive-field scan.
inline ChangeMap dilate_brute(const ChangeMap& m, int kernel_h, int kernel_w, int stride,
                              int padding, int out_h, int out_w) {
  ChangeMap out(out_h, out_w);
  for (int jo = 0; jo < out_h; ++jo) {
    for (int io = 0; io < out_w; ++io) {
      bool hit = false;
      for (int kj = 0; kj < kernel_h && !hit; ++kj) {
        for (int ki = 0; ki < kernel_w && !hit; ++ki) {
          const int jj = jo * stride - padding + kj;
          const int ii = io * stride - padding + ki;
          if (jj >= 0 && jj < m.height && ii >= 0 && ii < m.width && m.at(jj, ii)) hit = true;
        }
      }
      out.at(jo, io) = hit;
    }
  }
  return out;
}

inline double max_rel_err(const Tensor3& a, const Tensor3& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = std::fabs(static_cast<double>(a.data[i]) - b.data[i]);
    worst = std::max(worst, d / std::max(1.0, std::fabs(static_cast<double>(b.data[i]))));
  }
  return worst;
}

struct Rng {
  std::mt19937 eng;
  explicit Rng(std::uint32_t seed) : eng(seed) {}
  float uniform(float lo, float hi) {
    return std::uniform_real_distribution<float>(lo, hi)(eng);
  }
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng); }
  bool flip() { return uniform_int(0, 1) == 1; }
};

inline Tensor3 random_tensor(Rng& rng, int c, int h, int w, float lo = -1.0f, float hi = 1.0f) {
  Tensor3 t(c, h, w);
  for (float& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

inline ConvSpec random_spec(Rng& rng, int in_channels, int max_kernel = 7, int max_out = 8) {
  static const int kernels[] = {1, 3, 5, 7};
  ConvSpec s;
  s.in_channels = in_channels;
  s.out_channels = rng.uniform_int(1, max_out);
  int k;
  do {
    k = kernels[rng.uniform_int(0, 3)];
  } while (k > max_kernel);
  s.kernel_h = s.kernel_w = k;
  s.stride = rng.uniform_int(1, 2);
  s.padding = rng.uniform_int(0, k / 2);
  s.weights.resize(s.weight_count());
  s.bias.resize(s.out_channels);
  const float a = 1.0f / std::sqrt(static_cast<float>(in_channels) * k * k);
  for (float& w : s.weights) w = rng.uniform(-a, a);
  for (float& b : s.bias) b = rng.uniform(-0.1f, 0.1f);
  return s;
}

// Random conv/pool chain that keeps spatial dims >= 4.
inline NetworkSpec random_network(Rng& rng, int in_channels, int height, int width,
                                  int n_convs) {
  NetworkSpec spec;
  spec.in_channels = in_channels;
  spec.in_height = height;
  spec.in_width = width;

  int c = in_channels, h = height, w = width;
  for (int i = 0; i < n_convs; ++i) {
    ConvSpec s = random_spec(rng, c);
    // Kernels are odd, so stride 1 with same-padding always keeps dims.
    const auto fits = [&] {
      const int oh = h + 2 * s.padding - s.kernel_h;
      const int ow = w + 2 * s.padding - s.kernel_w;
      return oh >= 0 && ow >= 0 && oh / s.stride + 1 >= 4 && ow / s.stride + 1 >= 4;
    };
    if (!fits()) {
      s.stride = 1;
      s.padding = s.kernel_h / 2;
    }
    LayerDesc d;
    d.kind = LayerKind::Conv;
    d.name = "conv" + std::to_string(i);
    d.conv = s;
    d.fuse_relu = rng.flip();
    spec.layers.push_back(d);
    c = s.out_channels;
    h = s.output_height(h);
    w = s.output_width(w);

    if (i + 1 < n_convs && h >= 8 && w >= 8 && rng.flip()) {
      LayerDesc p;
      p.kind = LayerKind::Pool;
      p.name = "pool" + std::to_string(i);
      p.pool_size = 2;
      p.pool_stride = 2;
      spec.layers.push_back(p);
      h = (h - 2) / 2 + 1;
      w = (w - 2) / 2 + 1;
    }
  }
  return spec;
}

inline std::vector<Tensor3> random_frames(Rng& rng, int n, int c, int h, int w) {
  std::vector<Tensor3> frames;
  for (int i = 0; i < n; ++i) frames.push_back(random_tensor(rng, c, h, w, 0.0f, 1.0f));
  return frames;
}

}  // namespace cbi::testing
