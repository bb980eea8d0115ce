// Copyright 2026 The VoxCycle Authors
// SPDX-License-Identifier: Apache-2.0

// Test-only reference implementations. Nothing here calls into the optimized
// library paths it is used to check.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include "voxcycle/tensor.hpp"

namespace voxcycle::testing {

// Literal nested-loop zero-padded convolution.
template <typename T>
Tensor<T> naive_conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride, int pad) {
  const long C = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
  const long O = w.dim(0), k = w.dim(2);
  const long od = (D + 2 * pad - k) / stride + 1;
  const long oh = (H + 2 * pad - k) / stride + 1;
  const long ow = (W + 2 * pad - k) / stride + 1;
  Tensor<T> y({std::size_t(O), std::size_t(od), std::size_t(oh), std::size_t(ow)});
  for (long o = 0; o < O; ++o)
    for (long d = 0; d < od; ++d)
      for (long h = 0; h < oh; ++h)
        for (long v = 0; v < ow; ++v) {
          double acc = b.empty() ? 0.0 : double(b[o]);
          for (long c = 0; c < C; ++c)
            for (long i = 0; i < k; ++i)
              for (long j = 0; j < k; ++j)
                for (long l = 0; l < k; ++l) {
                  const long z = d * stride - pad + i, yy = h * stride - pad + j, xx = v * stride - pad + l;
                  if (z < 0 || z >= D || yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                  acc += double(x.at(c, z, yy, xx)) *
                         double(w[(((o * C + c) * k + i) * k + j) * k + l]);
                }
          y.at(o, d, h, v) = T(acc);
        }
  return y;
}

// Transpose convolution by its scatter definition: every input voxel stamps
// the kernel into the output at stride spacing, then the padding is cropped.
template <typename T>
Tensor<T> naive_conv3d_transpose(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride, int pad,
                                 int output_padding) {
  const long C = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
  const long O = w.dim(1), k = w.dim(2);
  const long od = (D - 1) * stride - 2 * pad + k + output_padding;
  const long oh = (H - 1) * stride - 2 * pad + k + output_padding;
  const long ow = (W - 1) * stride - 2 * pad + k + output_padding;
  std::vector<double> acc(std::size_t(O * od * oh * ow), 0.0);
  for (long c = 0; c < C; ++c)
    for (long d = 0; d < D; ++d)
      for (long h = 0; h < H; ++h)
        for (long v = 0; v < W; ++v)
          for (long o = 0; o < O; ++o)
            for (long i = 0; i < k; ++i)
              for (long j = 0; j < k; ++j)
                for (long l = 0; l < k; ++l) {
                  const long z = d * stride - pad + i, yy = h * stride - pad + j, xx = v * stride - pad + l;
                  if (z < 0 || z >= od || yy < 0 || yy >= oh || xx < 0 || xx >= ow) continue;
                  acc[std::size_t(((o * od + z) * oh + yy) * ow + xx)] +=
                      double(x.at(c, d, h, v)) * double(w[(((c * O + o) * k + i) * k + j) * k + l]);
                }
  Tensor<T> y({std::size_t(O), std::size_t(od), std::size_t(oh), std::size_t(ow)});
  for (long o = 0; o < O; ++o)
    for (long i = 0; i < od * oh * ow; ++i) y[std::size_t(o * od * oh * ow + i)] =
        T(acc[std::size_t(o * od * oh * ow + i)] + (b.empty() ? 0.0 : double(b[o])));
  return y;
}

template <typename T>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, scale);
  for (auto& v : t.data()) v = T(dist(rng));
  return t;
}

// Central finite difference of a scalar function with respect to every
// element of `param` (or a strided subset), returned as a tensor.
inline Tensor<double> numeric_gradient(Tensor<double>& param, const std::function<double()>& loss,
                                       double step = 1e-5, std::size_t max_entries = 0) {
  Tensor<double> g(param.shape());
  const std::size_t n = param.size();
  const std::size_t stride = (max_entries == 0 || n <= max_entries) ? 1 : (n + max_entries - 1) / max_entries;
  for (std::size_t i = 0; i < n; i += stride) {
    const double saved = param[i];
    param[i] = saved + step;
    const double up = loss();
    param[i] = saved - step;
    const double down = loss();
    param[i] = saved;
    g[i] = (up - down) / (2 * step);
  }
  return g;
}

// Largest per-entry relative error over the entries the numeric gradient
// visited (same stride), with a small absolute floor on the denominator.
inline double max_relative_error(const Tensor<double>& analytic, const Tensor<double>& numeric,
                                 std::size_t max_entries = 0, double floor = 1e-6) {
  const std::size_t n = analytic.size();
  const std::size_t stride = (max_entries == 0 || n <= max_entries) ? 1 : (n + max_entries - 1) / max_entries;
  double worst = 0.0;
  for (std::size_t i = 0; i < n; i += stride) {
    const double a = analytic[i], b = numeric[i];
    const double denom = std::max({std::abs(a), std::abs(b), floor});
    worst = std::max(worst, std::abs(a - b) / denom);
  }
  return worst;
}

}  // namespace voxcycle::testing
