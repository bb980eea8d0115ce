// Copyright 2026 The VoxCycle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <utility>
#include <vector>

#include "voxcycle/ops/grad_pair.hpp"
#include "voxcycle/ops/pad.hpp"
#include "voxcycle/parallel.hpp"
#include "voxcycle/tensor.hpp"

namespace voxcycle {

// Isotropic convolution settings. output_padding only applies to the
// transpose convolution and extends the far side of each axis.
struct ConvParams {
  int stride = 1;
  int padding = 0;
  PaddingMode padding_mode = PaddingMode::zero;
  int output_padding = 0;
};

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> kernel;
  Tensor<T> bias;
};

// floor((in + 2*padding - kernel) / stride) + 1, or 0 when the kernel does not fit.
inline std::size_t conv_output_size(std::size_t in, std::size_t kernel, int stride, int padding) {
  const long span = static_cast<long>(in) + 2L * padding - static_cast<long>(kernel);
  if (span < 0 || stride < 1) return 0;
  return static_cast<std::size_t>(span / stride + 1);
}

// (in - 1) * stride - 2 * padding + kernel + output_padding, or 0 when not positive.
inline std::size_t conv_transpose_output_size(std::size_t in, std::size_t kernel, int stride, int padding,
                                              int output_padding) {
  const long n = (static_cast<long>(in) - 1) * stride - 2L * padding + static_cast<long>(kernel) + output_padding;
  return n > 0 ? static_cast<std::size_t>(n) : 0;
}

namespace detail {

// A zero-padded strided convolution seen as a linear map from a "wide" volume
// (channels_wide x wide dims) to a "narrow" one (channels_narrow x narrow
// dims). conv3d runs it forward; conv3d_transpose runs its adjoint.
struct ConvGeometry {
  long channels_wide = 0, channels_narrow = 0;
  long k = 0, stride = 1, pad = 0;
  long wd = 0, wh = 0, ww = 0;
  long nd = 0, nh = 0, nw = 0;

  long rows() const { return channels_wide * k * k * k; }
  long wide_voxels() const { return wd * wh * ww; }
  long narrow_voxels() const { return nd * nh * nw; }
  long tile_columns() const {
    constexpr long kTileElements = 1L << 21;
    return std::clamp(kTileElements / std::max(rows(), 1L), 32L, std::max(narrow_voxels(), 1L));
  }
  long tile_count() const { return (narrow_voxels() + tile_columns() - 1) / tile_columns(); }
};

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using StridedMap = Eigen::Map<RowMatrix<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMatrix<T>, 0, Eigen::OuterStride<>>;

// Walks the patch matrix for narrow columns [n0, n0 + count). For every
// patch row, contiguous stretches of columns that read inside the wide volume
// are reported as on_run(slot, wide_index, length, wide_step); stretches that
// fall in the zero border as on_miss(slot, length). Slots index the
// row-major [rows x count] tile.
template <typename RunFn, typename MissFn>
void for_each_patch_run(const ConvGeometry& g, long n0, long count, RunFn&& on_run, MissFn&& on_miss) {
  const long plane = g.nh * g.nw;
  const long s = g.stride;
  for (long c = 0; c < g.channels_wide; ++c)
    for (long i = 0; i < g.k; ++i)
      for (long j = 0; j < g.k; ++j)
        for (long l = 0; l < g.k; ++l) {
          const long row = ((c * g.k + i) * g.k + j) * g.k + l;
          // Narrow w-range whose wide x = w * s - pad + l lies in [0, ww).
          const long w_lo = std::max(0L, (g.pad - l + s - 1) / s);
          const long last = g.ww - 1 + g.pad - l;
          const long w_hi = last < 0 ? 0 : std::min(g.nw, last / s + 1);  // exclusive
          long t = 0;
          long n = n0;
          while (t < count) {
            const long od = n / plane;
            const long rem = n - od * plane;
            const long oh = rem / g.nw;
            const long ow = rem - oh * g.nw;
            const long run = std::min(g.nw - ow, count - t);
            const long z = od * s - g.pad + i;
            const long y = oh * s - g.pad + j;
            const long slot = row * count + t;
            if (z < 0 || z >= g.wd || y < 0 || y >= g.wh || w_hi <= w_lo) {
              on_miss(slot, run);
            } else {
              const long a = std::clamp(w_lo - ow, 0L, run);
              const long b = std::clamp(w_hi - ow, a, run);
              if (a > 0) on_miss(slot, a);
              if (b > a) on_run(slot + a, ((c * g.wd + z) * g.wh + y) * g.ww + (ow + a) * s - g.pad + l, b - a, s);
              if (run > b) on_miss(slot + b, run - b);
            }
            t += run;
            n += run;
          }
        }
}

template <typename T>
void im2col_tile(const ConvGeometry& g, const T* wide, long n0, long count, T* cols) {
  for_each_patch_run(
      g, n0, count,
      [&](long slot, long idx, long len, long step) {
        if (step == 1) {
          std::copy(wide + idx, wide + idx + len, cols + slot);
        } else {
          for (long q = 0; q < len; ++q) cols[slot + q] = wide[idx + q * step];
        }
      },
      [&](long slot, long len) { std::fill(cols + slot, cols + slot + len, T{0}); });
}

template <typename T>
void col2im_tile(const ConvGeometry& g, const T* cols, long n0, long count, T* wide) {
  for_each_patch_run(
      g, n0, count,
      [&](long slot, long idx, long len, long step) {
        for (long q = 0; q < len; ++q) wide[idx + q * step] += cols[slot + q];
      },
      [](long, long) {});
}

// narrow = W * patches(wide) (+ bias). W is [channels_narrow, rows].
template <typename T>
void conv_apply(const ConvGeometry& g, const T* wide, const T* weights, const T* bias, T* narrow) {
  const long N = g.narrow_voxels();
  const long tn = g.tile_columns();
  const long rows = g.rows();
  Eigen::Map<const RowMatrix<T>> wm(weights, g.channels_narrow, rows);
  parallel_for(static_cast<std::size_t>(g.tile_count()), [&](std::size_t tile) {
    const long n0 = static_cast<long>(tile) * tn;
    const long cnt = std::min(tn, N - n0);
    std::vector<T> cols(static_cast<std::size_t>(rows * cnt));
    im2col_tile(g, wide, n0, cnt, cols.data());
    Eigen::Map<const RowMatrix<T>> cm(cols.data(), rows, cnt);
    StridedMap<T> out(narrow + n0, g.channels_narrow, cnt, Eigen::OuterStride<>(N));
    out.noalias() = wm * cm;
    if (bias) {
      for (long o = 0; o < g.channels_narrow; ++o) out.row(o).array() += bias[o];
    }
  });
}

// wide = patches^T(W^T * narrow). Column tiles are computed in parallel batches
// and scattered in tile order.
template <typename T>
void conv_apply_adjoint(const ConvGeometry& g, const T* narrow, const T* weights, T* wide) {
  const long N = g.narrow_voxels();
  const long tn = g.tile_columns();
  const long rows = g.rows();
  const long tiles = g.tile_count();
  Eigen::Map<const RowMatrix<T>> wm(weights, g.channels_narrow, rows);
  const long batch = std::max(1, num_threads());
  std::vector<std::vector<T>> cols(static_cast<std::size_t>(std::min(batch, tiles)));
  for (long first = 0; first < tiles; first += batch) {
    const long in_batch = std::min(batch, tiles - first);
    parallel_for(static_cast<std::size_t>(in_batch), [&](std::size_t b) {
      const long n0 = (first + static_cast<long>(b)) * tn;
      const long cnt = std::min(tn, N - n0);
      auto& buf = cols[b];
      buf.resize(static_cast<std::size_t>(rows * cnt));
      Eigen::Map<RowMatrix<T>> cm(buf.data(), rows, cnt);
      ConstStridedMap<T> in(narrow + n0, g.channels_narrow, cnt, Eigen::OuterStride<>(N));
      cm.noalias() = wm.transpose() * in;
    });
    for (long b = 0; b < in_batch; ++b) {
      const long n0 = (first + b) * tn;
      col2im_tile(g, cols[static_cast<std::size_t>(b)].data(), n0, std::min(tn, N - n0), wide);
    }
  }
}

// dW = sum over tiles of narrow_grad * patches(wide)^T. Tiles are grouped into
// a geometry-determined number of chunks whose partial sums are added in order.
template <typename T>
void conv_weight_grad(const ConvGeometry& g, const T* wide, const T* narrow_grad, T* weight_grad) {
  const long N = g.narrow_voxels();
  const long tn = g.tile_columns();
  const long rows = g.rows();
  const long tiles = g.tile_count();
  const long wsize = rows * g.channels_narrow;
  constexpr long kPartialBudget = 1L << 24;
  const long chunks = std::clamp(kPartialBudget / std::max(wsize, 1L), 1L, std::min(tiles, 8L));
  const long per_chunk = (tiles + chunks - 1) / chunks;
  std::vector<RowMatrix<T>> partial(static_cast<std::size_t>(chunks));
  parallel_for(static_cast<std::size_t>(chunks), [&](std::size_t chunk) {
    auto& acc = partial[chunk];
    acc.setZero(g.channels_narrow, rows);
    std::vector<T> cols;
    const long t_end = std::min(tiles, (static_cast<long>(chunk) + 1) * per_chunk);
    for (long tile = static_cast<long>(chunk) * per_chunk; tile < t_end; ++tile) {
      const long n0 = tile * tn;
      const long cnt = std::min(tn, N - n0);
      cols.resize(static_cast<std::size_t>(rows * cnt));
      im2col_tile(g, wide, n0, cnt, cols.data());
      Eigen::Map<const RowMatrix<T>> cm(cols.data(), rows, cnt);
      ConstStridedMap<T> gy(narrow_grad + n0, g.channels_narrow, cnt, Eigen::OuterStride<>(N));
      acc.noalias() += gy * cm.transpose();
    }
  });
  Eigen::Map<RowMatrix<T>> out(weight_grad, g.channels_narrow, rows);
  out.setZero();
  for (const auto& p : partial) out += p;
}

// Direct stride-1 kernels for convolutions with very few output channels
// (the 7^3 output conv of the generator). There the patch matrix is large
// and the product is a matrix-vector one, so streaming rows of the input
// beats materializing patches. All three loops run over contiguous rows.

inline bool use_direct_path(const ConvGeometry& g) { return g.stride == 1 && g.channels_narrow <= 4; }

// Narrow w-range [lo, hi) whose wide x = w - pad + l is in bounds.
inline std::pair<long, long> direct_w_range(const ConvGeometry& g, long l) {
  return {std::max(0L, g.pad - l), std::min(g.nw, g.ww + g.pad - l)};
}

template <typename T>
void direct_apply(const ConvGeometry& g, const T* wide, const T* weights, const T* bias, T* narrow) {
  const long k = g.k;
  parallel_for(static_cast<std::size_t>(g.nd), [&](std::size_t di) {
    const long d = static_cast<long>(di);
    for (long o = 0; o < g.channels_narrow; ++o)
      for (long h = 0; h < g.nh; ++h) {
        T* orow = narrow + ((o * g.nd + d) * g.nh + h) * g.nw;
        std::fill(orow, orow + g.nw, bias ? bias[o] : T{0});
        for (long c = 0; c < g.channels_wide; ++c)
          for (long i = 0; i < k; ++i) {
            const long z = d - g.pad + i;
            if (z < 0 || z >= g.wd) continue;
            for (long j = 0; j < k; ++j) {
              const long y = h - g.pad + j;
              if (y < 0 || y >= g.wh) continue;
              const T* xr = wide + ((c * g.wd + z) * g.wh + y) * g.ww - g.pad;
              const T* wk = weights + (((o * g.channels_wide + c) * k + i) * k + j) * k;
              for (long l = 0; l < k; ++l) {
                const auto [lo, hi] = direct_w_range(g, l);
                const T wl = wk[l];
                const T* xs = xr + l;
                for (long w = lo; w < hi; ++w) orow[w] += wl * xs[w];
              }
            }
          }
      }
  });
}

template <typename T>
void direct_apply_adjoint(const ConvGeometry& g, const T* narrow, const T* weights, T* wide) {
  const long k = g.k;
  parallel_for(static_cast<std::size_t>(g.channels_wide), [&](std::size_t ci) {
    const long c = static_cast<long>(ci);
    for (long o = 0; o < g.channels_narrow; ++o)
      for (long d = 0; d < g.nd; ++d)
        for (long h = 0; h < g.nh; ++h) {
          const T* grow = narrow + ((o * g.nd + d) * g.nh + h) * g.nw;
          for (long i = 0; i < k; ++i) {
            const long z = d - g.pad + i;
            if (z < 0 || z >= g.wd) continue;
            for (long j = 0; j < k; ++j) {
              const long y = h - g.pad + j;
              if (y < 0 || y >= g.wh) continue;
              T* xr = wide + ((c * g.wd + z) * g.wh + y) * g.ww - g.pad;
              const T* wk = weights + (((o * g.channels_wide + c) * k + i) * k + j) * k;
              for (long l = 0; l < k; ++l) {
                const auto [lo, hi] = direct_w_range(g, l);
                const T wl = wk[l];
                T* xs = xr + l;
                for (long w = lo; w < hi; ++w) xs[w] += wl * grow[w];
              }
            }
          }
        }
  });
}

template <typename T>
void direct_weight_grad(const ConvGeometry& g, const T* wide, const T* narrow_grad, T* weight_grad) {
  const long k = g.k;
  const long pairs = g.channels_narrow * g.channels_wide;
  parallel_for(static_cast<std::size_t>(pairs), [&](std::size_t pi) {
    const long o = static_cast<long>(pi) / g.channels_wide;
    const long c = static_cast<long>(pi) % g.channels_wide;
    std::vector<double> acc(static_cast<std::size_t>(k * k * k), 0.0);
    for (long d = 0; d < g.nd; ++d)
      for (long h = 0; h < g.nh; ++h) {
        const T* grow = narrow_grad + ((o * g.nd + d) * g.nh + h) * g.nw;
        for (long i = 0; i < k; ++i) {
          const long z = d - g.pad + i;
          if (z < 0 || z >= g.wd) continue;
          for (long j = 0; j < k; ++j) {
            const long y = h - g.pad + j;
            if (y < 0 || y >= g.wh) continue;
            const T* xr = wide + ((c * g.wd + z) * g.wh + y) * g.ww - g.pad;
            for (long l = 0; l < k; ++l) {
              const auto [lo, hi] = direct_w_range(g, l);
              const T* xs = xr + l;
              T row = T{0};
              for (long w = lo; w < hi; ++w) row += grow[w] * xs[w];
              acc[static_cast<std::size_t>((i * k + j) * k + l)] += row;
            }
          }
        }
      }
    T* out = weight_grad + (o * g.channels_wide + c) * k * k * k;
    for (std::size_t t = 0; t < acc.size(); ++t) out[t] = static_cast<T>(acc[t]);
  });
}

template <typename T>
void channel_sums(const T* data, long channels, long voxels, T* out) {
  for (long c = 0; c < channels; ++c) {
    double s = 0.0;
    const T* p = data + c * voxels;
    for (long i = 0; i < voxels; ++i) s += p[i];
    out[c] = static_cast<T>(s);
  }
}

template <typename T>
void check_conv_operands(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                         std::size_t input_channel_axis, std::size_t bias_channel_axis, const char* what) {
  require_rank(input, 4, what);
  require_rank(kernel, 5, what);
  if (kernel.dim(2) != kernel.dim(3) || kernel.dim(2) != kernel.dim(4)) {
    raise<ShapeError>(what, ": kernel must be cubic, got ", shape_string(kernel.shape()));
  }
  if (kernel.dim(input_channel_axis) != input.dim(0)) {
    raise<ShapeError>(what, ": input has ", input.dim(0), " channels but kernel ", shape_string(kernel.shape()),
                      " expects ", kernel.dim(input_channel_axis));
  }
  if (!bias.empty() && (bias.rank() != 1 || bias.dim(0) != kernel.dim(bias_channel_axis))) {
    raise<ShapeError>(what, ": bias shape ", shape_string(bias.shape()), " does not match ",
                      kernel.dim(bias_channel_axis), " output channels");
  }
}

inline void check_params(const ConvParams& p, const char* what) {
  if (p.stride < 1) raise<ConfigError>(what, ": stride must be positive, got ", p.stride);
  if (p.padding < 0) raise<ConfigError>(what, ": padding must be non-negative, got ", p.padding);
  if (p.output_padding < 0) raise<ConfigError>(what, ": output_padding must be non-negative");
}

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& input, const Tensor<T>& kernel, const ConvParams& p) {
  check_params(p, "conv3d");
  if (p.padding_mode != PaddingMode::zero) {
    raise<ConfigError>("conv3d: the raw kernel only pads with zeros; use conv3d() for reflect padding");
  }
  ConvGeometry g;
  g.channels_wide = static_cast<long>(input.dim(0));
  g.channels_narrow = static_cast<long>(kernel.dim(0));
  g.k = static_cast<long>(kernel.dim(2));
  g.stride = p.stride;
  g.pad = p.padding;
  g.wd = static_cast<long>(input.dim(1));
  g.wh = static_cast<long>(input.dim(2));
  g.ww = static_cast<long>(input.dim(3));
  long* narrow[3] = {&g.nd, &g.nh, &g.nw};
  for (std::size_t a = 0; a < 3; ++a) {
    const auto n = conv_output_size(input.dim(a + 1), kernel.dim(2), p.stride, p.padding);
    if (n == 0) {
      raise<ConfigError>("conv3d: kernel ", kernel.dim(2), " with padding ", p.padding,
                         " does not fit spatial axis ", a + 1, " of size ", input.dim(a + 1));
    }
    *narrow[a] = static_cast<long>(n);
  }
  return g;
}

template <typename T>
ConvGeometry conv_transpose_geometry(const Tensor<T>& input, const Tensor<T>& kernel, const ConvParams& p) {
  check_params(p, "conv3d_transpose");
  if (p.padding_mode != PaddingMode::zero) {
    raise<ConfigError>("conv3d_transpose: only zero padding is supported");
  }
  if (p.output_padding >= p.stride) {
    raise<ConfigError>("conv3d_transpose: output_padding ", p.output_padding, " must be smaller than stride ",
                       p.stride);
  }
  ConvGeometry g;
  g.channels_wide = static_cast<long>(kernel.dim(1));
  g.channels_narrow = static_cast<long>(input.dim(0));
  g.k = static_cast<long>(kernel.dim(2));
  g.stride = p.stride;
  g.pad = p.padding;
  g.nd = static_cast<long>(input.dim(1));
  g.nh = static_cast<long>(input.dim(2));
  g.nw = static_cast<long>(input.dim(3));
  long* wide[3] = {&g.wd, &g.wh, &g.ww};
  for (std::size_t a = 0; a < 3; ++a) {
    const auto n =
        conv_transpose_output_size(input.dim(a + 1), kernel.dim(2), p.stride, p.padding, p.output_padding);
    if (n == 0) {
      raise<ConfigError>("conv3d_transpose: non-positive output size on spatial axis ", a + 1);
    }
    *wide[a] = static_cast<long>(n);
  }
  return g;
}

}  // namespace detail

// Zero-padded 3D convolution. input [Cin,D,H,W], kernel [Cout,Cin,k,k,k],
// bias [Cout] (may be empty). Returns [Cout, D', H', W'].
template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                         const ConvParams& params) {
  detail::check_conv_operands(input, kernel, bias, 1, 0, "conv3d");
  const auto g = detail::conv_geometry(input, kernel, params);
  Tensor<T> out({static_cast<std::size_t>(g.channels_narrow), static_cast<std::size_t>(g.nd),
                 static_cast<std::size_t>(g.nh), static_cast<std::size_t>(g.nw)});
  const T* b = bias.empty() ? nullptr : bias.raw();
  if (detail::use_direct_path(g)) {
    detail::direct_apply(g, input.raw(), kernel.raw(), b, out.raw());
  } else {
    detail::conv_apply(g, input.raw(), kernel.raw(), b, out.raw());
  }
  return out;
}

template <typename T>
ConvGrads<T> conv3d_backward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& grad_out,
                             const ConvParams& params, bool want_input = true, bool want_params = true) {
  const auto g = detail::conv_geometry(input, kernel, params);
  const Shape out_shape{static_cast<std::size_t>(g.channels_narrow), static_cast<std::size_t>(g.nd),
                        static_cast<std::size_t>(g.nh), static_cast<std::size_t>(g.nw)};
  if (grad_out.shape() != out_shape) {
    raise<ShapeError>("conv3d backward: gradient shape ", shape_string(grad_out.shape()), " expected ",
                      shape_string(out_shape));
  }
  ConvGrads<T> grads;
  if (want_input) {
    grads.input = Tensor<T>(input.shape());
    if (detail::use_direct_path(g)) {
      detail::direct_apply_adjoint(g, grad_out.raw(), kernel.raw(), grads.input.raw());
    } else {
      detail::conv_apply_adjoint(g, grad_out.raw(), kernel.raw(), grads.input.raw());
    }
  }
  if (want_params) {
    grads.kernel = Tensor<T>(kernel.shape());
    if (detail::use_direct_path(g)) {
      detail::direct_weight_grad(g, input.raw(), grad_out.raw(), grads.kernel.raw());
    } else {
      detail::conv_weight_grad(g, input.raw(), grad_out.raw(), grads.kernel.raw());
    }
    grads.bias = Tensor<T>({kernel.dim(0)});
    detail::channel_sums(grad_out.raw(), g.channels_narrow, g.narrow_voxels(), grads.bias.raw());
  }
  return grads;
}

// Learnable upsampling: the adjoint of conv3d applied as a forward map.
// input [Cin,D,H,W], kernel [Cin,Cout,k,k,k], bias [Cout] (may be empty).
// With k=3, stride 2, padding 1, output_padding 1 every spatial axis doubles.
template <typename T>
Tensor<T> conv3d_transpose_forward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                                   const ConvParams& params) {
  detail::check_conv_operands(input, kernel, bias, 0, 1, "conv3d_transpose");
  const auto g = detail::conv_transpose_geometry(input, kernel, params);
  Tensor<T> out({static_cast<std::size_t>(g.channels_wide), static_cast<std::size_t>(g.wd),
                 static_cast<std::size_t>(g.wh), static_cast<std::size_t>(g.ww)});
  detail::conv_apply_adjoint(g, input.raw(), kernel.raw(), out.raw());
  if (!bias.empty()) {
    const std::size_t vox = static_cast<std::size_t>(g.wide_voxels());
    for (std::size_t c = 0; c < kernel.dim(1); ++c) {
      T* p = out.raw() + c * vox;
      for (std::size_t i = 0; i < vox; ++i) p[i] += bias[c];
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> conv3d_transpose_backward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& grad_out,
                                       const ConvParams& params, bool want_input = true, bool want_params = true) {
  const auto g = detail::conv_transpose_geometry(input, kernel, params);
  const Shape out_shape{static_cast<std::size_t>(g.channels_wide), static_cast<std::size_t>(g.wd),
                        static_cast<std::size_t>(g.wh), static_cast<std::size_t>(g.ww)};
  if (grad_out.shape() != out_shape) {
    raise<ShapeError>("conv3d_transpose backward: gradient shape ", shape_string(grad_out.shape()), " expected ",
                      shape_string(out_shape));
  }
  ConvGrads<T> grads;
  if (want_input) {
    grads.input = Tensor<T>(input.shape());
    detail::conv_apply(g, grad_out.raw(), kernel.raw(), static_cast<const T*>(nullptr), grads.input.raw());
  }
  if (want_params) {
    grads.kernel = Tensor<T>(kernel.shape());
    detail::conv_weight_grad(g, grad_out.raw(), input.raw(), grads.kernel.raw());
    grads.bias = Tensor<T>({kernel.dim(1)});
    detail::channel_sums(grad_out.raw(), g.channels_wide, g.wide_voxels(), grads.bias.raw());
  }
  return grads;
}

// conv3d with either padding mode; reflect padding is applied as a separate
// pad stage ahead of an unpadded convolution.
template <typename T>
GradPair<T, ConvGrads<T>> conv3d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                                 const ConvParams& params) {
  if (params.padding_mode == PaddingMode::reflect && params.padding > 0) {
    ConvParams inner = params;
    inner.padding = 0;
    inner.padding_mode = PaddingMode::zero;
    auto padded = pad_forward(input, static_cast<std::size_t>(params.padding), PaddingMode::reflect);
    auto value = conv3d_forward(padded, kernel, bias, inner);
    Shape in_shape = input.shape();
    return {std::move(value), [padded = std::move(padded), kernel, inner, in_shape,
                               width = static_cast<std::size_t>(params.padding)](const Tensor<T>& g) {
              auto grads = conv3d_backward(padded, kernel, g, inner);
              grads.input = pad_backward(in_shape, grads.input, width, PaddingMode::reflect);
              return grads;
            }};
  }
  ConvParams zero = params;
  zero.padding_mode = PaddingMode::zero;
  auto value = conv3d_forward(input, kernel, bias, zero);
  return {std::move(value),
          [input, kernel, zero](const Tensor<T>& g) { return conv3d_backward(input, kernel, g, zero); }};
}

template <typename T>
GradPair<T, ConvGrads<T>> conv3d_transpose(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                                           const ConvParams& params) {
  auto value = conv3d_transpose_forward(input, kernel, bias, params);
  return {std::move(value), [input, kernel, params](const Tensor<T>& g) {
            return conv3d_transpose_backward(input, kernel, g, params);
          }};
}

}  // namespace voxcycle
