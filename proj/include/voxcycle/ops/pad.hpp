// Copyright 2026 The VoxCycle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "voxcycle/ops/grad_pair.hpp"
#include "voxcycle/tensor.hpp"

namespace voxcycle {

enum class PaddingMode { zero, reflect };

namespace detail {

// For each padded coordinate, the source index along that axis or -1 for a
// zero-filled border. Reflection mirrors about the edge voxel without repeating
// it: [1,2,3] padded by 1 reads [2,1,2,3,2].
inline std::vector<long> pad_index_map(std::size_t n, std::size_t width, PaddingMode mode) {
  const long len = static_cast<long>(n);
  const long w = static_cast<long>(width);
  std::vector<long> map(n + 2 * width);
  for (long p = 0; p < len + 2 * w; ++p) {
    long src = p - w;
    if (src < 0 || src >= len) {
      if (mode == PaddingMode::zero) {
        src = -1;
      } else {
        src = src < 0 ? -src : 2 * (len - 1) - src;
      }
    }
    map[static_cast<std::size_t>(p)] = src;
  }
  return map;
}

}  // namespace detail

template <typename T>
Tensor<T> pad_forward(const Tensor<T>& input, std::size_t width, PaddingMode mode) {
  require_rank(input, 4, "pad");
  if (width == 0) return input;
  const std::size_t C = input.dim(0), D = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (mode == PaddingMode::reflect) {
    for (std::size_t axis = 1; axis < 4; ++axis) {
      if (width >= input.dim(axis)) {
        raise<ConfigError>("reflect padding of width ", width, " needs spatial axis ", axis,
                           " larger than the width, got ", input.dim(axis));
      }
    }
  }
  const auto md = detail::pad_index_map(D, width, mode);
  const auto mh = detail::pad_index_map(H, width, mode);
  const auto mw = detail::pad_index_map(W, width, mode);
  Tensor<T> out({C, md.size(), mh.size(), mw.size()});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t d = 0; d < md.size(); ++d)
      for (std::size_t h = 0; h < mh.size(); ++h) {
        T* dst = &out.at(c, d, h, 0);
        if (md[d] < 0 || mh[h] < 0) continue;
        const T* src = &input.at(c, static_cast<std::size_t>(md[d]), static_cast<std::size_t>(mh[h]), 0);
        for (std::size_t w = 0; w < mw.size(); ++w) {
          if (mw[w] >= 0) dst[w] = src[mw[w]];
        }
      }
  return out;
}

// Accumulates the gradient of the padded tensor back onto the interior.
template <typename T>
Tensor<T> pad_backward(const Shape& input_shape, const Tensor<T>& grad_out, std::size_t width,
                       PaddingMode mode) {
  if (width == 0) return grad_out;
  const std::size_t C = input_shape[0];
  const auto md = detail::pad_index_map(input_shape[1], width, mode);
  const auto mh = detail::pad_index_map(input_shape[2], width, mode);
  const auto mw = detail::pad_index_map(input_shape[3], width, mode);
  if (grad_out.shape() != Shape{C, md.size(), mh.size(), mw.size()}) {
    raise<ShapeError>("pad backward: gradient shape ", shape_string(grad_out.shape()),
                      " does not match padded input ", shape_string(input_shape));
  }
  Tensor<T> grad_in(input_shape);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t d = 0; d < md.size(); ++d)
      for (std::size_t h = 0; h < mh.size(); ++h) {
        if (md[d] < 0 || mh[h] < 0) continue;
        const T* src = &grad_out.at(c, d, h, 0);
        T* dst = &grad_in.at(c, static_cast<std::size_t>(md[d]), static_cast<std::size_t>(mh[h]), 0);
        for (std::size_t w = 0; w < mw.size(); ++w) {
          if (mw[w] >= 0) dst[mw[w]] += src[w];
        }
      }
  return grad_in;
}

template <typename T>
GradPair<T, Tensor<T>> pad(const Tensor<T>& input, std::size_t width, PaddingMode mode) {
  Shape shape = input.shape();
  return {pad_forward(input, width, mode), [shape, width, mode](const Tensor<T>& g) {
            return pad_backward(shape, g, width, mode);
          }};
}

}  // namespace voxcycle
