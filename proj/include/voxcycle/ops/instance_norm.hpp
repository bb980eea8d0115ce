// Copyright 2026 The VoxCycle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "voxcycle/ops/grad_pair.hpp"
#include "voxcycle/tensor.hpp"

namespace voxcycle {

inline constexpr double kInstanceNormEpsilon = 1e-5;

template <typename T>
struct InstanceNormGrads {
  Tensor<T> input;
  Tensor<T> gamma;
  Tensor<T> beta;
};

// Per-channel statistics kept for the backward pass.
template <typename T>
struct InstanceNormCache {
  Tensor<T> normalized;           // x_hat = (x - mean) * inv_std
  std::vector<double> inv_std;    // 1 / sqrt(var + eps), per channel
};

template <typename T>
Tensor<T> instance_norm_forward(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                                double epsilon, InstanceNormCache<T>* cache = nullptr) {
  require_rank(input, 4, "instance_norm");
  const std::size_t C = input.dim(0);
  const std::size_t vox = input.dim(1) * input.dim(2) * input.dim(3);
  if (vox < 2) {
    raise<DegenerateError>("instance_norm: per-channel statistics need at least 2 voxels, got spatial shape ",
                           shape_string(input.shape()));
  }
  if (gamma.shape() != Shape{C} || beta.shape() != Shape{C}) {
    raise<ShapeError>("instance_norm: gamma/beta must have shape [", C, "], got ", shape_string(gamma.shape()),
                      " and ", shape_string(beta.shape()));
  }
  Tensor<T> out(input.shape());
  if (cache) {
    cache->normalized = Tensor<T>(input.shape());
    cache->inv_std.assign(C, 0.0);
  }
  for (std::size_t c = 0; c < C; ++c) {
    const T* x = input.raw() + c * vox;
    double sum = 0.0;
    for (std::size_t i = 0; i < vox; ++i) sum += x[i];
    const double mean = sum / static_cast<double>(vox);
    double sq = 0.0;
    for (std::size_t i = 0; i < vox; ++i) {
      const double d = x[i] - mean;
      sq += d * d;
    }
    const double inv_std = 1.0 / std::sqrt(sq / static_cast<double>(vox) + epsilon);
    const double a = gamma[c] * inv_std;
    const double b = beta[c] - mean * a;
    T* y = out.raw() + c * vox;
    for (std::size_t i = 0; i < vox; ++i) y[i] = static_cast<T>(x[i] * a + b);
    if (cache) {
      cache->inv_std[c] = inv_std;
      T* xh = cache->normalized.raw() + c * vox;
      for (std::size_t i = 0; i < vox; ++i) xh[i] = static_cast<T>((x[i] - mean) * inv_std);
    }
  }
  return out;
}

// dx = gamma * inv_std * (dy - mean(dy) - x_hat * mean(dy * x_hat))
template <typename T>
InstanceNormGrads<T> instance_norm_backward(const InstanceNormCache<T>& cache, const Tensor<T>& gamma,
                                            const Tensor<T>& grad_out, bool want_params = true) {
  Tensor<T>::require_same_shape(cache.normalized, grad_out, "instance_norm backward");
  const std::size_t C = grad_out.dim(0);
  const std::size_t vox = grad_out.size() / C;
  InstanceNormGrads<T> grads;
  grads.input = Tensor<T>(grad_out.shape());
  if (want_params) {
    grads.gamma = Tensor<T>({C});
    grads.beta = Tensor<T>({C});
  }
  for (std::size_t c = 0; c < C; ++c) {
    const T* dy = grad_out.raw() + c * vox;
    const T* xh = cache.normalized.raw() + c * vox;
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::size_t i = 0; i < vox; ++i) {
      sum_dy += dy[i];
      sum_dy_xh += static_cast<double>(dy[i]) * xh[i];
    }
    if (want_params) {
      grads.gamma[c] = static_cast<T>(sum_dy_xh);
      grads.beta[c] = static_cast<T>(sum_dy);
    }
    const double n = static_cast<double>(vox);
    const double mean_dy = sum_dy / n;
    const double mean_dy_xh = sum_dy_xh / n;
    const double scale = gamma[c] * cache.inv_std[c];
    T* dx = grads.input.raw() + c * vox;
    for (std::size_t i = 0; i < vox; ++i) {
      dx[i] = static_cast<T>(scale * (dy[i] - mean_dy - xh[i] * mean_dy_xh));
    }
  }
  return grads;
}

template <typename T>
GradPair<T, InstanceNormGrads<T>> instance_norm(const Tensor<T>& input, const Tensor<T>& gamma,
                                                const Tensor<T>& beta, double epsilon = kInstanceNormEpsilon) {
  InstanceNormCache<T> cache;
  auto value = instance_norm_forward(input, gamma, beta, epsilon, &cache);
  return {std::move(value), [cache = std::move(cache), gamma](const Tensor<T>& g) {
            return instance_norm_backward(cache, gamma, g);
          }};
}

}  // namespace voxcycle
