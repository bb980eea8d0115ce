// Copyright 2026 The VoxCycle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>

#include "voxcycle/error.hpp"
#include "voxcycle/tensor.hpp"

namespace voxcycle {

// Scalar loss plus its gradient with respect to the first argument.
template <typename T>
struct LossGrad {
  double value = 0.0;
  Tensor<T> grad;
};

// Least-squares adversarial loss: mean((s - t)^2), t = 1 for real, 0 for fake.
template <typename T>
LossGrad<T> adversarial_loss_grad(const Tensor<T>& scores, bool target_is_real) {
  if (scores.empty()) raise<ShapeError>("adversarial_loss: empty score map");
  const double target = target_is_real ? 1.0 : 0.0;
  const double n = static_cast<double>(scores.size());
  LossGrad<T> out{0.0, Tensor<T>(scores.shape())};
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double d = static_cast<double>(scores[i]) - target;
    sum += d * d;
    out.grad[i] = static_cast<T>(2.0 * d / n);
  }
  out.value = sum / n;
  return out;
}

template <typename T>
double adversarial_loss(const Tensor<T>& scores, bool target_is_real) {
  if (scores.empty()) raise<ShapeError>("adversarial_loss: empty score map");
  const double target = target_is_real ? 1.0 : 0.0;
  double sum = 0.0;
  for (T s : scores.data()) {
    const double d = static_cast<double>(s) - target;
    sum += d * d;
  }
  return sum / static_cast<double>(scores.size());
}

// Mean absolute error. The subgradient at zero difference is 0.
template <typename T>
LossGrad<T> cycle_loss_grad(const Tensor<T>& reconstructed, const Tensor<T>& original) {
  Tensor<T>::require_same_shape(reconstructed, original, "cycle_loss");
  if (original.empty()) raise<ShapeError>("cycle_loss: empty volume");
  const double n = static_cast<double>(original.size());
  const T step = static_cast<T>(1.0 / n);
  LossGrad<T> out{0.0, Tensor<T>(original.shape())};
  double sum = 0.0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    const double d = static_cast<double>(reconstructed[i]) - static_cast<double>(original[i]);
    sum += std::abs(d);
    out.grad[i] = d > 0 ? step : (d < 0 ? -step : T{0});
  }
  out.value = sum / n;
  return out;
}

template <typename T>
double cycle_loss(const Tensor<T>& reconstructed, const Tensor<T>& original) {
  Tensor<T>::require_same_shape(reconstructed, original, "cycle_loss");
  if (original.empty()) raise<ShapeError>("cycle_loss: empty volume");
  double sum = 0.0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    sum += std::abs(static_cast<double>(reconstructed[i]) - static_cast<double>(original[i]));
  }
  return sum / static_cast<double>(original.size());
}

}  // namespace voxcycle
