// Copyright 2026 The VoxCycle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>

#include "voxcycle/tensor.hpp"

namespace voxcycle {

// Forward value of a differentiable op plus the map from the upstream gradient
// to the gradients of every input and parameter. The closure owns copies of
// whatever the backward pass needs.
template <typename T, typename Grads>
struct GradPair {
  Tensor<T> value;
  std::function<Grads(const Tensor<T>&)> backward;
};

}  // namespace voxcycle
