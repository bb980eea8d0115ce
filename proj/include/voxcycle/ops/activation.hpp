// Copyright 2026 The VoxCycle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include "voxcycle/ops/grad_pair.hpp"
#include "voxcycle/tensor.hpp"

namespace voxcycle {

enum class Activation { none, relu, leaky_relu, tanh, sigmoid };

inline constexpr double kLeakySlope = 0.2;

inline std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::none: return "None";
    case Activation::relu: return "ReLU";
    case Activation::leaky_relu: return "LeakyReLU(0.2)";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "Sigmoid";
  }
  return "?";
}

template <typename T>
Tensor<T> activation_forward(Activation kind, const Tensor<T>& input) {
  Tensor<T> out = input;
  auto d = out.data();
  const T slope = static_cast<T>(kLeakySlope);
  switch (kind) {
    case Activation::none: break;
    case Activation::relu:
      for (auto& v : d) v = v < T{0} ? T{0} : v;  // NaN passes through
      break;
    case Activation::leaky_relu:
      for (auto& v : d) v = v > T{0} ? v : v * slope;
      break;
    case Activation::tanh:
      for (auto& v : d) v = std::tanh(v);
      break;
    case Activation::sigmoid:
      for (auto& v : d) v = T{1} / (T{1} + std::exp(-v));
      break;
  }
  return out;
}

// tanh and sigmoid differentiate through their output; the piecewise-linear
// kinds through their input.
template <typename T>
Tensor<T> activation_backward(Activation kind, const Tensor<T>& input, const Tensor<T>& output,
                              const Tensor<T>& grad_out) {
  Tensor<T>::require_same_shape(input, grad_out, "activation backward");
  Tensor<T> g = grad_out;
  const T slope = static_cast<T>(kLeakySlope);
  switch (kind) {
    case Activation::none: break;
    case Activation::relu:
      for (std::size_t i = 0; i < g.size(); ++i)
        if (input[i] <= T{0}) g[i] = T{0};
      break;
    case Activation::leaky_relu:
      for (std::size_t i = 0; i < g.size(); ++i)
        if (input[i] <= T{0}) g[i] *= slope;
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= T{1} - output[i] * output[i];
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= output[i] * (T{1} - output[i]);
      break;
  }
  return g;
}

template <typename T>
GradPair<T, Tensor<T>> activation(Activation kind, const Tensor<T>& input) {
  auto value = activation_forward(kind, input);
  return {value, [kind, input, value](const Tensor<T>& g) { return activation_backward(kind, input, value, g); }};
}

}  // namespace voxcycle
