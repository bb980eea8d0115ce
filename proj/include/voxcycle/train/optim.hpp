// Copyright 2026 The VoxCycle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "voxcycle/nn/network.hpp"

namespace voxcycle {

struct AdamHyper {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moments are allocated on the first step to mirror the parameter shapes.
template <typename T>
struct AdamState {
  AdamHyper hyper;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::int64_t t = 0;
};

template <typename T>
void adam_step(std::vector<NamedTensor<T>>& params, const ParamGrads<T>& grads, AdamState<T>& state) {
  if (grads.size() != params.size()) {
    raise<ShapeError>("adam_step: ", grads.size(), " gradients for ", params.size(), " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>::require_same_shape(params[i].value, grads[i], params[i].name.c_str());
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value.shape());
      state.v.emplace_back(p.value.shape());
    }
  } else if (state.m.size() != params.size()) {
    raise<ShapeError>("adam_step: optimizer state holds ", state.m.size(), " moments for ", params.size(),
                      " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>::require_same_shape(params[i].value, state.m[i], params[i].name.c_str());
  }

  const auto& h = state.hyper;
  ++state.t;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* p = params[i].value.raw();
    T* m = state.m[i].raw();
    T* v = state.v[i].raw();
    const T* g = grads[i].raw();
    for (std::size_t j = 0, n = grads[i].size(); j < n; ++j) {
      const double gj = g[j];
      const double mj = h.beta1 * m[j] + (1.0 - h.beta1) * gj;
      const double vj = h.beta2 * v[j] + (1.0 - h.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      p[j] = static_cast<T>(p[j] - h.lr * (mj / c1) / (std::sqrt(vj / c2) + h.epsilon));
    }
  }
}

// Constant for constant_epochs, then linear decay reaching 0 at total_epochs.
inline double lr_schedule(int epoch, double base_lr, int total_epochs = 200, int constant_epochs = 100) {
  if (total_epochs < 1 || constant_epochs < 0 || constant_epochs > total_epochs) {
    raise<ConfigError>("lr_schedule: need 0 <= constant_epochs (", constant_epochs, ") <= total_epochs (",
                       total_epochs, ")");
  }
  if (epoch < 1 || epoch > total_epochs) {
    raise<ConfigError>("lr_schedule: epoch ", epoch, " outside [1, ", total_epochs, "]");
  }
  if (epoch <= constant_epochs) return base_lr;
  return base_lr * static_cast<double>(total_epochs - epoch) / static_cast<double>(total_epochs - constant_epochs);
}

}  // namespace voxcycle
