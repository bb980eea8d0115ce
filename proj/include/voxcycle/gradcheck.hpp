// Copyright 2026 The VoxCycle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "voxcycle/nn/network.hpp"

namespace voxcycle {

struct GradcheckCase {
  std::string name;
  NetworkSpec spec;
  Shape input;  // [C, D, H, W]
};

struct GradcheckResult {
  std::string name;
  double max_relative_error = 0;
  std::size_t entries = 0;
  std::size_t skipped = 0;  // entries whose +-step crosses a ReLU kink
};

// Relative error with an absolute floor on the denominator, so entries whose
// true gradient is zero compare on an absolute scale.
inline double relative_error(double analytic, double numeric, double floor = 1e-3) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Central differences of L = <w, net(x)> for a random probe w, checked on up
// to `per_tensor` entries of the input and of every parameter tensor. An entry
// whose perturbation flips any ReLU input across zero is skipped, since the
// difference quotient then spans two linear pieces.
inline GradcheckResult gradcheck_network(const GradcheckCase& c, std::uint64_t seed, std::size_t per_tensor = 16,
                                         double step = 1e-5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Network<double> net(c.spec);
  for (auto& p : net.parameters()) {
    const bool gamma = p.name.ends_with(".gamma");
    const double scale = p.name.ends_with(".kernel") ? 0.5 : 0.2;
    for (auto& v : p.value.data()) v = (gamma ? 1.0 : 0.0) + scale * u(rng);
  }
  Tensor<double> x(c.input);
  for (auto& v : x.data()) v = u(rng);
  Trace<double> trace;
  const Tensor<double> y = net.forward(x, &trace);
  Tensor<double> probe(y.shape());
  for (auto& v : probe.data()) v = u(rng);
  auto grads = net.zero_gradients();
  const Tensor<double> gx = net.backward(trace, probe, &grads, true);

  const auto pattern = net.kink_pattern(trace);
  bool crossed = false;
  auto loss = [&] {
    Trace<double> tr;
    const Tensor<double> out = net.forward(x, &tr);
    crossed = crossed || net.kink_pattern(tr) != pattern;
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * probe[i];
    return s;
  };
  GradcheckResult r{c.name, 0.0, 0, 0};
  auto check = [&](Tensor<double>& t, const Tensor<double>& analytic) {
    const std::size_t n = std::min(per_tensor, t.size());
    std::uniform_int_distribution<std::size_t> pick(0, t.size() - 1);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = n == t.size() ? k : pick(rng);
      const double saved = t[i];
      crossed = false;
      t[i] = saved + step;
      const double up = loss();
      t[i] = saved - step;
      const double down = loss();
      t[i] = saved;
      if (crossed) {
        ++r.skipped;
        continue;
      }
      r.max_relative_error = std::max(r.max_relative_error, relative_error(analytic[i], (up - down) / (2 * step)));
      ++r.entries;
    }
  };
  check(x, gx);
  for (std::size_t p = 0; p < grads.size(); ++p) check(net.parameters()[p].value, grads[p]);
  return r;
}

inline NetworkSpec single_layer(LayerSpec layer, int input_channels = 2) {
  NetworkSpec s;
  s.input_channels = input_channels;
  s.layers.push_back(layer);
  return s;
}

// One case per differentiable op plus miniature generator and discriminator.
inline std::vector<GradcheckCase> default_gradcheck_cases() {
  using K = LayerKind;
  using A = Activation;
  using P = PaddingMode;
  std::vector<GradcheckCase> cases;
  cases.push_back({"conv k3 s1 zero-pad", single_layer({K::conv, 3, 3, 1, A::none, false, 1, P::zero, 0}), {2, 5, 6, 4}});
  cases.push_back({"conv k4 s2", single_layer({K::conv, 3, 4, 2, A::none, false, 1, P::zero, 0}), {2, 6, 6, 8}});
  cases.push_back({"conv k3 s1 reflect-pad", single_layer({K::conv, 2, 3, 1, A::none, false, 2, P::reflect, 0}), {2, 5, 4, 6}});
  cases.push_back({"conv_transpose k3 s2", single_layer({K::conv_transpose, 2, 3, 2, A::none, false, 1, P::zero, 1}, 3), {3, 3, 4, 3}});
  cases.push_back({"instance norm", single_layer({K::conv, 3, 1, 1, A::none, true, 0, P::zero, 0}), {2, 4, 5, 3}});
  cases.push_back({"relu", single_layer({K::conv, 2, 1, 1, A::relu, false, 0, P::zero, 0}), {2, 4, 4, 4}});
  cases.push_back({"leaky relu", single_layer({K::conv, 2, 1, 1, A::leaky_relu, false, 0, P::zero, 0}), {2, 4, 4, 4}});
  cases.push_back({"tanh", single_layer({K::conv, 2, 1, 1, A::tanh, false, 0, P::zero, 0}), {2, 4, 4, 4}});
  cases.push_back({"sigmoid", single_layer({K::conv, 2, 1, 1, A::sigmoid, false, 0, P::zero, 0}), {2, 4, 4, 4}});
  cases.push_back({"residual block", single_layer({K::residual_block, 2, 3, 1, A::none, true, 1, P::reflect, 0}, 2), {2, 4, 5, 4}});
  cases.push_back({"generator (width/16)", build_generator(16), {1, 8, 8, 8}});
  cases.push_back({"discriminator (width/32)", build_discriminator(32), {1, 16, 16, 16}});
  return cases;
}

}  // namespace voxcycle
