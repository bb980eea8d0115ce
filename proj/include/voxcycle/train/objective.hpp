// Copyright 2026 The VoxCycle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <utility>

#include "voxcycle/nn/network.hpp"
#include "voxcycle/train/losses.hpp"

namespace voxcycle {

struct LossWeights {
  double lambda_cycle = 10.0;
  double lambda_identity = 0.0;

  void validate() const {
    if (!std::isfinite(lambda_cycle) || lambda_cycle < 0) {
      raise<ConfigError>("lambda_cycle must be finite and non-negative, got ", lambda_cycle);
    }
    if (!std::isfinite(lambda_identity) || lambda_identity < 0) {
      raise<ConfigError>("lambda_identity must be finite and non-negative, got ", lambda_identity);
    }
  }
};

// The four networks of one model. Domain A's discriminator judges volumes
// claimed to come from A, so it sees G_B2A output.
template <typename T>
struct CycleGan {
  Network<T> g_a2b;
  Network<T> g_b2a;
  Network<T> d_a;
  Network<T> d_b;
};

template <typename T>
CycleGan<T> make_cycle_gan(const NetworkSpec& generator, const NetworkSpec& discriminator, std::uint64_t seed) {
  return {init_weights<T>(generator, seed), init_weights<T>(generator, seed + 1),
          init_weights<T>(discriminator, seed + 2), init_weights<T>(discriminator, seed + 3)};
}

struct GeneratorLosses {
  double adv_a2b = 0;  // D_B on G_A2B(a), target real
  double adv_b2a = 0;  // D_A on G_B2A(b), target real
  double cycle_a = 0;
  double cycle_b = 0;
  double identity_a = 0;  // |G_B2A(a) - a|, only when lambda_identity > 0
  double identity_b = 0;
  double total = 0;
};

template <typename T>
struct GeneratorResult {
  GeneratorLosses losses;
  ParamGrads<T> grad_a2b;
  ParamGrads<T> grad_b2a;
  Tensor<T> fake_b;  // G_A2B(a)
  Tensor<T> fake_a;  // G_B2A(b)
};

inline double generator_total(const GeneratorLosses& l, const LossWeights& w) {
  double total = (l.adv_a2b + l.adv_b2a) + w.lambda_cycle * (l.cycle_a + l.cycle_b);
  if (w.lambda_identity > 0) total += w.lambda_identity * (l.identity_a + l.identity_b);
  return total;
}

namespace detail {

template <typename T>
void add_scaled(Tensor<T>& dst, const Tensor<T>& src, double scale) {
  const T s = static_cast<T>(scale);
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
}

template <typename T>
Tensor<T> scaled(Tensor<T> t, double scale) {
  t *= static_cast<T>(scale);
  return t;
}

}  // namespace detail

// Both generators' loss and gradients; discriminators are held fixed.
template <typename T>
GeneratorResult<T> generator_objective(const Tensor<T>& real_a, const Tensor<T>& real_b, const CycleGan<T>& nets,
                                       const LossWeights& w) {
  w.validate();
  GeneratorResult<T> r;
  r.grad_a2b = nets.g_a2b.zero_gradients();
  r.grad_b2a = nets.g_b2a.zero_gradients();

  Trace<T> t_fake_b, t_rec_a, t_fake_a, t_rec_b, t_score_b, t_score_a;
  r.fake_b = nets.g_a2b.forward(real_a, &t_fake_b);
  r.fake_a = nets.g_b2a.forward(real_b, &t_fake_a);
  const auto rec_a = nets.g_b2a.forward(r.fake_b, &t_rec_a);
  const auto rec_b = nets.g_a2b.forward(r.fake_a, &t_rec_b);
  const auto score_b = nets.d_b.forward(r.fake_b, &t_score_b);
  const auto score_a = nets.d_a.forward(r.fake_a, &t_score_a);

  auto adv_b = adversarial_loss_grad(score_b, true);
  auto adv_a = adversarial_loss_grad(score_a, true);
  auto cyc_a = cycle_loss_grad(rec_a, real_a);
  auto cyc_b = cycle_loss_grad(rec_b, real_b);
  r.losses.adv_a2b = adv_b.value;
  r.losses.adv_b2a = adv_a.value;
  r.losses.cycle_a = cyc_a.value;
  r.losses.cycle_b = cyc_b.value;

  // d/d fake_b collects the adversarial path through D_B and the cycle path
  // through G_B2A; the latter also yields G_B2A parameter gradients.
  auto g_fake_b = nets.d_b.backward(t_score_b, adv_b.grad, nullptr, true);
  detail::add_scaled(g_fake_b, nets.g_b2a.backward(t_rec_a, detail::scaled(std::move(cyc_a.grad), w.lambda_cycle),
                                                   &r.grad_b2a, true),
                     1.0);
  auto g_fake_a = nets.d_a.backward(t_score_a, adv_a.grad, nullptr, true);
  detail::add_scaled(g_fake_a, nets.g_a2b.backward(t_rec_b, detail::scaled(std::move(cyc_b.grad), w.lambda_cycle),
                                                   &r.grad_a2b, true),
                     1.0);
  nets.g_a2b.backward(t_fake_b, g_fake_b, &r.grad_a2b, false);
  nets.g_b2a.backward(t_fake_a, g_fake_a, &r.grad_b2a, false);

  if (w.lambda_identity > 0) {
    Trace<T> t_idt_a, t_idt_b;
    const auto idt_b = nets.g_a2b.forward(real_b, &t_idt_b);
    const auto idt_a = nets.g_b2a.forward(real_a, &t_idt_a);
    auto id_b = cycle_loss_grad(idt_b, real_b);
    auto id_a = cycle_loss_grad(idt_a, real_a);
    r.losses.identity_b = id_b.value;
    r.losses.identity_a = id_a.value;
    nets.g_a2b.backward(t_idt_b, detail::scaled(std::move(id_b.grad), w.lambda_identity), &r.grad_a2b, false);
    nets.g_b2a.backward(t_idt_a, detail::scaled(std::move(id_a.grad), w.lambda_identity), &r.grad_b2a, false);
  }
  r.losses.total = generator_total(r.losses, w);
  return r;
}

template <typename T>
struct DiscriminatorResult {
  double loss = 0;
  double real_term = 0;  // adv(d(real), real)
  double fake_term = 0;  // adv(d(fake), fake)
  ParamGrads<T> grads;
};

// 0.5 * [adv(d(real), real) + adv(d(fake), fake)]; the fake is a constant input.
template <typename T>
DiscriminatorResult<T> discriminator_objective(const Network<T>& d, const Tensor<T>& real, const Tensor<T>& fake) {
  Tensor<T>::require_same_shape(real, fake, "discriminator_objective");
  DiscriminatorResult<T> r;
  r.grads = d.zero_gradients();
  Trace<T> t_real, t_fake;
  const auto s_real = d.forward(real, &t_real);
  const auto s_fake = d.forward(fake, &t_fake);
  auto l_real = adversarial_loss_grad(s_real, true);
  auto l_fake = adversarial_loss_grad(s_fake, false);
  r.real_term = l_real.value;
  r.fake_term = l_fake.value;
  r.loss = 0.5 * (r.real_term + r.fake_term);
  d.backward(t_real, detail::scaled(std::move(l_real.grad), 0.5), &r.grads, false);
  d.backward(t_fake, detail::scaled(std::move(l_fake.grad), 0.5), &r.grads, false);
  return r;
}

}  // namespace voxcycle
