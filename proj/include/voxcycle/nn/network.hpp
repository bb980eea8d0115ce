// Copyright 2026 The VoxCycle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "voxcycle/nn/layer_spec.hpp"
#include "voxcycle/ops/activation.hpp"
#include "voxcycle/ops/conv.hpp"
#include "voxcycle/ops/instance_norm.hpp"
#include "voxcycle/ops/pad.hpp"

namespace voxcycle {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
};

// Gradients aligned index-for-index with Network::parameters().
template <typename T>
using ParamGrads = std::vector<Tensor<T>>;

namespace detail {

enum class StageKind { pad, conv, conv_transpose, norm, act, skip_begin, skip_end };

struct Stage {
  StageKind kind = StageKind::pad;
  std::size_t pad_width = 0;
  PaddingMode pad_mode = PaddingMode::zero;
  ConvParams conv;
  Activation act = Activation::none;
  int first_param = -1;  // kernel/bias or gamma/beta at first_param, first_param + 1
};

}  // namespace detail

// What forward() records so that backward() can run. One trace per forward
// call, so the same network can appear several times in one objective.
template <typename T>
struct Trace {
  struct Record {
    Tensor<T> saved;  // stage input (conv, relu) or output (tanh, sigmoid)
    Shape input_shape;
    InstanceNormCache<T> norm;
  };
  std::vector<Record> records;
  Shape input_shape;
};

// A generator or discriminator compiled from its NetworkSpec into a flat
// sequence of primitive stages. Forward passes are const and may run
// concurrently; parameter updates need exclusive access.
template <typename T>
class Network {
 public:
  Network() = default;

  // Parameters are created with their spec-derived shapes, zero-filled, with
  // gamma = 1. Use init_weights() for a trainable network.
  explicit Network(NetworkSpec spec) : spec_(std::move(spec)) { compile(); }

  const NetworkSpec& spec() const noexcept { return spec_; }
  std::vector<NamedTensor<T>>& parameters() noexcept { return params_; }
  const std::vector<NamedTensor<T>>& parameters() const noexcept { return params_; }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += static_cast<std::int64_t>(p.value.size());
    return n;
  }

  ParamGrads<T> zero_gradients() const {
    ParamGrads<T> g;
    g.reserve(params_.size());
    for (const auto& p : params_) g.emplace_back(p.value.shape());
    return g;
  }

  // Runs the network. With a trace, records what backward() needs.
  Tensor<T> forward(const Tensor<T>& input, Trace<T>* trace = nullptr) const {
    shape_trace(spec_, input.shape());
    if (trace) {
      trace->records.assign(stages_.size(), {});
      trace->input_shape = input.shape();
    }
    Tensor<T> x = input;
    std::vector<Tensor<T>> skips;
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      const auto& st = stages_[i];
      auto* rec = trace ? &trace->records[i] : nullptr;
      if (rec) rec->input_shape = x.shape();
      switch (st.kind) {
        case detail::StageKind::pad:
          x = pad_forward(x, st.pad_width, st.pad_mode);
          break;
        case detail::StageKind::conv: {
          auto y = conv3d_forward(x, kernel(st), bias(st), st.conv);
          if (rec) rec->saved = std::move(x);
          x = std::move(y);
          break;
        }
        case detail::StageKind::conv_transpose: {
          auto y = conv3d_transpose_forward(x, kernel(st), bias(st), st.conv);
          if (rec) rec->saved = std::move(x);
          x = std::move(y);
          break;
        }
        case detail::StageKind::norm:
          x = instance_norm_forward(x, gamma(st), beta(st), kInstanceNormEpsilon, rec ? &rec->norm : nullptr);
          break;
        case detail::StageKind::act: {
          auto y = activation_forward(st.act, x);
          if (rec) rec->saved = saves_output(st.act) ? y : std::move(x);
          x = std::move(y);
          break;
        }
        case detail::StageKind::skip_begin:
          skips.push_back(x);
          break;
        case detail::StageKind::skip_end:
          x += skips.back();
          skips.pop_back();
          break;
      }
    }
    return x;
  }

  // Which side of zero every ReLU / LeakyReLU input fell on in a recorded
  // pass. Equal patterns mean both passes lie on the same linear piece.
  std::vector<bool> kink_pattern(const Trace<T>& trace) const {
    std::vector<bool> out;
    for (std::size_t i = 0; i < stages_.size() && i < trace.records.size(); ++i) {
      const auto& st = stages_[i];
      if (st.kind != detail::StageKind::act || saves_output(st.act) || st.act == Activation::none) continue;
      for (const T v : trace.records[i].saved.data()) out.push_back(v > T{0});
    }
    return out;
  }

  // Backpropagates grad_out through a recorded forward pass. Parameter
  // gradients are accumulated into `grads` when given; the input gradient is
  // returned when want_input is set (otherwise an empty tensor).
  Tensor<T> backward(const Trace<T>& trace, const Tensor<T>& grad_out, ParamGrads<T>* grads,
                     bool want_input = true) const {
    if (trace.records.size() != stages_.size()) {
      raise<ShapeError>("backward: trace does not belong to this network");
    }
    if (grads && grads->size() != params_.size()) {
      raise<ShapeError>("backward: gradient buffer has ", grads->size(), " entries, network has ", params_.size());
    }
    // The first stage whose input gradient matters; everything before it only
    // feeds the network input.
    std::size_t first_needed = 0;
    if (!want_input) {
      while (first_needed < stages_.size() && stages_[first_needed].kind == detail::StageKind::pad) ++first_needed;
    }
    Tensor<T> g = grad_out;
    std::vector<Tensor<T>> skip_grads;
    for (std::size_t i = stages_.size(); i-- > 0;) {
      const auto& st = stages_[i];
      const auto& rec = trace.records[i];
      const bool need_input = want_input || i > first_needed;
      switch (st.kind) {
        case detail::StageKind::pad:
          if (!need_input) return {};
          g = pad_backward(rec.input_shape, g, st.pad_width, st.pad_mode);
          break;
        case detail::StageKind::conv:
        case detail::StageKind::conv_transpose: {
          const bool transpose = st.kind == detail::StageKind::conv_transpose;
          auto cg = transpose ? conv3d_transpose_backward(rec.saved, kernel(st), g, st.conv, need_input, grads != nullptr)
                              : conv3d_backward(rec.saved, kernel(st), g, st.conv, need_input, grads != nullptr);
          if (grads) {
            (*grads)[static_cast<std::size_t>(st.first_param)] += cg.kernel;
            (*grads)[static_cast<std::size_t>(st.first_param) + 1] += cg.bias;
          }
          if (!need_input) return {};
          g = std::move(cg.input);
          break;
        }
        case detail::StageKind::norm: {
          auto ng = instance_norm_backward(rec.norm, gamma(st), g, grads != nullptr);
          if (grads) {
            (*grads)[static_cast<std::size_t>(st.first_param)] += ng.gamma;
            (*grads)[static_cast<std::size_t>(st.first_param) + 1] += ng.beta;
          }
          g = std::move(ng.input);
          break;
        }
        case detail::StageKind::act:
          g = activation_backward(st.act, rec.saved, rec.saved, g);
          break;
        case detail::StageKind::skip_end:
          skip_grads.push_back(g);
          break;
        case detail::StageKind::skip_begin:
          g += skip_grads.back();
          skip_grads.pop_back();
          break;
      }
    }
    return g;
  }

 private:
  static bool saves_output(Activation a) { return a == Activation::tanh || a == Activation::sigmoid; }

  const Tensor<T>& kernel(const detail::Stage& s) const { return params_[static_cast<std::size_t>(s.first_param)].value; }
  const Tensor<T>& bias(const detail::Stage& s) const { return params_[static_cast<std::size_t>(s.first_param) + 1].value; }
  const Tensor<T>& gamma(const detail::Stage& s) const { return kernel(s); }
  const Tensor<T>& beta(const detail::Stage& s) const { return bias(s); }

  void add_param(std::string name, Shape shape, T fill) {
    params_.push_back({std::move(name), Tensor<T>(std::move(shape), fill)});
  }

  // conv (+ norm) (+ activation) for one unit, named prefix.conv / prefix.norm.
  void compile_unit(const std::string& prefix, LayerKind kind, std::size_t cin, const LayerSpec& l, bool normalized,
                    Activation act) {
    using detail::Stage;
    using detail::StageKind;
    const auto k = static_cast<std::size_t>(l.kernel);
    const auto cout = static_cast<std::size_t>(l.filters);
    ConvParams cp{.stride = l.stride, .padding = l.padding, .padding_mode = PaddingMode::zero,
                  .output_padding = l.output_padding};
    if (l.padding_mode == PaddingMode::reflect && l.padding > 0) {
      Stage p;
      p.kind = StageKind::pad;
      p.pad_width = static_cast<std::size_t>(l.padding);
      p.pad_mode = PaddingMode::reflect;
      stages_.push_back(p);
      cp.padding = 0;
    }
    Stage c;
    c.kind = kind == LayerKind::conv_transpose ? StageKind::conv_transpose : StageKind::conv;
    c.conv = cp;
    c.first_param = static_cast<int>(params_.size());
    if (kind == LayerKind::conv_transpose) {
      add_param(prefix + "conv.kernel", {cin, cout, k, k, k}, T{0});
    } else {
      add_param(prefix + "conv.kernel", {cout, cin, k, k, k}, T{0});
    }
    add_param(prefix + "conv.bias", {cout}, T{0});
    stages_.push_back(c);
    if (normalized) {
      Stage n;
      n.kind = StageKind::norm;
      n.first_param = static_cast<int>(params_.size());
      add_param(prefix + "norm.gamma", {cout}, T{1});
      add_param(prefix + "norm.beta", {cout}, T{0});
      stages_.push_back(n);
    }
    if (act != Activation::none) {
      Stage a;
      a.kind = StageKind::act;
      a.act = act;
      stages_.push_back(a);
    }
  }

  void compile() {
    std::size_t cin = static_cast<std::size_t>(spec_.input_channels);
    int row = 0;
    for (const auto& l : spec_.layers) {
      char prefix[32];
      std::snprintf(prefix, sizeof prefix, "layer%02d.", ++row);
      if (l.kind == LayerKind::residual_block) {
        if (static_cast<std::size_t>(l.filters) != cin || l.stride != 1) {
          raise<ConfigError>("row ", row, ": residual block must keep ", cin, " channels at stride 1");
        }
        stages_.push_back({detail::StageKind::skip_begin});
        LayerSpec inner = l;
        compile_unit(std::string(prefix) + "a.", LayerKind::conv, cin, inner, l.normalized, Activation::relu);
        compile_unit(std::string(prefix) + "b.", LayerKind::conv, cin, inner, l.normalized, Activation::none);
        stages_.push_back({detail::StageKind::skip_end});
        if (l.activation != Activation::none) {
          detail::Stage a;
          a.kind = detail::StageKind::act;
          a.act = l.activation;
          stages_.push_back(a);
        }
      } else {
        compile_unit(prefix, l.kind, cin, l, l.normalized, l.activation);
      }
      cin = static_cast<std::size_t>(l.filters);
    }
  }

  NetworkSpec spec_;
  std::vector<NamedTensor<T>> params_;
  std::vector<detail::Stage> stages_;
};

// Kernels ~ Normal(0, 0.02); biases 0; gamma 1; beta 0. Deterministic for a seed.
template <typename T>
Network<T> init_weights(const NetworkSpec& spec, std::uint64_t seed) {
  Network<T> net(spec);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  for (auto& p : net.parameters()) {
    if (p.name.ends_with(".kernel")) {
      for (auto& v : p.value.data()) v = static_cast<T>(normal(rng));
    }
  }
  return net;
}

}  // namespace voxcycle
