// Copyright 2026 The VoxCycle Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "voxcycle/gradcheck.hpp"
#include "voxcycle/nn/layer_spec.hpp"
#include "voxcycle/nn/network.hpp"

namespace vc = voxcycle;
using vc::Tensor;
using vc::testing::max_relative_error;
using vc::testing::numeric_gradient;
using vc::testing::random_tensor;

TEST(ArchitectureTest, GeneratorRows) {
  const auto g = vc::build_generator();
  ASSERT_EQ(g.layers.size(), 12u);
  int residual = 0;
  for (const auto& l : g.layers) residual += l.kind == vc::LayerKind::residual_block;
  EXPECT_EQ(residual, 6);
  const int filters[] = {32, 64, 128, 128, 128, 128, 128, 128, 128, 64, 32, 1};
  const int kernels[] = {7, 3, 3, 3, 3, 3, 3, 3, 3, 3, 3, 7};
  const int strides[] = {1, 2, 2, 1, 1, 1, 1, 1, 1, 2, 2, 1};
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(g.layers[i].filters, filters[i]) << i;
    EXPECT_EQ(g.layers[i].kernel, kernels[i]) << i;
    EXPECT_EQ(g.layers[i].stride, strides[i]) << i;
  }
  EXPECT_EQ(g.layers[0].activation, vc::Activation::relu);
  EXPECT_EQ(g.layers[5].activation, vc::Activation::none);
  EXPECT_EQ(g.layers[9].kind, vc::LayerKind::conv_transpose);
  EXPECT_EQ(g.layers[11].activation, vc::Activation::tanh);
  EXPECT_FALSE(g.layers[11].normalized);
}

TEST(ArchitectureTest, DiscriminatorRows) {
  const auto d = vc::build_discriminator();
  ASSERT_EQ(d.layers.size(), 5u);
  const int filters[] = {64, 128, 256, 512, 1};
  const int strides[] = {2, 2, 1, 1, 1};
  const bool norm[] = {false, true, true, true, false};
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(d.layers[i].filters, filters[i]);
    EXPECT_EQ(d.layers[i].stride, strides[i]);
    EXPECT_EQ(d.layers[i].kernel, 4);
    EXPECT_EQ(d.layers[i].normalized, norm[i]);
  }
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(d.layers[i].activation, vc::Activation::leaky_relu);
  EXPECT_EQ(d.layers[4].activation, vc::Activation::sigmoid);
}

TEST(ArchitectureTest, ParameterCounts) {
  EXPECT_EQ(vc::parameter_count(vc::NetworkSpec{}), 0);
  vc::NetworkSpec first;
  first.layers.push_back(vc::build_generator().layers[0]);
  EXPECT_EQ(vc::parameter_count(first), 11008 + 64);
  first.layers[0].normalized = false;
  EXPECT_EQ(vc::parameter_count(first), 7 * 7 * 7 * 1 * 32 + 32);
  vc::NetworkSpec disc1;
  disc1.layers.push_back(vc::build_discriminator().layers[0]);
  EXPECT_EQ(vc::parameter_count(disc1), 4160);

  for (const auto& spec : {vc::build_generator(), vc::build_discriminator(), vc::build_generator(8)}) {
    vc::Network<float> net(spec);
    EXPECT_EQ(net.parameter_count(), vc::parameter_count(spec));
  }
}

TEST(ReceptiveFieldTest, Recurrence) {
  EXPECT_EQ(vc::receptive_field(vc::custom_conv_stack({{4, 2}, {4, 2}, {4, 2}, {4, 1}, {4, 1}})), 70);
  EXPECT_EQ(vc::receptive_field(vc::custom_conv_stack({{4, 2}})), 4);
  const auto rep = vc::receptive_field_report(vc::build_discriminator());
  EXPECT_EQ(rep.recurrence, 46);
  ASSERT_TRUE(rep.stated.has_value());
  EXPECT_EQ(*rep.stated, 51);
  EXPECT_TRUE(rep.discrepancy());
  EXPECT_THROW(vc::receptive_field(vc::build_generator()), vc::UnsupportedError);
}

TEST(ReceptiveFieldTest, MonotoneInKernelAndStride) {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> ks(1, 7), ss(1, 3), len(1, 6);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::pair<int, int>> layers(static_cast<std::size_t>(len(rng)));
    for (auto& l : layers) l = {ks(rng), ss(rng)};
    const long base = vc::receptive_field(vc::custom_conv_stack(layers));
    auto bigger_k = layers;
    bigger_k[rng() % layers.size()].first += 1;
    EXPECT_GT(vc::receptive_field(vc::custom_conv_stack(bigger_k)), base);
    auto bigger_s = layers;
    bigger_s[rng() % layers.size()].second += 1;
    EXPECT_GE(vc::receptive_field(vc::custom_conv_stack(bigger_s)), base);
  }
}

TEST(ShapeTraceTest, PaperSizedVolumes) {
  const auto gen = vc::shape_trace(vc::build_generator(), {1, 152, 180, 120});
  EXPECT_EQ(gen.back().output, (vc::Shape{1, 152, 180, 120}));
  EXPECT_EQ(gen[2].output, (vc::Shape{128, 38, 45, 30}));
  EXPECT_EQ(gen[9].output, (vc::Shape{64, 76, 90, 60}));

  // Compose the per-layer size formula independently.
  std::size_t dims[3] = {152, 180, 120};
  for (const auto& l : vc::build_discriminator().layers)
    for (auto& d : dims) d = (d + 2 * 1 - 4) / std::size_t(l.stride) + 1;
  const auto disc = vc::shape_trace(vc::build_discriminator(), {1, 152, 180, 120});
  EXPECT_EQ(disc.back().output, (vc::Shape{1, dims[0], dims[1], dims[2]}));
  EXPECT_EQ(disc.back().output, (vc::Shape{1, 35, 42, 27}));
}

TEST(ShapeTraceTest, IndivisibleAxisIsNamed) {
  try {
    vc::shape_trace(vc::build_generator(), {1, 24, 26, 24});
    FAIL() << "expected ConfigError";
  } catch (const vc::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("height"), std::string::npos) << e.what();
  }
  EXPECT_THROW(vc::shape_trace(vc::build_generator(), {2, 24, 24, 24}), vc::ShapeError);
}

TEST(ShapeTraceTest, GeneratorPreservesShapeProperty) {
  std::mt19937_64 rng(22);
  std::uniform_int_distribution<int> q(1, 8);
  const auto spec = vc::build_generator();
  for (int trial = 0; trial < 200; ++trial) {
    vc::Shape s{1, std::size_t(4 * q(rng)), std::size_t(4 * q(rng)), std::size_t(4 * q(rng))};
    bool ok = true;
    for (std::size_t a = 1; a < 4; ++a) ok &= s[a] >= 8;  // reflect pad 1 at the 1/4 scale needs >= 2 voxels
    if (!ok) continue;
    EXPECT_EQ(vc::shape_trace(spec, s).back().output, s);
  }
}

TEST(LayerTableTest, ListsEveryRow) {
  const auto t = vc::layer_table(vc::build_discriminator());
  EXPECT_NE(t.find("# discriminator"), std::string::npos);
  EXPECT_NE(t.find("512"), std::string::npos);
  EXPECT_NE(t.find("Sigmoid"), std::string::npos);
  EXPECT_EQ(std::count(t.begin(), t.end(), '\n'), 7);
}

TEST(InitWeightsTest, DeterministicAndDistributed) {
  const auto spec = vc::build_discriminator();
  auto a = vc::init_weights<float>(spec, 42);
  auto b = vc::init_weights<float>(spec, 42);
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    EXPECT_EQ(a.parameters()[i].value, b.parameters()[i].value);
  }
  // layer02 kernel: 64 * 128 * 4^3 = 524288 samples.
  const auto& k = a.parameters()[2];
  ASSERT_EQ(k.name, "layer02.conv.kernel");
  ASSERT_GE(k.value.size(), 100000u);
  double m = 0, v = 0;
  for (float x : k.value.data()) m += x;
  m /= double(k.value.size());
  for (float x : k.value.data()) v += (x - m) * (x - m);
  const double sd = std::sqrt(v / double(k.value.size() - 1));
  EXPECT_LT(std::abs(m), 0.001);
  EXPECT_NEAR(sd, 0.02, 0.001);
  for (const auto& p : a.parameters()) {
    if (p.name.ends_with(".bias") || p.name.ends_with(".beta")) {
      for (float x : p.value.data()) EXPECT_EQ(x, 0.0f);
    }
    if (p.name.ends_with(".gamma")) {
      for (float x : p.value.data()) EXPECT_EQ(x, 1.0f);
    }
  }
}

TEST(ForwardTest, GeneratorOutputRangeAndShape) {
  auto g = vc::init_weights<float>(vc::build_generator(8), 1);
  std::mt19937_64 rng(23);
  auto x = random_tensor<float>({1, 16, 12, 8}, rng, 0.5);
  auto y = g.forward(x);
  ASSERT_EQ(y.shape(), x.shape());
  for (float v : y.data()) {
    EXPECT_GT(v, -1.0f);
    EXPECT_LT(v, 1.0f);
  }
  EXPECT_THROW(g.forward(Tensor<float>({1, 16, 14, 8})), vc::ConfigError);
}

TEST(ForwardTest, GeneratorOnZeroInputIsSpatiallyConstant) {
  auto g = vc::init_weights<float>(vc::build_generator(4), 2);
  auto y = g.forward(Tensor<float>({1, 16, 16, 16}));
  for (std::size_t d = 4; d < 12; ++d)
    for (std::size_t h = 4; h < 12; ++h)
      for (std::size_t w = 4; w < 12; ++w) EXPECT_NEAR(y.at(0, d, h, w), y.at(0, 8, 8, 8), 1e-6f);
}

TEST(ForwardTest, DiscriminatorScoresInUnitInterval) {
  auto d = vc::init_weights<float>(vc::build_discriminator(), 3);
  auto s = d.forward(Tensor<float>({1, 64, 64, 64}));
  EXPECT_EQ(s.shape(), (vc::Shape{1, 13, 13, 13}));
  for (float v : s.data()) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 1.0f);
  }
}

TEST(ForwardTest, FullSizeGeneratorPreservesShape) {
  auto g = vc::init_weights<float>(vc::build_generator(), 4);
  Tensor<float> x({1, 152, 180, 120});
  auto y = g.forward(x);
  EXPECT_EQ(y.shape(), x.shape());
}

namespace {

// Checks d(sum(net(x) * r)) against finite differences for the input and a
// sample of entries from every parameter tensor. Biases feeding an instance
// norm have an exactly-zero gradient, so the relative error uses an absolute
// floor of 1e-3 on the denominator.
double network_gradcheck(vc::Network<double>& net, Tensor<double> x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  vc::Trace<double> trace;
  auto y = net.forward(x, &trace);
  auto r = random_tensor<double>(y.shape(), rng);
  auto grads = net.zero_gradients();
  auto gx = net.backward(trace, r, &grads);
  auto loss = [&] { return vc::dot(net.forward(x), r); };
  double worst = max_relative_error(gx, numeric_gradient(x, loss, 1e-5, 40), 40, 1e-3);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto& p = net.parameters()[i].value;
    worst = std::max(worst, max_relative_error(grads[i], numeric_gradient(p, loss, 1e-5, 12), 12, 1e-3));
  }
  return worst;
}

}  // namespace

TEST(NetworkGradCheckTest, TinyGenerator) {
  auto g = vc::init_weights<double>(vc::build_generator(8), 5);
  // Perturb norm affine parameters away from their identity init.
  std::mt19937_64 rng(24);
  std::normal_distribution<double> n(0.0, 0.1);
  for (auto& p : g.parameters()) {
    if (!p.name.ends_with(".kernel"))
      for (auto& v : p.value.data()) v += n(rng);
    else
      for (auto& v : p.value.data()) v *= 10.0;
  }
  auto x = random_tensor<double>({1, 8, 8, 8}, rng);
  EXPECT_LT(network_gradcheck(g, x, 25), 1e-4);
}

TEST(NetworkGradCheckTest, TinyDiscriminator) {
  auto d = vc::init_weights<double>(vc::build_discriminator(8), 6);
  std::mt19937_64 rng(26);
  for (auto& p : d.parameters())
    if (p.name.ends_with(".kernel"))
      for (auto& v : p.value.data()) v *= 10.0;
  auto x = random_tensor<double>({1, 16, 16, 16}, rng);
  EXPECT_LT(network_gradcheck(d, x, 27), 1e-4);
}

TEST(NetworkGradCheckTest, SkippingInputGradientKeepsParamGrads) {
  auto g = vc::init_weights<double>(vc::build_generator(8), 7);
  std::mt19937_64 rng(28);
  auto x = random_tensor<double>({1, 8, 8, 8}, rng);
  vc::Trace<double> trace;
  auto y = g.forward(x, &trace);
  auto r = random_tensor<double>(y.shape(), rng);
  auto full = g.zero_gradients(), partial = g.zero_gradients();
  g.backward(trace, r, &full, true);
  auto none = g.backward(trace, r, &partial, false);
  EXPECT_TRUE(none.empty());
  for (std::size_t i = 0; i < full.size(); ++i) EXPECT_EQ(full[i], partial[i]) << g.parameters()[i].name;
}

TEST(KinkPatternTest, TracksReluSigns) {
  vc::NetworkSpec s;
  s.layers.push_back({vc::LayerKind::conv, 2, 1, 1, vc::Activation::relu, false, 0, vc::PaddingMode::zero, 0});
  s.layers.push_back({vc::LayerKind::conv, 1, 1, 1, vc::Activation::tanh, false, 0, vc::PaddingMode::zero, 0});
  vc::Network<double> net(s);
  net.parameters()[0].value[0] = 1.0;
  net.parameters()[0].value[1] = -1.0;
  Tensor<double> x({1, 1, 1, 3});
  x[0] = 2, x[1] = -1, x[2] = 0.5;
  vc::Trace<double> tr;
  net.forward(x, &tr);
  // Only the ReLU row contributes; tanh is smooth.
  EXPECT_EQ(net.kink_pattern(tr), (std::vector<bool>{true, false, true, false, true, false}));
}

TEST(GradcheckSuiteTest, EveryCaseBelowTolerance) {
  for (std::uint64_t seed : {0u, 1u}) {
    for (const auto& c : vc::default_gradcheck_cases()) {
      const auto r = vc::gradcheck_network(c, seed);
      EXPECT_LT(r.max_relative_error, 1e-4) << c.name << " seed " << seed;
      EXPECT_GT(r.entries, 2 * r.skipped) << c.name;
    }
  }
}

TEST(GradcheckSuiteTest, CatchesWrongGradient) {
  EXPECT_GT(vc::relative_error(1.0, 1.01), 1e-4);
  EXPECT_LT(vc::relative_error(0.0, 1e-9), 1e-4);
}
