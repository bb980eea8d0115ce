// Copyright 2026 The VoxCycle Authors
// SPDX-License-Identifier: Apache-2.0

// Toy two-domain data: ellipsoidal "heads" with bright blobs (domain A), and
// smoothed, intensity-inverted heads built from separate instances (domain B).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "voxcycle/io/volume.hpp"
#include "voxcycle/random.hpp"

namespace voxcycle {

struct ToyVolume {
  Tensor<float> intensity;  // [1, n, n, n], 0 outside the head
  Tensor<float> mask;       // 1 inside, 0 outside
};

inline ToyVolume toy_head(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double c = (double(n) - 1) / 2;
  const double rx = n * (0.36 + 0.06 * u(rng)), ry = n * (0.38 + 0.06 * u(rng)), rz = n * (0.34 + 0.06 * u(rng));
  struct Blob {
    double x, y, z, sigma, amp;
  };
  std::vector<Blob> blobs(2 + rng() % 3);
  for (auto& b : blobs) {
    b = {c + (u(rng) - 0.5) * rx, c + (u(rng) - 0.5) * ry, c + (u(rng) - 0.5) * rz, n * (0.06 + 0.06 * u(rng)),
         0.3 + 0.3 * u(rng)};
  }
  ToyVolume out{Tensor<float>({1, n, n, n}), Tensor<float>({1, n, n, n})};
  for (std::size_t z = 0; z < n; ++z)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        const double e = std::pow((x - c) / rx, 2) + std::pow((y - c) / ry, 2) + std::pow((z - c) / rz, 2);
        if (e > 1) continue;
        double v = 0.4;
        for (const auto& b : blobs) {
          const double d2 = (x - b.x) * (x - b.x) + (y - b.y) * (y - b.y) + (z - b.z) * (z - b.z);
          v += b.amp * std::exp(-d2 / (2 * b.sigma * b.sigma));
        }
        out.intensity.at(0, z, y, x) = static_cast<float>(std::min(v, 1.0));
        out.mask.at(0, z, y, x) = 1.0f;
      }
  return out;
}

// 3x3x3 mean filter with the window clipped at the borders.
inline Tensor<float> box_smooth(const Tensor<float>& t) {
  const std::size_t d = t.dim(1), h = t.dim(2), w = t.dim(3);
  Tensor<float> out(t.shape());
  for (std::size_t z = 0; z < d; ++z)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double s = 0;
        int count = 0;
        for (std::size_t k = z ? z - 1 : 0; k <= std::min(z + 1, d - 1); ++k)
          for (std::size_t j = y ? y - 1 : 0; j <= std::min(y + 1, h - 1); ++j)
            for (std::size_t i = x ? x - 1 : 0; i <= std::min(x + 1, w - 1); ++i) s += t.at(0, k, j, i), ++count;
        out.at(0, z, y, x) = static_cast<float>(s / count);
      }
  return out;
}

inline Volume toy_domain_a(std::size_t n, std::uint64_t seed) {
  Volume v;
  v.data = toy_head(n, seed).intensity;
  return v;
}

// Smoothed inversion of an A-style head; positive inside, 0 outside.
inline Volume toy_domain_b(std::size_t n, std::uint64_t seed) {
  const auto head = toy_head(n, seed);
  const auto smooth = box_smooth(head.intensity);
  Volume v;
  v.data = Tensor<float>(head.mask.shape());
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    if (head.mask[i] > 0) v.data[i] = 1.1f - smooth[i];
  }
  return v;
}

// Disjoint instances: domain A uses stream {0, i}, domain B stream {1, i}.
inline std::pair<std::vector<Volume>, std::vector<Volume>> toy_domains(std::size_t count_a, std::size_t count_b,
                                                                       std::size_t n, std::uint64_t seed) {
  std::pair<std::vector<Volume>, std::vector<Volume>> out;
  for (std::size_t i = 0; i < count_a; ++i) {
    out.first.push_back(toy_domain_a(n, derive_seed(seed, {0, i})));
    out.first.back().source = "toy_a_" + std::to_string(i);
  }
  for (std::size_t i = 0; i < count_b; ++i) {
    out.second.push_back(toy_domain_b(n, derive_seed(seed, {1, i})));
    out.second.back().source = "toy_b_" + std::to_string(i);
  }
  return out;
}

}  // namespace voxcycle
