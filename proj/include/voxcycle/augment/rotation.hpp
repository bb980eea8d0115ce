// Copyright 2026 The VoxCycle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "voxcycle/io/volume.hpp"
#include "voxcycle/parallel.hpp"
#include "voxcycle/random.hpp"

namespace voxcycle {

using Mat3 = std::array<std::array<double, 3>, 3>;

inline constexpr double kRotationSigmaDegrees = 10.0;
inline constexpr int kRotationsPerVolume = 10;

inline Mat3 matmul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline double determinant(const Mat3& m) {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

// Angles in degrees about x, y, z; matrix = Rz * Ry * Rx acting on (x, y, z)
// voxel coordinates relative to the volume centre.
struct Rotation {
  std::array<double, 3> angles{0, 0, 0};
  Mat3 matrix{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

  bool is_identity() const {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (matrix[i][j] != (i == j ? 1.0 : 0.0)) return false;
    return true;
  }
};

inline Rotation make_rotation(double ax_deg, double ay_deg, double az_deg) {
  const double k = std::numbers::pi / 180.0;
  const double cx = std::cos(ax_deg * k), sx = std::sin(ax_deg * k);
  const double cy = std::cos(ay_deg * k), sy = std::sin(ay_deg * k);
  const double cz = std::cos(az_deg * k), sz = std::sin(az_deg * k);
  const Mat3 rx{{{1, 0, 0}, {0, cx, -sx}, {0, sx, cx}}};
  const Mat3 ry{{{cy, 0, sy}, {0, 1, 0}, {-sy, 0, cy}}};
  const Mat3 rz{{{cz, -sz, 0}, {sz, cz, 0}, {0, 0, 1}}};
  return {{ax_deg, ay_deg, az_deg}, matmul(rz, matmul(ry, rx))};
}

// Three independent Normal(0, sigma^2) angles; always draws three values.
template <typename Rng>
Rotation sample_rotation(Rng& rng, double sigma_degrees = kRotationSigmaDegrees) {
  if (!(sigma_degrees >= 0) || !std::isfinite(sigma_degrees)) {
    raise<ConfigError>("rotation sigma must be finite and non-negative, got ", sigma_degrees);
  }
  std::normal_distribution<double> unit(0.0, 1.0);
  const double ax = sigma_degrees * unit(rng);
  const double ay = sigma_degrees * unit(rng);
  const double az = sigma_degrees * unit(rng);
  return make_rotation(ax, ay, az);
}

namespace detail {

// Coordinates within this distance of a grid point sample it exactly.
inline constexpr double kGridSnap = 1e-6;

inline double snap(double q) {
  const double r = std::round(q);
  return std::abs(q - r) < kGridSnap ? r : q;
}

}  // namespace detail

// Inverse mapping: out(p) = in(R^T (p - c) + c), trilinear, zero outside.
inline Volume rotate_volume(const Volume& v, const Rotation& r) {
  require_volume_tensor(v.data, "rotate_volume");
  if (r.is_identity()) return v;
  const std::size_t nz = v.data.dim(1), ny = v.data.dim(2), nx = v.data.dim(3);
  const double c[3] = {(double(nx) - 1) / 2, (double(ny) - 1) / 2, (double(nz) - 1) / 2};
  const double n[3] = {double(nx), double(ny), double(nz)};
  const auto& m = r.matrix;
  Volume out = v;
  const float* src = v.data.raw();
  float* dst = out.data.raw();
  auto at = [&](std::size_t x, std::size_t y, std::size_t z) { return double(src[(z * ny + y) * nx + x]); };
  parallel_for(nz, [&](std::size_t z) {
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t x = 0; x < nx; ++x) {
        const double p[3] = {double(x) - c[0], double(y) - c[1], double(z) - c[2]};
        double q[3];
        bool inside = true;
        for (int i = 0; i < 3; ++i) {
          q[i] = detail::snap(m[0][i] * p[0] + m[1][i] * p[1] + m[2][i] * p[2] + c[i]);
          inside &= q[i] >= 0 && q[i] <= n[i] - 1;
        }
        double value = 0;
        if (inside) {
          std::size_t i0[3], i1[3];
          double f[3];
          for (int i = 0; i < 3; ++i) {
            const double fl = std::floor(q[i]);
            i0[i] = static_cast<std::size_t>(fl);
            f[i] = q[i] - fl;
            i1[i] = f[i] > 0 ? i0[i] + 1 : i0[i];
          }
          const double c00 = at(i0[0], i0[1], i0[2]) * (1 - f[0]) + at(i1[0], i0[1], i0[2]) * f[0];
          const double c10 = at(i0[0], i1[1], i0[2]) * (1 - f[0]) + at(i1[0], i1[1], i0[2]) * f[0];
          const double c01 = at(i0[0], i0[1], i1[2]) * (1 - f[0]) + at(i1[0], i0[1], i1[2]) * f[0];
          const double c11 = at(i0[0], i1[1], i1[2]) * (1 - f[0]) + at(i1[0], i1[1], i1[2]) * f[0];
          const double c0 = c00 * (1 - f[1]) + c10 * f[1];
          const double c1 = c01 * (1 - f[1]) + c11 * f[1];
          value = c0 * (1 - f[2]) + c1 * f[2];
        }
        dst[(z * ny + y) * nx + x] = static_cast<float>(value);
      }
  });
  return out;
}

inline std::string rotation_suffix(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "_rot%02d", index);
  return buf;
}

// The original followed by `rotations` rotated copies, drawn from `seed`.
inline std::vector<Volume> augment_volume(const Volume& v, int rotations, std::uint64_t seed,
                                          double sigma_degrees = kRotationSigmaDegrees) {
  if (rotations < 0) raise<ConfigError>("rotations per volume must be non-negative, got ", rotations);
  std::mt19937_64 rng(seed);
  std::vector<Volume> out;
  out.reserve(static_cast<std::size_t>(rotations) + 1);
  out.push_back(v);
  for (int k = 1; k <= rotations; ++k) {
    out.push_back(rotate_volume(v, sample_rotation(rng, sigma_degrees)));
    out.back().source = v.source + rotation_suffix(k);
  }
  return out;
}

// |out| = |in| * (1 + rotations); volume i uses derive_seed(seed, {i}).
inline std::vector<Volume> augment_dataset(const std::vector<Volume>& volumes, int rotations, std::uint64_t seed,
                                           double sigma_degrees = kRotationSigmaDegrees) {
  if (volumes.empty()) raise<ConfigError>("augment_dataset: no input volumes");
  std::vector<std::vector<Volume>> per(volumes.size());
  for (std::size_t i = 0; i < volumes.size(); ++i) {
    per[i] = augment_volume(volumes[i], rotations, derive_seed(seed, {i}), sigma_degrees);
  }
  std::vector<Volume> out;
  out.reserve(volumes.size() * (static_cast<std::size_t>(rotations) + 1));
  for (auto& group : per)
    for (auto& v : group) out.push_back(std::move(v));
  return out;
}

}  // namespace voxcycle
