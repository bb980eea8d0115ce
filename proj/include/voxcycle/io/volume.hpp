// Copyright 2026 The VoxCycle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "voxcycle/error.hpp"
#include "voxcycle/tensor.hpp"

namespace voxcycle {

// Intensity window mapped onto [-1, 1].
struct NormStats {
  double lo = 0;
  double hi = 1;
};

// Axis order of sizes and offsets given to crop(); matches the file's
// (i, j, k) = (x, y, z) convention.
using Extent3 = std::array<std::size_t, 3>;

inline constexpr Extent3 kWorkingGrid{152, 180, 120};
inline constexpr double kDefaultPercentile = 99.5;

// qform/sform block of a NIfTI-1 header, carried through untouched.
using OrientationBytes = std::array<std::uint8_t, 76>;

// Single-channel volume held as [1, D=z, H=y, W=x], the file's voxel order.
struct Volume {
  Tensor<float> data;
  std::array<double, 3> voxel_size{1.0, 1.0, 1.0};  // mm along x, y, z
  std::optional<NormStats> norm;
  std::optional<OrientationBytes> orientation;
  double qfac = 1.0;  // sign of the third quaternion axis, pixdim[0]
  std::string source;

  Extent3 extent() const { return {data.dim(3), data.dim(2), data.dim(1)}; }
};

inline void require_volume_tensor(const Tensor<float>& t, const char* what) {
  if (t.rank() != 4 || t.dim(0) != 1) {
    raise<ShapeError>(what, ": expected a [1, D, H, W] volume, got ", shape_string(t.shape()));
  }
}

inline Extent3 centered_offset(const Extent3& source, const Extent3& target) {
  Extent3 off{};
  for (std::size_t a = 0; a < 3; ++a) off[a] = source[a] >= target[a] ? (source[a] - target[a]) / 2 : 0;
  return off;
}

// Sub-block copy. Sizes and offsets are (x, y, z); offset defaults to centered.
inline Volume crop(const Volume& v, const Extent3& target = kWorkingGrid, std::optional<Extent3> offset = {}) {
  require_volume_tensor(v.data, "crop");
  const Extent3 src = v.extent();
  const Extent3 off = offset.value_or(centered_offset(src, target));
  static constexpr const char* kAxis[3] = {"x", "y", "z"};
  for (std::size_t a = 0; a < 3; ++a) {
    if (target[a] == 0) raise<BoundsError>("crop: target ", kAxis[a], " size is zero");
    if (off[a] + target[a] > src[a]) {
      raise<BoundsError>("crop: ", kAxis[a], " axis offset ", off[a], " + size ", target[a], " exceeds source size ",
                         src[a]);
    }
  }
  Volume out;
  out.voxel_size = v.voxel_size;
  out.norm = v.norm;
  out.orientation = v.orientation;
  out.qfac = v.qfac;
  out.source = v.source;
  out.data = Tensor<float>({1, target[2], target[1], target[0]});
  for (std::size_t z = 0; z < target[2]; ++z)
    for (std::size_t y = 0; y < target[1]; ++y) {
      const float* from = &v.data.at(0, z + off[2], y + off[1], off[0]);
      std::copy(from, from + target[0], &out.data.at(0, z, y, 0));
    }
  return out;
}

// Linear-interpolated percentile (0..100) of the nonzero voxels.
inline double nonzero_percentile(const Tensor<float>& t, double percentile) {
  if (!(percentile > 0 && percentile <= 100)) raise<ConfigError>("percentile must be in (0, 100], got ", percentile);
  std::vector<float> nz;
  for (float x : t.data())
    if (x != 0.0f) nz.push_back(x);
  if (nz.empty()) raise<DegenerateError>("volume has no nonzero voxels");
  const double rank = percentile / 100.0 * static_cast<double>(nz.size() - 1);
  const auto lo_i = static_cast<std::size_t>(std::floor(rank));
  const double frac = rank - static_cast<double>(lo_i);
  std::nth_element(nz.begin(), nz.begin() + static_cast<std::ptrdiff_t>(lo_i), nz.end());
  const double a = nz[lo_i];
  if (frac == 0.0 || lo_i + 1 >= nz.size()) return a;
  const double b = *std::min_element(nz.begin() + static_cast<std::ptrdiff_t>(lo_i) + 1, nz.end());
  return a + frac * (b - a);
}

inline float normalize_value(double x, const NormStats& s) {
  const double c = std::clamp(x, s.lo, s.hi);
  return static_cast<float>(2.0 * (c - s.lo) / (s.hi - s.lo) - 1.0);
}

inline float denormalize_value(double x, const NormStats& s) {
  return static_cast<float>((x + 1.0) * 0.5 * (s.hi - s.lo) + s.lo);
}

// Window [0, percentile of nonzero voxels], clipped and mapped to [-1, 1].
inline Volume normalize_intensity(const Volume& v, double percentile = kDefaultPercentile) {
  require_volume_tensor(v.data, "normalize_intensity");
  NormStats s{0.0, nonzero_percentile(v.data, percentile)};
  if (!(s.hi > s.lo)) {
    raise<DegenerateError>("normalize_intensity: empty intensity window [", s.lo, ", ", s.hi, "]");
  }
  Volume out = v;
  for (auto& x : out.data.data()) x = normalize_value(x, s);
  out.norm = s;
  return out;
}

// Same mapping with externally supplied statistics (e.g. a domain's running
// stats at translation time).
inline Volume normalize_with(const Volume& v, const NormStats& s) {
  if (!(s.hi > s.lo)) raise<DegenerateError>("normalize_with: empty intensity window [", s.lo, ", ", s.hi, "]");
  Volume out = v;
  for (auto& x : out.data.data()) x = normalize_value(x, s);
  out.norm = s;
  return out;
}

inline Volume denormalize(const Volume& v) {
  if (!v.norm) raise<ConfigError>("denormalize: volume carries no intensity statistics");
  Volume out = v;
  for (auto& x : out.data.data()) x = denormalize_value(x, *v.norm);
  out.norm.reset();
  return out;
}

}  // namespace voxcycle
