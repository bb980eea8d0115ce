// Copyright 2026 The VoxCycle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "voxcycle/io/volume.hpp"

namespace voxcycle {

struct Similarity {
  double mae = 0;
  double psnr = 0;  // +inf when the volumes are identical
};

// Peak is the reference's dynamic range (max - min).
inline Similarity evaluate(const Volume& pred, const Volume& reference) {
  if (pred.data.shape() != reference.data.shape()) {
    raise<ShapeError>("evaluate: prediction ", shape_string(pred.data.shape()), " vs reference ",
                      shape_string(reference.data.shape()));
  }
  const auto& p = pred.data;
  const auto& r = reference.data;
  if (r.size() == 0) raise<ShapeError>("evaluate: empty volumes");
  double abs_sum = 0, sq_sum = 0;
  double lo = r[0], hi = r[0];
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double d = double(p[i]) - double(r[i]);
    abs_sum += std::abs(d);
    sq_sum += d * d;
    lo = std::min(lo, double(r[i]));
    hi = std::max(hi, double(r[i]));
  }
  const double n = double(r.size());
  Similarity s;
  s.mae = abs_sum / n;
  const double mse = sq_sum / n;
  if (mse == 0) {
    s.psnr = std::numeric_limits<double>::infinity();
  } else {
    if (hi == lo) raise<DegenerateError>("evaluate: reference is constant, PSNR peak is zero");
    s.psnr = 10.0 * std::log10((hi - lo) * (hi - lo) / mse);
  }
  return s;
}

}  // namespace voxcycle
