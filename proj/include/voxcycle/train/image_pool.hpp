// Copyright 2026 The VoxCycle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "voxcycle/tensor.hpp"

namespace voxcycle {

// History of generated volumes shown to a discriminator.
template <typename T>
class ImagePool {
 public:
  explicit ImagePool(std::size_t capacity = 50, std::uint64_t seed = 0) : capacity_(capacity), rng_(seed) {}

  Tensor<T> query(Tensor<T> candidate) {
    if (capacity_ == 0) return candidate;
    if (buffer_.size() < capacity_) {
      buffer_.push_back(candidate);
      return candidate;
    }
    if ((rng_() >> 63) == 0) return candidate;
    std::uniform_int_distribution<std::size_t> pick(0, buffer_.size() - 1);
    std::swap(buffer_[pick(rng_)], candidate);
    return candidate;
  }

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return buffer_.size(); }
  const std::vector<Tensor<T>>& buffer() const noexcept { return buffer_; }
  std::vector<Tensor<T>>& buffer() noexcept { return buffer_; }
  std::mt19937_64& rng() noexcept { return rng_; }
  const std::mt19937_64& rng() const noexcept { return rng_; }

 private:
  std::size_t capacity_;
  std::vector<Tensor<T>> buffer_;
  std::mt19937_64 rng_;
};

}  // namespace voxcycle
