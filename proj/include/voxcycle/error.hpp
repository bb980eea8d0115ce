// Copyright 2026 The VoxCycle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace voxcycle {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor dimensions disagree with what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A user-chosen setting is invalid (bad stride/padding, indivisible dims,
// unknown config key, ...). The CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Statistics are undefined for the given data (single voxel, zero range).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// Malformed bytes: wrong magic, wrong header size, bad version.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Well-formed input using a feature this library does not handle.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

// Byte stream ended before the declared payload.
class LengthError : public Error {
 public:
  using Error::Error;
};

class BoundsError : public Error {
 public:
  using Error::Error;
};

// A loss or tensor became NaN/Inf. The CLI maps this to exit code 3.
class NumericError : public Error {
 public:
  using Error::Error;
};

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << std::forward<Args>(args));
  return oss.str();
}

}  // namespace detail

template <typename E, typename... Args>
[[noreturn]] void raise(Args&&... args) {
  throw E(detail::concat(std::forward<Args>(args)...));
}

}  // namespace voxcycle
