// Copyright 2026 The VoxCycle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "voxcycle/error.hpp"

namespace voxcycle {

// Flat key=value training configuration. Keys mirror the field names.
struct TrainConfig {
  int epochs = 200;
  int constant_epochs = -1;  // epochs at base_lr before linear decay; -1 = half of epochs
  int batch_size = 1;
  double lr = 2e-4;
  double lambda_cycle = 10.0;
  double lambda_identity = 0.0;
  int pool_size = 50;
  std::uint64_t seed = 0;
  std::string data_a;
  std::string data_b;
  int rotations = 0;  // on-the-fly rotated copies per volume; 0 trains on originals only
  double rotation_sigma = 10.0;
  double percentile = 99.5;
  int checkpoint_every = 0;  // epochs between checkpoints; 0 = final only
  std::string checkpoint_dir;
  std::string log;
  int generator_divisor = 1;  // channel width divisor; 1 = full architecture
  int discriminator_divisor = 1;
  std::string precision = "float32";
  bool deterministic = false;

  int effective_constant_epochs() const { return constant_epochs >= 0 ? constant_epochs : epochs / 2; }

  // Sets one key from its text value. Unknown keys and malformed values throw.
  void set(std::string_view key, std::string_view value);

  // Every key, one per line, in a fixed order; parse(to_text()) round-trips.
  std::string to_text() const;

  // Hash of the settings that shape the training trajectory (not paths,
  // logging or checkpoint cadence).
  std::uint64_t fingerprint() const;

  // Range checks; data directories are only checked when require_data is set.
  void validate(bool require_data = true) const;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename V>
V parse_number(std::string_view key, std::string_view text) {
  V v{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) raise<ConfigError>("config key '", key, "': cannot parse '", text, "'");
  return v;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  raise<ConfigError>("config key '", key, "': expected true/false, got '", text, "'");
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline void TrainConfig::set(std::string_view key, std::string_view value) {
  using detail::parse_number;
  value = detail::trim(value);
  if (key == "epochs") epochs = parse_number<int>(key, value);
  else if (key == "constant_epochs") constant_epochs = parse_number<int>(key, value);
  else if (key == "batch_size") batch_size = parse_number<int>(key, value);
  else if (key == "lr") lr = parse_number<double>(key, value);
  else if (key == "lambda_cycle") lambda_cycle = parse_number<double>(key, value);
  else if (key == "lambda_identity") lambda_identity = parse_number<double>(key, value);
  else if (key == "pool_size") pool_size = parse_number<int>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "data_a") data_a = value;
  else if (key == "data_b") data_b = value;
  else if (key == "rotations") rotations = parse_number<int>(key, value);
  else if (key == "rotation_sigma") rotation_sigma = parse_number<double>(key, value);
  else if (key == "percentile") percentile = parse_number<double>(key, value);
  else if (key == "checkpoint_every") checkpoint_every = parse_number<int>(key, value);
  else if (key == "checkpoint_dir") checkpoint_dir = value;
  else if (key == "log") log = value;
  else if (key == "generator_divisor") generator_divisor = parse_number<int>(key, value);
  else if (key == "discriminator_divisor") discriminator_divisor = parse_number<int>(key, value);
  else if (key == "precision") precision = value;
  else if (key == "deterministic") deterministic = detail::parse_bool(key, value);
  else raise<ConfigError>("unknown config key '", key, "'");
}

inline std::string TrainConfig::to_text() const {
  using detail::format_double;
  std::ostringstream o;
  o << "epochs = " << epochs << "\n"
    << "constant_epochs = " << constant_epochs << "\n"
    << "batch_size = " << batch_size << "\n"
    << "lr = " << format_double(lr) << "\n"
    << "lambda_cycle = " << format_double(lambda_cycle) << "\n"
    << "lambda_identity = " << format_double(lambda_identity) << "\n"
    << "pool_size = " << pool_size << "\n"
    << "seed = " << seed << "\n"
    << "rotations = " << rotations << "\n"
    << "rotation_sigma = " << format_double(rotation_sigma) << "\n"
    << "percentile = " << format_double(percentile) << "\n"
    << "generator_divisor = " << generator_divisor << "\n"
    << "discriminator_divisor = " << discriminator_divisor << "\n"
    << "precision = " << precision << "\n"
    << "deterministic = " << (deterministic ? "true" : "false") << "\n"
    << "data_a = " << data_a << "\n"
    << "data_b = " << data_b << "\n"
    << "checkpoint_every = " << checkpoint_every << "\n"
    << "checkpoint_dir = " << checkpoint_dir << "\n"
    << "log = " << log << "\n";
  return o.str();
}

inline std::uint64_t TrainConfig::fingerprint() const {
  const std::string text = to_text();
  // Everything up to the first path key affects the trajectory.
  return detail::fnv1a(std::string_view(text).substr(0, text.find("data_a = ")));
}

inline void TrainConfig::validate(bool require_data) const {
  auto positive = [](const char* k, double v) {
    if (!(v > 0) || !std::isfinite(v)) raise<ConfigError>(k, " must be positive, got ", v);
  };
  auto non_negative = [](const char* k, double v) {
    if (!(v >= 0) || !std::isfinite(v)) raise<ConfigError>(k, " must be non-negative, got ", v);
  };
  if (epochs < 1) raise<ConfigError>("epochs must be >= 1, got ", epochs);
  if (batch_size < 1) raise<ConfigError>("batch_size must be >= 1, got ", batch_size);
  if (effective_constant_epochs() > epochs) {
    raise<ConfigError>("constant_epochs (", constant_epochs, ") exceeds epochs (", epochs, ")");
  }
  non_negative("lr", lr);
  non_negative("lambda_cycle", lambda_cycle);
  non_negative("lambda_identity", lambda_identity);
  non_negative("rotation_sigma", rotation_sigma);
  positive("percentile", percentile);
  if (percentile > 100) raise<ConfigError>("percentile must be <= 100, got ", percentile);
  if (pool_size < 0) raise<ConfigError>("pool_size must be >= 0, got ", pool_size);
  if (rotations < 0) raise<ConfigError>("rotations must be >= 0, got ", rotations);
  if (checkpoint_every < 0) raise<ConfigError>("checkpoint_every must be >= 0, got ", checkpoint_every);
  for (int d : {generator_divisor, discriminator_divisor}) {
    if (d < 1 || (d & (d - 1)) != 0 || d > 32) raise<ConfigError>("network divisors must be 1, 2, 4, ..., 32; got ", d);
  }
  if (precision != "float32" && precision != "float64") {
    raise<ConfigError>("precision must be float32 or float64, got '", precision, "'");
  }
  if (!require_data) return;
  namespace fs = std::filesystem;
  for (const auto* dir : {&data_a, &data_b}) {
    if (dir->empty()) raise<ConfigError>(dir == &data_a ? "data_a" : "data_b", " is not set");
    if (!fs::is_directory(*dir)) raise<ConfigError>("data directory '", *dir, "' does not exist");
  }
  const auto a = fs::weakly_canonical(data_a), b = fs::weakly_canonical(data_b);
  auto contains = [](const fs::path& outer, const fs::path& inner) {
    auto [o, i] = std::mismatch(outer.begin(), outer.end(), inner.begin(), inner.end());
    return o == outer.end();
  };
  if (contains(a, b) || contains(b, a)) {
    raise<ConfigError>("data_a and data_b must be disjoint directories ('", data_a, "', '", data_b, "')");
  }
}

inline TrainConfig parse_config(std::string_view text) {
  TrainConfig cfg;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) raise<ConfigError>("config line ", line_no, ": expected key = value");
    try {
      cfg.set(detail::trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      raise<ConfigError>("config line ", line_no, ": ", e.what());
    }
  }
  return cfg;
}

inline TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise<ConfigError>("cannot open config file ", path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace voxcycle
