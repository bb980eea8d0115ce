// Copyright 2026 The VoxCycle Authors
// SPDX-License-Identifier: Apache-2.0

// VXCG container: "VXCG", u32 version, u32 record count, then per record
//   u32 name length, name bytes, u8 dtype tag, u32 rank, u64 dims[rank],
//   u64 payload length, payload (little-endian).

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "voxcycle/io/nifti.hpp"
#include "voxcycle/tensor.hpp"

namespace voxcycle {

inline constexpr char kCheckpointMagic[4] = {'V', 'X', 'C', 'G'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { f32 = 1, f64 = 2, u8 = 3, i64 = 4 };

inline std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::u8: return 1;
    case DType::i64: return 8;
  }
  raise<FormatError>("unknown dtype tag ", static_cast<int>(t));
}

template <typename T>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<T, float>) return DType::f32;
  else if constexpr (std::is_same_v<T, double>) return DType::f64;
  else if constexpr (std::is_same_v<T, std::uint8_t>) return DType::u8;
  else if constexpr (std::is_same_v<T, std::int64_t>) return DType::i64;
  else static_assert(sizeof(T) == 0, "unsupported checkpoint element type");
}

struct Record {
  std::string name;
  DType dtype = DType::u8;
  Shape dims;
  std::vector<std::uint8_t> payload;
};

class Checkpoint {
 public:
  const std::vector<Record>& records() const noexcept { return records_; }

  template <typename T>
  void put(std::string name, const Tensor<T>& t) {
    put_raw(std::move(name), dtype_of<T>(), t.shape(), t.raw(), t.size() * sizeof(T));
  }

  void put_i64(std::string name, std::int64_t v) {
    put_raw(std::move(name), DType::i64, {1}, &v, sizeof v);
  }

  void put_f64s(std::string name, const std::vector<double>& v) {
    put_raw(std::move(name), DType::f64, {v.size()}, v.data(), v.size() * sizeof(double));
  }

  void put_text(std::string name, const std::string& s) {
    put_raw(std::move(name), DType::u8, {s.size()}, s.data(), s.size());
  }

  bool has(std::string_view name) const { return find(name) != nullptr; }

  const Record& get(std::string_view name) const {
    const Record* r = find(name);
    if (!r) raise<FormatError>("checkpoint has no record '", name, "'");
    return *r;
  }

  // Reads a tensor record and checks it against the expected shape.
  template <typename T>
  Tensor<T> tensor(std::string_view name, const Shape& expected) const {
    const Record& r = get(name);
    if (r.dtype != dtype_of<T>()) {
      raise<FormatError>("checkpoint record '", name, "' has dtype tag ", static_cast<int>(r.dtype), ", expected ",
                         static_cast<int>(dtype_of<T>()));
    }
    if (r.dims != expected) {
      raise<ShapeError>("checkpoint tensor '", name, "' has shape ", shape_string(r.dims), ", architecture expects ",
                        shape_string(expected));
    }
    Tensor<T> t(expected);
    std::memcpy(t.raw(), r.payload.data(), r.payload.size());
    return t;
  }

  std::int64_t i64(std::string_view name) const {
    const Record& r = get(name);
    if (r.dtype != DType::i64 || r.dims != Shape{1}) raise<FormatError>("checkpoint record '", name, "' is not an i64 scalar");
    std::int64_t v;
    std::memcpy(&v, r.payload.data(), sizeof v);
    return v;
  }

  std::vector<double> f64s(std::string_view name) const {
    const Record& r = get(name);
    if (r.dtype != DType::f64 || r.dims.size() != 1) raise<FormatError>("checkpoint record '", name, "' is not an f64 list");
    std::vector<double> v(r.dims[0]);
    std::memcpy(v.data(), r.payload.data(), r.payload.size());
    return v;
  }

  std::string text(std::string_view name) const {
    const Record& r = get(name);
    if (r.dtype != DType::u8) raise<FormatError>("checkpoint record '", name, "' is not text");
    return {r.payload.begin(), r.payload.end()};
  }

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint parse(std::span<const std::uint8_t> bytes);

 private:
  const Record* find(std::string_view name) const {
    for (const auto& r : records_)
      if (r.name == name) return &r;
    return nullptr;
  }

  void put_raw(std::string name, DType dtype, Shape dims, const void* data, std::size_t bytes) {
    if (has(name)) raise<FormatError>("duplicate checkpoint record '", name, "'");
    Record r{std::move(name), dtype, std::move(dims), std::vector<std::uint8_t>(bytes)};
    if (bytes) std::memcpy(r.payload.data(), data, bytes);
    records_.push_back(std::move(r));
  }

  std::vector<Record> records_;
};

namespace detail {

class ByteWriter {
 public:
  template <typename V>
  void put(V v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof v);
  }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  std::vector<std::uint8_t> out;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : b_(b) {}
  template <typename V>
  V get(const char* what) {
    need(sizeof(V), what);
    V v;
    std::memcpy(&v, b_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (b_.size() - pos_ < n) {
      raise<LengthError>("checkpoint truncated while reading ", what, " at byte ", pos_, " (", b_.size() - pos_,
                         " bytes left, need ", n, ")");
    }
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> Checkpoint::serialize() const {
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(records_.size()));
  for (const auto& r : records_) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(r.name.size()));
    w.bytes(r.name.data(), r.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(r.dtype));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(r.dims.size()));
    for (auto d : r.dims) w.put<std::uint64_t>(d);
    w.put<std::uint64_t>(r.payload.size());
    w.bytes(r.payload.data(), r.payload.size());
  }
  return std::move(w.out);
}

inline Checkpoint Checkpoint::parse(std::span<const std::uint8_t> bytes) {
  detail::ByteReader rd(bytes);
  const auto magic = rd.take(4, "magic");
  if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0) raise<FormatError>("not a checkpoint: bad magic");
  const auto version = rd.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    raise<UnsupportedError>("checkpoint format version ", version, " (this build reads version ", kCheckpointVersion, ")");
  }
  const auto count = rd.get<std::uint32_t>("record count");
  Checkpoint ck;
  for (std::uint32_t i = 0; i < count; ++i) {
    Record r;
    const auto name_len = rd.get<std::uint32_t>("name length");
    const auto name = rd.take(name_len, "record name");
    r.name.assign(name.begin(), name.end());
    const auto tag = rd.get<std::uint8_t>("dtype tag");
    if (tag < 1 || tag > 4) raise<FormatError>("record '", r.name, "': unknown dtype tag ", int(tag));
    r.dtype = static_cast<DType>(tag);
    const auto rank = rd.get<std::uint32_t>("rank");
    if (rank > 8) raise<FormatError>("record '", r.name, "': rank ", rank, " too large");
    std::uint64_t elements = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      r.dims.push_back(rd.get<std::uint64_t>("dims"));
      elements *= r.dims.back();
    }
    const auto length = rd.get<std::uint64_t>("payload length");
    if (length != elements * dtype_size(r.dtype)) {
      raise<FormatError>("record '", r.name, "': payload length ", length, " does not match dims ", shape_string(r.dims));
    }
    const auto payload = rd.take(length, "payload");
    r.payload.assign(payload.begin(), payload.end());
    if (ck.has(r.name)) raise<FormatError>("duplicate checkpoint record '", r.name, "'");
    ck.records_.push_back(std::move(r));
  }
  if (!rd.done()) raise<FormatError>("trailing bytes after the last checkpoint record");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const auto tmp = path.string() + ".tmp";
  write_file_bytes(tmp, ck.serialize());
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return Checkpoint::parse(read_file_bytes(path)); }

}  // namespace voxcycle
