// Copyright 2026 The VoxCycle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "voxcycle/io/gzip.hpp"
#include "voxcycle/io/volume.hpp"

namespace voxcycle {

inline constexpr std::int32_t kNiftiHeaderSize = 348;
inline constexpr std::size_t kNiftiDataOffset = 352;
inline constexpr std::int16_t kDtInt16 = 4;
inline constexpr std::int16_t kDtFloat32 = 16;

struct NiftiHeader {
  std::int32_t sizeof_hdr = kNiftiHeaderSize;
  std::array<std::int16_t, 8> dim{};
  std::int16_t datatype = kDtFloat32;
  std::int16_t bitpix = 32;
  std::array<float, 8> pixdim{};
  float vox_offset = static_cast<float>(kNiftiDataOffset);
  float scl_slope = 1.0f;
  float scl_inter = 0.0f;
  std::uint8_t xyzt_units = 0;
  std::string descrip;
  OrientationBytes orientation{};
  std::array<char, 4> magic{'n', '+', '1', '\0'};
  bool big_endian = false;
};

namespace detail {

// Byte offsets of the NIfTI-1 header fields used here.
inline constexpr std::size_t kOffDim = 40;
inline constexpr std::size_t kOffDatatype = 70;
inline constexpr std::size_t kOffBitpix = 72;
inline constexpr std::size_t kOffPixdim = 76;
inline constexpr std::size_t kOffVoxOffset = 108;
inline constexpr std::size_t kOffSlope = 112;
inline constexpr std::size_t kOffInter = 116;
inline constexpr std::size_t kOffXyztUnits = 123;
inline constexpr std::size_t kOffDescrip = 148;
inline constexpr std::size_t kOffOrientation = 252;
inline constexpr std::size_t kOffMagic = 344;

static_assert(std::endian::native == std::endian::little, "little-endian host required");

template <typename V>
V load(const std::uint8_t* p, bool swap) {
  std::array<std::uint8_t, sizeof(V)> b;
  std::memcpy(b.data(), p, sizeof(V));
  if (swap) std::reverse(b.begin(), b.end());
  V v;
  std::memcpy(&v, b.data(), sizeof(V));
  return v;
}

template <typename V>
void store(std::uint8_t* p, V v) {
  std::memcpy(p, &v, sizeof(V));
}

}  // namespace detail

// Decodes the 348-byte header, detecting byte order from sizeof_hdr.
inline NiftiHeader parse_nifti_header(std::span<const std::uint8_t> bytes) {
  using detail::load;
  if (bytes.size() < static_cast<std::size_t>(kNiftiHeaderSize)) {
    raise<LengthError>("nifti: ", bytes.size(), " bytes is shorter than the 348-byte header");
  }
  NiftiHeader h;
  const std::uint8_t* p = bytes.data();
  const auto raw = load<std::int32_t>(p, false);
  if (raw == kNiftiHeaderSize) {
    h.big_endian = false;
  } else if (load<std::int32_t>(p, true) == kNiftiHeaderSize) {
    h.big_endian = true;
  } else {
    raise<FormatError>("nifti: sizeof_hdr is ", raw, ", expected 348");
  }
  const bool sw = h.big_endian;
  std::memcpy(h.magic.data(), p + detail::kOffMagic, 4);
  if (std::memcmp(h.magic.data(), "ni1\0", 4) == 0) {
    raise<UnsupportedError>("nifti: header/image pairs (magic \"ni1\") are not supported; convert to single-file .nii");
  }
  if (std::memcmp(h.magic.data(), "n+1\0", 4) != 0) raise<FormatError>("nifti: bad magic, expected \"n+1\"");
  for (std::size_t i = 0; i < 8; ++i) {
    h.dim[i] = load<std::int16_t>(p + detail::kOffDim + 2 * i, sw);
    h.pixdim[i] = load<float>(p + detail::kOffPixdim + 4 * i, sw);
  }
  if (h.dim[0] < 1 || h.dim[0] > 7) raise<FormatError>("nifti: dim[0] = ", h.dim[0], " outside [1, 7]");
  h.sizeof_hdr = kNiftiHeaderSize;
  h.datatype = load<std::int16_t>(p + detail::kOffDatatype, sw);
  h.bitpix = load<std::int16_t>(p + detail::kOffBitpix, sw);
  h.vox_offset = load<float>(p + detail::kOffVoxOffset, sw);
  h.scl_slope = load<float>(p + detail::kOffSlope, sw);
  h.scl_inter = load<float>(p + detail::kOffInter, sw);
  h.xyzt_units = p[detail::kOffXyztUnits];
  const char* d = reinterpret_cast<const char*>(p + detail::kOffDescrip);
  h.descrip.assign(d, strnlen(d, 80));
  std::memcpy(h.orientation.data(), p + detail::kOffOrientation, h.orientation.size());
  return h;
}

inline std::pair<NiftiHeader, Volume> read_nifti(std::span<const std::uint8_t> input) {
  std::vector<std::uint8_t> inflated;
  std::span<const std::uint8_t> bytes = input;
  if (is_gzip(input)) {
    inflated = gunzip(input);
    bytes = inflated;
  }
  NiftiHeader h = parse_nifti_header(bytes);
  if (h.datatype != kDtInt16 && h.datatype != kDtFloat32) {
    raise<UnsupportedError>("nifti: datatype code ", h.datatype, " is not supported (int16 = 4, float32 = 16)");
  }
  const std::size_t bpp = h.datatype == kDtInt16 ? 2 : 4;
  const int ndim = h.dim[0];
  std::size_t nx = 1, ny = 1, nz = 1;
  for (int i = 1; i <= ndim; ++i) {
    if (h.dim[static_cast<std::size_t>(i)] < 1) raise<FormatError>("nifti: dim[", i, "] = ", h.dim[static_cast<std::size_t>(i)]);
    const auto n = static_cast<std::size_t>(h.dim[static_cast<std::size_t>(i)]);
    if (i == 1) nx = n;
    if (i == 2) ny = n;
    if (i == 3) nz = n;
    if (i > 3 && n != 1) raise<UnsupportedError>("nifti: ", ndim, "-D data with dim[", i, "] = ", n, "; only 3-D volumes are supported");
  }
  if (h.vox_offset < static_cast<float>(kNiftiDataOffset) || h.vox_offset != std::floor(h.vox_offset)) {
    raise<FormatError>("nifti: vox_offset ", h.vox_offset, " invalid for a single-file image");
  }
  const auto offset = static_cast<std::size_t>(h.vox_offset);
  const std::size_t count = nx * ny * nz;
  if (bytes.size() < offset + count * bpp) {
    raise<LengthError>("nifti: data section holds ", bytes.size() > offset ? bytes.size() - offset : 0, " bytes, header declares ",
                       count * bpp);
  }

  Volume v;
  v.data = Tensor<float>({1, nz, ny, nx});
  float* out = v.data.raw();
  const std::uint8_t* src = bytes.data() + offset;
  const bool scale = h.scl_slope != 0.0f && !(h.scl_slope == 1.0f && h.scl_inter == 0.0f);
  const double slope = h.scl_slope, inter = h.scl_inter;
  for (std::size_t i = 0; i < count; ++i) {
    const double raw = h.datatype == kDtInt16 ? detail::load<std::int16_t>(src + 2 * i, h.big_endian)
                                              : detail::load<float>(src + 4 * i, h.big_endian);
    out[i] = scale ? static_cast<float>(raw * slope + inter) : static_cast<float>(raw);
  }
  for (std::size_t a = 0; a < 3; ++a) {
    const double s = h.pixdim[a + 1];
    v.voxel_size[a] = (static_cast<int>(a) < ndim && s > 0) ? s : 1.0;
  }
  v.orientation = h.orientation;
  v.qfac = h.pixdim[0] < 0 ? -1.0 : 1.0;
  return {std::move(h), std::move(v)};
}

// float32, vox_offset 352, unit slope, little-endian, no extensions.
inline std::vector<std::uint8_t> write_nifti(const Volume& v, const std::string& descrip = {}) {
  if (v.data.empty()) raise<ShapeError>("write_nifti: empty volume");
  require_volume_tensor(v.data, "write_nifti");
  const Extent3 e = v.extent();
  for (std::size_t a = 0; a < 3; ++a) {
    if (e[a] > 32767) raise<UnsupportedError>("write_nifti: axis size ", e[a], " exceeds the int16 dim field");
    if (!(v.voxel_size[a] > 0)) raise<ConfigError>("write_nifti: voxel size must be positive");
  }
  using detail::store;
  std::vector<std::uint8_t> out(kNiftiDataOffset + 4 * v.data.size(), 0);
  std::uint8_t* p = out.data();
  store<std::int32_t>(p, kNiftiHeaderSize);
  const std::int16_t dims[8] = {3, static_cast<std::int16_t>(e[0]), static_cast<std::int16_t>(e[1]),
                                static_cast<std::int16_t>(e[2]), 1, 1, 1, 1};
  float pix[8] = {static_cast<float>(v.qfac), static_cast<float>(v.voxel_size[0]), static_cast<float>(v.voxel_size[1]),
                  static_cast<float>(v.voxel_size[2]), 0, 0, 0, 0};
  for (std::size_t i = 0; i < 8; ++i) {
    store(p + detail::kOffDim + 2 * i, dims[i]);
    store(p + detail::kOffPixdim + 4 * i, pix[i]);
  }
  store(p + detail::kOffDatatype, kDtFloat32);
  store<std::int16_t>(p + detail::kOffBitpix, 32);
  store(p + detail::kOffVoxOffset, static_cast<float>(kNiftiDataOffset));
  store(p + detail::kOffSlope, 1.0f);
  store(p + detail::kOffInter, 0.0f);
  p[detail::kOffXyztUnits] = 2;  // millimetres
  std::memcpy(p + detail::kOffDescrip, descrip.data(), std::min<std::size_t>(descrip.size(), 79));
  if (v.orientation) std::memcpy(p + detail::kOffOrientation, v.orientation->data(), v.orientation->size());
  std::memcpy(p + detail::kOffMagic, "n+1\0", 4);
  std::memcpy(p + kNiftiDataOffset, v.data.raw(), 4 * v.data.size());
  return out;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise<ConfigError>("cannot open ", path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise<ConfigError>("cannot write ", path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) raise<ConfigError>("write failed for ", path.string());
}

inline bool has_gzip_suffix(const std::filesystem::path& path) {
  const auto s = path.string();
  return s.size() >= 3 && s.compare(s.size() - 3, 3, ".gz") == 0;
}

inline Volume load_volume(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  auto [header, v] = read_nifti(bytes);
  v.source = path.string();
  return v;
}

// Gzip-compressed when the name ends in ".gz".
inline void save_volume(const std::filesystem::path& path, const Volume& v) {
  auto bytes = write_nifti(v);
  if (has_gzip_suffix(path)) bytes = gzip(bytes);
  write_file_bytes(path, bytes);
}

inline bool is_nifti_path(const std::filesystem::path& path) {
  const auto s = path.filename().string();
  auto ends = [&](const char* suf) {
    const std::size_t n = std::strlen(suf);
    return s.size() > n && s.compare(s.size() - n, n, suf) == 0;
  };
  return ends(".nii") || ends(".nii.gz");
}

// Strips ".nii" / ".nii.gz".
inline std::string nifti_stem(const std::filesystem::path& path) {
  auto s = path.filename().string();
  for (const char* suf : {".nii.gz", ".nii"}) {
    const std::size_t n = std::strlen(suf);
    if (s.size() > n && s.compare(s.size() - n, n, suf) == 0) return s.substr(0, s.size() - n);
  }
  return s;
}

}  // namespace voxcycle
