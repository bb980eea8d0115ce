// Copyright 2026 The VoxCycle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <zlib.h>

#include <cstdint>
#include <span>
#include <vector>

#include "voxcycle/error.hpp"

namespace voxcycle {

inline bool is_gzip(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

inline std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> bytes) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) raise<FormatError>("gzip: inflateInit2 failed");
  zs.next_in = const_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  std::vector<std::uint8_t> out(bytes.size() * 4 + 1024);
  int rc = Z_OK;
  while (true) {
    if (zs.total_out == out.size()) out.resize(out.size() * 2);
    zs.next_out = out.data() + zs.total_out;
    zs.avail_out = static_cast<uInt>(out.size() - zs.total_out);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc == Z_STREAM_END) break;
    if (rc == Z_BUF_ERROR && zs.avail_in == 0) {
      inflateEnd(&zs);
      raise<LengthError>("gzip: stream ends before its trailer (truncated file)");
    }
    if (rc != Z_OK && rc != Z_BUF_ERROR) {
      const char* msg = zs.msg ? zs.msg : "corrupt stream";
      inflateEnd(&zs);
      raise<FormatError>("gzip: ", msg);
    }
  }
  out.resize(zs.total_out);
  inflateEnd(&zs);
  return out;
}

inline std::vector<std::uint8_t> gzip(std::span<const std::uint8_t> bytes, int level = 6) {
  z_stream zs{};
  if (deflateInit2(&zs, level, Z_DEFLATED, 16 + MAX_WBITS, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    raise<FormatError>("gzip: deflateInit2 failed");
  }
  std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(bytes.size())));
  zs.next_in = const_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) raise<FormatError>("gzip: deflate did not finish");
  out.resize(zs.total_out);
  return out;
}

}  // namespace voxcycle
