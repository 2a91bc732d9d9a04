// Copyright (c) 2026 ipusim contributors
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "ipu/common.hpp"

#include <zlib.h>

#include <cstdio>

namespace ipu {

u32 crc32_bytes(const u8* data, std::size_t len, u32 seed) {
  return static_cast<u32>(
      ::crc32(seed, reinterpret_cast<const Bytef*>(data),
              static_cast<uInt>(len)));
}

u32 crc32_str(const std::string& s, u32 seed) {
  return crc32_bytes(reinterpret_cast<const u8*>(s.data()), s.size(), seed);
}

std::string to_hex(u64 v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace ipu
