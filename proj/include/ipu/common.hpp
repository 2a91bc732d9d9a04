// Copyright (c) 2026 ipusim contributors
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ipu {

using u8 = std::uint8_t;
using u16 = std::uint16_t;
using u32 = std::uint32_t;
using u64 = std::uint64_t;
using i8 = std::int8_t;
using i16 = std::int16_t;
using i32 = std::int32_t;
using i64 = std::int64_t;

// Error taxonomy shared by the whole library. Each subsystem throws a typed
// subclass; the CLI maps Kind onto its exit codes.
enum class ErrorKind {
  Syntax,        // assembler source errors (carry line numbers)
  Encoding,      // undecodable or non-canonical instruction words
  ImageFormat,   // container magic/version/checksum/layout problems
  AbiMismatch,   // trace header disagrees with the supplied ABI
  Malformed,     // trace record syntax / truncated binary records
  Policy,        // host-side policy gate rejection
  Host,          // host API misuse (unknown device, invalid transition)
  Runtime,       // machine-level faults surfaced through exceptions
  Usage,         // CLI usage errors
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// CRC-32 (IEEE 802.3, reflected), delegated to zlib.
u32 crc32_bytes(const u8* data, std::size_t len, u32 seed = 0);
u32 crc32_str(const std::string& s, u32 seed = 0);

inline u32 crc32_words(const std::vector<u32>& words, u32 seed = 0) {
  return words.empty()
             ? crc32_bytes(nullptr, 0, seed)
             : crc32_bytes(reinterpret_cast<const u8*>(words.data()),
                           words.size() * 4, seed);
}

// Deterministic random helper. mt19937_64 gives a portable raw stream; the
// derived draws below avoid std::uniform_*_distribution, whose outputs vary
// between standard library implementations.
class Rng {
 public:
  explicit Rng(u64 seed) : eng_(seed) {}

  u64 next_u64() { return eng_(); }
  u32 next_u32() { return static_cast<u32>(eng_() >> 32); }

  // Uniform in [0, n). Multiply-shift; bias is < 2^-32 for the n used here.
  u64 below(u64 n) {
    return static_cast<u64>((static_cast<unsigned __int128>(next_u64()) * n) >>
                            64);
  }

  // Uniform in [lo, hi] inclusive.
  u64 range(u64 lo, u64 hi) { return lo + below(hi - lo + 1); }

  // Uniform double in [0, 1).
  double unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  bool chance(double p) { return unit() < p; }

 private:
  std::mt19937_64 eng_;
};

std::string to_hex(u64 v);

}  // namespace ipu
