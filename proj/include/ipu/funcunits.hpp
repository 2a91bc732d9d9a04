// Copyright (c) 2026 ipusim contributors
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <vector>

#include "ipu/common.hpp"

namespace ipu {

// Single-cycle hash unit: three xorshift rounds. Linear over GF(2), so
// hash32(0) == 0; three rounds is the smallest count whose single-bit
// avalanche clears 8 output bits on average (measured 9.156).
constexpr u32 hash32(u32 v) {
  for (int r = 0; r < 3; r++) {
    v ^= v << 13;
    v ^= v >> 7;
    v ^= v << 17;
  }
  return v;
}

enum class HistMode : u8 {
  kHashBucket = 0,   // bucket = hash32(value) & (buckets-1), +1
  kDirectIndex = 1,  // bucket = value mod buckets, +1
  kSimdAdd = 2,      // accumulator[lane] += value
};

// Lane selector: which IOReg (and which half of it) a lane classifies.
struct HistLane {
  u8 ioreg = 0;
  bool high = false;
  bool enabled = false;
};

// Four-lane bucketing/accumulation unit with saturating accumulators and a
// sticky overflow flag. The machine maps its control words into the
// scratchpad window (see machine.hpp); the unit itself is independently
// testable through this interface.
class HistogramUnit {
 public:
  static constexpr u32 kLanes = 4;
  static constexpr u32 kDefaultBuckets = 128;
  static constexpr u32 kAccBits = 18;
  static constexpr u32 kAccMax = (1u << kAccBits) - 1;

  explicit HistogramUnit(u32 buckets = kDefaultBuckets);

  // control plane
  void set_mode(HistMode m) { mode_ = m; }
  HistMode mode() const { return mode_; }

  // Packed lane selectors, one byte per lane: bits 4:0 IOReg index,
  // bit 5 high-half select, bit 6 enable.
  void set_lane_sel(u32 packed);
  u32 lane_sel() const;
  const HistLane& lane(u32 i) const { return lanes_[i]; }

  // Control word: bit 0 = flush a window packet when a classify loop
  // completes, bits 3:1 = number of lane counts carried in that packet.
  void set_ctrl(u32 v);
  u32 ctrl() const;
  bool flush_on_loop() const { return flush_on_loop_; }

  void reset_window();  // clears accumulators and the sticky overflow flag

  // data plane
  // One classify step; vals[i] belongs to lane i, disabled lanes ignored.
  void classify(const std::array<u64, kLanes>& vals);

  // Window packet: header byte (tag 0x5 in bits 7:4, per-lane bit-8 carries
  // in bits 2:0) followed by the low byte of each carried lane accumulator.
  // Resets the window.
  std::vector<u8> flush_window();

  u32 bucket(u32 i) const { return acc_.at(i); }
  u32 bucket_count() const { return u32(acc_.size()); }
  bool overflow() const { return overflow_; }
  u64 classified_values() const { return classified_; }

 private:
  void bump(u32 idx, u32 delta);

  std::vector<u32> acc_;
  std::array<HistLane, kLanes> lanes_{};
  HistMode mode_ = HistMode::kHashBucket;
  bool flush_on_loop_ = false;
  u32 flush_lanes_ = 3;
  bool overflow_ = false;
  u64 classified_ = 0;
};

}  // namespace ipu
