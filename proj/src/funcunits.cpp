// Copyright (c) 2026 ipusim contributors
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "ipu/funcunits.hpp"

namespace ipu {

namespace {

bool is_pow2(u32 v) { return v != 0 && (v & (v - 1)) == 0; }

}  // namespace

HistogramUnit::HistogramUnit(u32 buckets) {
  if (!is_pow2(buckets) || buckets < 2 || buckets > 4096)
    throw Error(ErrorKind::Usage,
                "bucket count must be a power of two in 2..4096");
  acc_.assign(buckets, 0);
}

void HistogramUnit::set_lane_sel(u32 packed) {
  for (u32 i = 0; i < kLanes; i++) {
    u32 b = (packed >> (8 * i)) & 0xFF;
    lanes_[i].ioreg = u8(b & 0x1F);
    lanes_[i].high = (b & 0x20) != 0;
    lanes_[i].enabled = (b & 0x40) != 0;
  }
}

u32 HistogramUnit::lane_sel() const {
  u32 v = 0;
  for (u32 i = 0; i < kLanes; i++) {
    u32 b = lanes_[i].ioreg | (lanes_[i].high ? 0x20u : 0) |
            (lanes_[i].enabled ? 0x40u : 0);
    v |= b << (8 * i);
  }
  return v;
}

void HistogramUnit::set_ctrl(u32 v) {
  flush_on_loop_ = (v & 1) != 0;
  u32 n = (v >> 1) & 7;
  flush_lanes_ = n == 0 || n > kLanes ? 3 : n;
}

u32 HistogramUnit::ctrl() const {
  return (flush_on_loop_ ? 1u : 0) | (flush_lanes_ << 1);
}

void HistogramUnit::reset_window() {
  acc_.assign(acc_.size(), 0);
  overflow_ = false;
}

void HistogramUnit::bump(u32 idx, u32 delta) {
  u64 v = u64(acc_[idx]) + delta;
  if (v > kAccMax) {
    acc_[idx] = kAccMax;
    overflow_ = true;
  } else {
    acc_[idx] = u32(v);
  }
}

void HistogramUnit::classify(const std::array<u64, kLanes>& vals) {
  for (u32 i = 0; i < kLanes; i++) {
    if (!lanes_[i].enabled) continue;
    u64 v = vals[i];
    classified_++;
    switch (mode_) {
      case HistMode::kHashBucket:
        bump(hash32(u32(v)) & (bucket_count() - 1), 1);
        break;
      case HistMode::kDirectIndex:
        bump(u32(v % bucket_count()), 1);
        break;
      case HistMode::kSimdAdd:
        // lane-indexed accumulation; value saturates into 18 bits
        bump(i, u32(v > kAccMax ? u64(kAccMax) + 1 : v));
        break;
    }
  }
}

std::vector<u8> HistogramUnit::flush_window() {
  std::vector<u8> pkt;
  pkt.reserve(1 + flush_lanes_);
  u8 header = 0x50;
  for (u32 i = 0; i < flush_lanes_ && i < 3; i++)
    header |= u8(((acc_[i] >> 8) & 1) << i);
  pkt.push_back(header);
  for (u32 i = 0; i < flush_lanes_; i++) pkt.push_back(u8(acc_[i] & 0xFF));
  reset_window();
  return pkt;
}

}  // namespace ipu
