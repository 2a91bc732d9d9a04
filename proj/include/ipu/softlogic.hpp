// Copyright (c) 2026 ipusim contributors
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ipu/common.hpp"

namespace ipu {

// View of the monitored block's signal wires for one delivered HIT cycle.
// Values are the latest delivered ones (pre-latch, independent of the core's
// IOReg latch); fresh_mask marks IORegs updated by this very record.
struct WireView {
  const u64* values = nullptr;  // [32]
  u32 fresh_mask = 0;
  u64 cycle = 0;
};

// Receives packets a block wants to push toward the host FIFO. The machine
// stamps them with the current HIT cycle.
class PacketSink {
 public:
  virtual ~PacketSink() = default;
  virtual void emit(const std::vector<u8>& bytes) = 0;
};

// Observe-only plug-in clocked once per delivered HIT cycle regardless of
// core status. Blocks may keep private state, read the 8 SLRegs the core
// shares with them, and emit packets; they cannot touch core state.
class SoftLogicBlock {
 public:
  static constexpr u32 kNumSlRegs = 8;

  virtual ~SoftLogicBlock() = default;
  virtual const char* name() const = 0;
  virtual void clock(const WireView& wires, PacketSink& sink) = 0;

  // Rolled once by the run loop after the last record; emit residual state.
  virtual void trace_end(PacketSink&) {}

  // The core wrote SLReg[idx]. Blocks may validate and throw Error(Runtime)
  // to signal a block fault.
  virtual void slreg_written(u32, u32) {}

  void attach_slregs(const u32* regs) { slregs_ = regs; }

 protected:
  u32 slreg(u32 idx) const { return slregs_ ? slregs_[idx & 7] : 0; }

 private:
  const u32* slregs_ = nullptr;
};

// ---------------------------------------------------------------------------
// Entangled instruction prefetcher
// ---------------------------------------------------------------------------

struct PrefetchParams {
  u32 cache_bytes = 32 * 1024;
  u32 ways = 8;
  u32 line_bytes = 64;
  u32 table_entries = 256;  // direct-mapped entangling table
  u32 dests = 2;            // destinations kept per source line
  u32 history = 4;          // miss-history queue depth
  u64 stats_period = u64(1) << 31;
  u8 pc_ioreg = 11;         // signal carrying the fetch PC
  bool enabled = true;      // issue prefetches (off = measurement baseline)
};

struct PrefetchStats {
  u64 demand_accesses = 0;
  u64 demand_misses = 0;
  u64 prefetches_issued = 0;
  u64 useful_prefetches = 0;
};

// Models an L1I cache (LRU, physically indexed by line) plus an entangling
// table: on a demand miss every line in the recent-miss history learns the
// missing line as a destination, and the missing line's own destinations are
// prefetched. A prefetched line counts as useful once, on its first demand
// hit. Stats packets carry four 3-byte little-endian saturating deltas
// (accesses, misses, issued, useful), every stats_period delivered cycles
// and once at trace end if anything accumulated.
class EntangledPrefetchBlock final : public SoftLogicBlock {
 public:
  explicit EntangledPrefetchBlock(const PrefetchParams& params);

  const char* name() const override { return "prefetch"; }
  void clock(const WireView& wires, PacketSink& sink) override;
  void trace_end(PacketSink& sink) override;

  const PrefetchStats& stats() const { return stats_; }
  static PrefetchStats decode_packets(const std::vector<std::vector<u8>>& pkts);

 private:
  struct Way {
    u64 line = 0;
    bool valid = false;
    bool prefetched = false;  // marked until first demand hit
    u64 stamp = 0;
  };
  struct Entry {
    u64 source = 0;
    bool valid = false;
    std::vector<u64> dests;  // FIFO, bounded by params.dests
  };

  bool lookup_touch(u64 line, bool* was_prefetched);  // demand path
  void fill(u64 line, bool prefetched);
  bool resident(u64 line) const;
  void observe(u64 pc, PacketSink& sink);
  void emit_stats(PacketSink& sink);

  PrefetchParams p_;
  std::vector<Way> ways_;  // sets * ways
  u32 sets_ = 1;
  u64 stamp_ = 0;
  std::vector<Entry> table_;
  std::vector<u64> history_;  // most recent miss last
  PrefetchStats stats_;
  PrefetchStats last_emitted_;
  u64 cycles_seen_ = 0;
};

// Compiled-in block registry. Params arrive as key=value strings from the
// CLI; unknown keys raise Error(Usage).
std::unique_ptr<SoftLogicBlock> make_block(
    const std::string& name, const std::map<std::string, std::string>& params);

}  // namespace ipu
