// Copyright (c) 2026 ipusim contributors
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ipu/common.hpp"

namespace ipu {

// ---------------------------------------------------------------------------
// Signal ABI
// ---------------------------------------------------------------------------

// One monitored hardware signal, as published by the host block's ABI table.
struct SignalDecl {
  std::string name;       // e.g. "itlb-miss"
  u8 width = 1;           // bits, 1..64
  u8 ioreg = 0;           // IOReg index 0..31 the signal lands in
  u8 rate = 1;            // update rate class (1 = can change every cycle)
  std::string semantics;  // free-text description, not part of the ABI hash
};

struct AbiSpec {
  std::vector<SignalDecl> signals;

  const SignalDecl* find(const std::string& name) const;
  const SignalDecl* by_ioreg(u8 idx) const;
  bool has_ioreg(u8 idx) const;
  u32 total_bits() const;

  // Canonical serialization: one "#abi name width ioreg rate" line per
  // signal, declaration order. Semantics text is deliberately excluded so
  // that documentation edits do not invalidate recorded traces.
  std::string canonical_text() const;
  u32 hash() const;  // CRC-32 of canonical_text()

  bool matches(const AbiSpec& other) const;  // name/width/ioreg/rate equality
};

// Structural findings for an ABI table. Empty findings == valid.
struct AbiReport {
  std::vector<std::string> findings;  // sorted, stable under reordering
  u32 total_bits = 0;
  std::vector<u8> ioregs;  // sorted set of used IOReg indices
  bool valid() const { return findings.empty(); }
};

AbiReport validate_abi(const AbiSpec& abi);

// Parse / write the "#abi" header-line form used by text traces and by the
// standalone .abi files shipped under assets/.
AbiSpec parse_abi_lines(const std::vector<std::string>& lines,
                        const std::string& origin);
AbiSpec load_abi_file(const std::string& path);
void save_abi_file(const std::string& path, const AbiSpec& abi);

// ---------------------------------------------------------------------------
// Cycle records
// ---------------------------------------------------------------------------

struct SignalUpdate {
  u8 ioreg = 0;
  u64 value = 0;
};

// One delivered HIT cycle. Sparse: only signals that changed carry updates;
// an absent addr means the trigger-address bus held its previous value.
struct CycleRecord {
  u64 cycle = 0;
  bool has_addr = false;
  u64 addr = 0;
  std::vector<SignalUpdate> updates;

  void clear() {
    cycle = 0;
    has_addr = false;
    addr = 0;
    updates.clear();
  }
};

// Pull-based record stream. next() fills `out` (reusing its buffers) and
// returns false at end of stream. reset() rewinds to the first record so a
// consumer can run the same trace twice.
class CycleSource {
 public:
  virtual ~CycleSource() = default;
  virtual bool next(CycleRecord& out) = 0;
  virtual void reset() = 0;
};

class VectorSource final : public CycleSource {
 public:
  explicit VectorSource(std::vector<CycleRecord> records)
      : records_(std::move(records)) {}
  bool next(CycleRecord& out) override;
  void reset() override { pos_ = 0; }

 private:
  std::vector<CycleRecord> records_;
  std::size_t pos_ = 0;
};

// Delivers every k-th record of the inner stream (sub-sampled introspection).
class SampledSource final : public CycleSource {
 public:
  SampledSource(CycleSource& inner, u64 keep_every)
      : inner_(inner), keep_every_(keep_every == 0 ? 1 : keep_every) {}
  bool next(CycleRecord& out) override;
  void reset() override { inner_.reset(); }

 private:
  CycleSource& inner_;
  u64 keep_every_;
};

// ---------------------------------------------------------------------------
// Trace files
// ---------------------------------------------------------------------------
//
// Text (.ipt):   "#abi name width ioreg rate [semantics]" header lines, then
//                one record per line: "cycle;addr;x<i>=<hex>,x<j>=<hex>".
//                Empty addr / empty update list are legal. Cycles must be
//                strictly increasing.
// Binary (.ipb): 12-byte header (magic "IPB1", u16 version, u16 reserved,
//                u32 ABI hash), then records until EOF:
//                u64 cycle, u8 flags (bit0 = addr present), u32 update
//                bitmap, [u64 addr], one u64 per set bitmap bit in
//                ascending IOReg order. Little-endian throughout.

void write_trace_text(std::ostream& os, const AbiSpec& abi,
                      CycleSource& src);
void write_trace_bin(std::ostream& os, const AbiSpec& abi, CycleSource& src);

// Opens a trace file, picking the format by extension (.ipt/.ipb), and
// verifies its embedded ABI against `abi` (throws AbiMismatch).
std::unique_ptr<CycleSource> open_trace(const std::string& path,
                                        const AbiSpec& abi);

// ---------------------------------------------------------------------------
// Synthetic workloads
// ---------------------------------------------------------------------------

enum class Scenario {
  PicsEvents,         // sparse event strobes + responsible-PC signals
  PcLoop,             // fetch PC sweeping a small loop of cache lines
  PcEntangledPairs,   // recurring miss pairs, rewards entangled prefetching
  GpuActivityPhases,  // 3 activity bits with mutually exclusive phases
};

Scenario scenario_from_name(const std::string& name);
std::string scenario_name(Scenario s);

struct SynthParams {
  u64 seed = 1;
  u64 length = 100000;
  // PicsEvents
  u64 pics_period = 50000;   // window the dominance rotation is aligned to
  u32 hot_pcs = 4;           // rotating dominant PCs
  bool single_dominant = false;
  // PcLoop
  u32 loop_lines = 4;
  // PcEntangledPairs
  u32 pair_count = 600;
  // GpuActivityPhases
  u64 phase_len = 5120;
};

// Ground truth emitted alongside a synthetic trace, for oracle checks.
struct GroundTruth {
  std::map<std::string, double> scalars;
  std::map<std::string, std::vector<u64>> series;
  // PicsEvents: per-PC totals of attributed eventful cycles and flag bits.
  std::map<u64, u64> pc_cycles;
  std::map<u64, u32> pc_flags;
  std::string to_json() const;
};

// Streaming generator. Ground truth accumulates while records are pulled and
// is complete once next() has returned false; reset() restarts both the
// stream and the truth accounting.
class SynthSource final : public CycleSource {
 public:
  SynthSource(Scenario scenario, const SynthParams& params);
  bool next(CycleRecord& out) override;
  void reset() override;

  const GroundTruth& truth() const { return truth_; }
  const AbiSpec& abi() const { return abi_; }

 private:
  void prepare();
  bool next_pics(CycleRecord& out);
  bool next_pcloop(CycleRecord& out);
  bool next_pairs(CycleRecord& out);
  bool next_gpu(CycleRecord& out);

  Scenario scenario_;
  SynthParams params_;
  AbiSpec abi_;
  Rng rng_;
  u64 pos_ = 0;
  GroundTruth truth_;

  // scenario scratch state
  double eventful_p_ = 0.15;
  u64 loop_base_ = 0;
  std::vector<u64> hot_pcs_;
  std::vector<u64> noise_pcs_;
  std::vector<std::pair<u64, u64>> pairs_;
  u64 pair_cursor_ = 0;
  u32 burst_left_ = 0;
  u64 burst_line_ = 0;
  u64 next_line_ = 0;
  u32 gpu_active_ = 0;
  u64 phase_left_ = 0;
  u64 gpu_window_c_[3] = {0, 0, 0};
};

// The ABI each scenario emits records against.
AbiSpec synth_abi(Scenario scenario);

}  // namespace ipu
