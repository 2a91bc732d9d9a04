// Copyright (c) 2026 ipusim contributors
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "ipu/hostapi.hpp"
#include "ipu/machine.hpp"
#include "ipu/softlogic.hpp"
#include "ipu/trace.hpp"

namespace ipu {

// ---------------------------------------------------------------------------
// Per-PC cycle stacks (PSV sampling program + host post-processing)
// ---------------------------------------------------------------------------
//
// The generated sampling program keeps a Performance Signature Vector table
// in scratchpad: 256 direct slots plus 16 overflow slots of 8 bytes each at
// 0x1000 ({pc32, packed32}), packed32 = cycles<<11 | signature bits. Slots
// are claimed by hash32(pc)&255 with linear probing of depth 16 and no
// wraparound; exhaustion sets a sticky lost flag at 0xFFC. An interval
// timer flushes every `period` delivered cycles: the handler scans all 272
// slots, emits one 6-byte payload (pc32 + sig16) for the slot with the
// largest packed value, and clears the table. The host then attributes the
// whole window to that winner, so a row's cycle count is payload count
// times period.

inline constexpr u64 kPicsDefaultPeriod = 400000;
inline constexpr u32 kPicsTableAddr = 0x1000;
inline constexpr u32 kPicsTableSlots = 256 + 16;  // direct + overflow
inline constexpr u32 kPicsProbeDepth = 16;
inline constexpr u32 kPicsLostFlagAddr = 0x0FFC;
inline constexpr u32 kPicsStashAddr = 0x0FF8;
inline constexpr u32 kPicsEmitAddr = 0x0FF0;
inline constexpr u32 kPicsEventCount = 11;  // signature bits, ABI order

// Event priority when several flags co-occur on a record: lowest IOReg
// index wins the cycle. Attribution source per event: flush-adjacent
// events read the flush-pc signal, everything else the commit-pc signal.
u8 pics_attribution_ioreg(u32 event_bit);

std::string pics_program_source(u64 period = kPicsDefaultPeriod);
ProgramImage pics_program(const AbiSpec& abi, u64 period = kPicsDefaultPeriod);

struct PicsRow {
  u32 pc = 0;
  u16 sig = 0;       // event bitmask, bit k = ABI event k
  u64 cycles = 0;    // attributed cycles (windows won * period)
  u64 payloads = 0;  // windows won
};

struct PicsTable {
  std::vector<PicsRow> rows;  // cycles descending, then pc, then sig
  u64 period = 0;
  u64 total_cycles() const;
  std::map<u32, u64> cycles_by_pc() const;
};

// Decodes 6-byte payloads and aggregates by (pc, signature).
PicsTable pics_postprocess(const std::vector<std::vector<u8>>& payloads,
                           u64 period);

// Independent host-side recount: replays the record stream against the
// documented PSV semantics above (latch, priority, probing, winner per
// window) without running the machine. Mirrors an infinitely fast core,
// so it must equal the idealized-mode run exactly.
PicsTable pics_recount(CycleSource& src, u64 period);

// Human-readable signature using ABI event names ("dtlb-miss|dcache-miss").
std::string pics_signature_names(u16 sig, const AbiSpec& abi);
std::string pics_csv(const PicsTable& t);
std::string pics_json(const PicsTable& t, const AbiSpec* abi = nullptr);

// ---------------------------------------------------------------------------
// Activity-window utilization (classify loop program + binning)
// ---------------------------------------------------------------------------

inline constexpr u32 kUtilWindowLen = 256;
inline constexpr u32 kUtilSignals = 3;

std::string util_program_source(u32 window = kUtilWindowLen);
ProgramImage util_program(const AbiSpec& abi, u32 window = kUtilWindowLen);

struct UtilWindow {
  u64 index = 0;
  u32 counts[kUtilSignals] = {0, 0, 0};
};

// Decodes 4-byte window packets (tag/carry header + 3 count bytes).
std::vector<UtilWindow> util_decode(const std::vector<std::vector<u8>>& pkts);

struct UtilSummary {
  u64 bins[kUtilSignals + 1] = {0, 0, 0, 0};  // windows with k signals high
  double threshold = 0.25;
  u32 window_len = kUtilWindowLen;
  std::vector<UtilWindow> windows;
  std::vector<u8> high_count;  // per window, aligned with windows
  // Per signal: window counts sorted descending, then prefix-averaged
  // (the sorted running-average utilization view).
  std::vector<std::vector<double>> sorted_running_avg;
};

UtilSummary util_classify(const std::vector<UtilWindow>& windows,
                          double threshold = 0.25,
                          u32 window_len = kUtilWindowLen);
std::string util_csv(const UtilSummary& s);
std::string util_json(const UtilSummary& s);

// ---------------------------------------------------------------------------
// Prefetcher A/B statistics
// ---------------------------------------------------------------------------

struct PrefetchReport {
  PrefetchStats stats;
  bool no_data = true;
  double coverage = 0.0;   // useful / (misses + useful)
  double accuracy = 0.0;   // useful / issued
  double miss_rate = 0.0;  // misses / accesses
};

PrefetchReport prefetch_report(const std::vector<std::vector<u8>>& pkts);

struct PrefetchAb {
  PrefetchReport on;
  PrefetchReport off;
  double miss_rate_delta = 0.0;  // on - off, expected <= 0
};

PrefetchAb prefetch_ab(const PrefetchReport& on, const PrefetchReport& off);
std::string prefetch_csv(const PrefetchReport& r);
std::string prefetch_ab_csv(const PrefetchAb& ab);
std::string prefetch_json(const PrefetchReport& r);
std::string prefetch_ab_json(const PrefetchAb& ab);

// ---------------------------------------------------------------------------
// Dual-run approximation-error harness
// ---------------------------------------------------------------------------
//
// Runs the same image and trace twice, idealized then faithful, and
// compares the resulting tables. Per-PC relative error is measured on
// cycles_by_pc; a PC present only in the idealized table was entirely
// dropped by the faithful run.

struct DualRunReport {
  RunReport idealized;
  RunReport faithful;
  PicsTable table_idealized;
  PicsTable table_faithful;
  std::vector<std::pair<u32, double>> pc_errors;  // pc, relative error
  double avg_rel_error = 0.0;
  double max_rel_error = 0.0;
  double dropped_pc_delay_fraction = 0.0;  // idealized delay on dropped PCs
  std::vector<u32> dropped_pcs;
  bool top_sets_equal = true;  // PCs above top_threshold of total delay
  double top_threshold = 0.01;
};

DualRunReport dual_run(const ProgramImage& image, CycleSource& src,
                       u64 period, MachineConfig base = {});
std::string dual_run_csv(const DualRunReport& r);
std::string dual_run_json(const DualRunReport& r);

// Run-report serialization shared by the CLI and tests.
std::string run_report_json(const RunReport& r, const BandwidthReport* bw);

}  // namespace ipu
