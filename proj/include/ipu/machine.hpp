// Copyright (c) 2026 ipusim contributors
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ipu/common.hpp"
#include "ipu/funcunits.hpp"
#include "ipu/isa.hpp"
#include "ipu/softlogic.hpp"
#include "ipu/trace.hpp"

namespace ipu {

// ---------------------------------------------------------------------------
// Core status machine
// ---------------------------------------------------------------------------
//
//   UNDEFINED      no image loaded (reset state)
//   PAUSED         image loaded, data plane gated
//   ACTIVE-PAUSED  armed, waiting for work (data or a pending timer)
//   ACTIVE-RUNNING an activation is in flight
//   FINALIZE       finish section executing on host request
//   ERROR          fault latched; terminal until the next load_image
//
// Transitions: load_image -> PAUSED (any prior state). RESUME: PAUSED ->
// ACTIVE-PAUSED, idempotent while active. PAUSE: active -> PAUSED, graceful
// (an in-flight activation completes first), idempotent in PAUSED.
// FINALIZE: PAUSED/ACTIVE-PAUSED only. Trigger start edge: PAUSED ->
// ACTIVE-PAUSED; trigger stop edge: graceful stop plus a sticky window
// close (the start trigger cannot rearm until reconfigured). Faults from
// anywhere executing -> ERROR.

enum class Status : u8 {
  kUndefined,
  kPaused,
  kActivePaused,
  kActiveRunning,
  kFinalize,
  kError,
};
const char* status_name(Status s);

enum class HostCommand : u8 {
  kPause,
  kResume,
  kFinalize,
  kConfigStart,  // set/clear the one-shot start address trigger
  kConfigStop,   // set/clear the stop address trigger
};
const char* host_command_name(HostCommand c);

enum class FaultKind : u8 {
  kNone,
  kIllegalInstruction,
  kMemFault,
  kWriteToImem,
  kIllegalLoopBody,
  kRunaway,    // activation instruction cap exceeded
  kBlockFault  // soft-logic block raised
};
const char* fault_kind_name(FaultKind k);

struct Fault {
  FaultKind kind = FaultKind::kNone;
  u32 pc = 0;
  std::string detail;
};

// Instruction costs in IPU cycles.
struct CostModel {
  u32 alu = 1;     // ALU, lui, moves, timer arm, loop setup, ret
  u32 branch = 1;  // taken or not
  u32 jump = 1;
  u32 hash = 1;
  u32 load = 2;
  u32 store = 2;
  u32 hist = 1;
  u32 emit = 1;
};

// HIT:IPU clock ratio. Each delivered HIT cycle grants the core ipu/hit
// IPU cycles of execution, tracked with an integer accumulator so any
// rational ratio is exact. Leftover budget is discarded when an activation
// completes.
struct ClockRatio {
  u32 hit = 1;
  u32 ipu = 1;
};

struct MachineConfig {
  CostModel costs{};
  ClockRatio ratio{};
  u32 hist_buckets = 128;
  u64 activation_cap = 1u << 20;  // runaway guard, instructions
  // Idealized mode: a whole activation (plus any timer handler due first)
  // executes within its dispatch record, and no arrival is ever dropped.
  // Used as the infinitely-fast-core baseline for error measurement.
  bool idealized = false;
};

// Per-record disposition buckets. Every delivered record lands in exactly
// one of: dispatches, loop_consumed, dropped_arrivals, idle_records,
// gated_records.
struct Counters {
  u64 delivered = 0;
  u64 dispatches = 0;         // records that started a _main activation
  u64 loop_consumed = 0;      // records consumed by loop iterations 2..n
  u64 dropped_arrivals = 0;   // data arriving while ACTIVE-RUNNING
  u64 idle_records = 0;       // no fresh data, nothing to do
  u64 gated_records = 0;      // data arriving while gated (P/F/E/U)
  u64 handler_dispatches = 0; // timer handler activations
  u64 timer_fires = 0;
  u64 instructions = 0;
  u64 active_cycles = 0;      // IPU cycles spent executing
  u64 emitted_packets = 0;
  u64 emitted_bytes = 0;
  u64 windows_flushed = 0;    // histogram auto-flush packets
};

struct Packet {
  u64 cycle = 0;  // HIT cycle stamp at emission
  std::vector<u8> bytes;
};

struct RunOptions {
  bool finalize_at_end = true;  // run finish section if P/AP at trace end
};

struct RunReport {
  Counters counters;
  Status final_status = Status::kUndefined;
  Fault fault;
  u64 first_cycle = 0;
  u64 last_cycle = 0;
  bool saw_records = false;
  bool loop_active_at_end = false;
};

// ---------------------------------------------------------------------------
// Memory map (data space)
// ---------------------------------------------------------------------------
//
//   0x0000_0000 .. 0x0000_4FFF  scratchpad RAM (low part)
//   0x0000_5000 .. 0x0000_501F  SLRegs 0..7, shared with the soft-logic block
//   0x0000_5020 HIST_MODE  0x5024 HIST_LANES  0x5028 HIST_CTRL  0x502C HIST_OPS
//   0x0000_5100 .. +4*buckets   histogram window accumulators, read-only
//   remaining 0x5xxx bytes      reserved device space, faults on access
//   0x0000_6000 .. 0x0000_7FFF  scratchpad RAM (high part)
//   0x0001_0000 .. 0x0001_1FFF  imem window, read-only (stores fault)
//   0x8000_0000 .. 0x8000_FFFF  FIFO doorbell, write-only; each store emits
//                               one packet of the store's width
//
// Device words require naturally aligned word accesses; RAM allows byte,
// half, and word with natural alignment.

class Machine : public PacketSink {
 public:
  static constexpr u32 kDeviceBase = 0x5000;
  static constexpr u32 kDeviceEnd = 0x6000;
  static constexpr u32 kSlRegBase = 0x5000;
  static constexpr u32 kSlRegEnd = 0x5020;
  static constexpr u32 kHistModeAddr = 0x5020;
  static constexpr u32 kHistLanesAddr = 0x5024;
  static constexpr u32 kHistCtrlAddr = 0x5028;
  static constexpr u32 kHistOpsAddr = 0x502C;
  static constexpr u32 kHistAccBase = 0x5100;
  static constexpr u32 kImemWindowBase = 0x00010000;
  static constexpr u32 kFifoBase = 0x80000000;
  static constexpr u32 kFifoEnd = 0x80010000;

  explicit Machine(MachineConfig cfg = {});
  ~Machine() override;

  // Host control plane ------------------------------------------------------
  // Loads an image and synchronously runs its init section. Ends PAUSED on
  // success, ERROR if init faulted. Resets all core state first.
  void load_image(const ProgramImage& image);
  // Throws Error(Host) for transitions the status machine does not allow.
  void host_control(HostCommand cmd, std::optional<u64> addr = std::nullopt);
  // Test surface: enter FINALIZE positioned at the finish section without
  // running it, so single-step paths through FINALIZE are reachable.
  void begin_finalize();

  // Data plane --------------------------------------------------------------
  void deliver_cycle(const CycleRecord& rec);
  // Executes one instruction while ACTIVE-RUNNING or FINALIZE, ignoring the
  // execution budget. Returns false when there is nothing to step.
  bool step();
  RunReport run_trace(CycleSource& src, const RunOptions& opt = {});

  // Emission ----------------------------------------------------------------
  // PacketSink: blocks emit through the machine so stamps stay consistent.
  void emit(const std::vector<u8>& bytes) override;
  void set_packet_sink(std::function<void(Packet&&)> sink);
  std::vector<Packet> take_packets();

  // Observers ---------------------------------------------------------------
  Status status() const { return status_; }
  const Counters& counters() const { return counters_; }
  const Fault& fault() const { return fault_; }
  bool image_loaded() const { return image_loaded_; }
  u32 gpr(u32 i) const { return gprs_[i & 31]; }
  u64 ioreg(u32 i) const { return ioregs_[i & 31]; }
  bool ioreg_valid(u32 i) const { return (ioreg_valid_ >> (i & 31)) & 1; }
  u32 pc() const { return pc_; }
  u64 current_cycle() const { return cycle_; }
  u8 dmem_byte(u32 addr) const;
  u32 dmem_word(u32 addr) const;
  void poke_dmem_word(u32 addr, u32 value);  // host-side test access
  HistogramUnit& hist() { return hist_; }
  const HistogramUnit& hist() const { return hist_; }
  bool loop_active() const { return loop_active_; }
  bool timer_armed() const { return timer_armed_; }
  u64 timer_period() const { return timer_period_; }
  std::optional<u64> start_trigger() const { return trig_start_; }
  std::optional<u64> stop_trigger() const { return trig_stop_; }
  bool trigger_window_closed() const { return window_closed_; }

  void attach_block(std::unique_ptr<SoftLogicBlock> block);
  SoftLogicBlock* block() { return block_.get(); }

 private:
  enum class ActKind : u8 { kNone, kInit, kMain, kHandler, kFinish };

  void reset_core();
  void fault_now(FaultKind kind, u32 pc, std::string detail);
  void dispatch(ActKind kind, u32 entry_slot);
  void latch_updates(const CycleRecord& rec);
  void complete_activation();
  void run_activation_to_completion();  // init/finish/idealized path
  bool execute_one();                   // false when activation ended
  void drain_budget();
  void loop_iteration();
  void finish_loop();
  void timer_tick_and_fire();
  bool timer_take_pending();
  void clock_block(const CycleRecord& rec);
  void flush_hist_window();

  u32 mem_load(u32 addr, u32 width, bool sign_extend, u32 at_pc);
  void mem_store(u32 addr, u32 width, u32 value, u32 at_pc);
  u64 read_source(const Instruction& ins) const;

  MachineConfig cfg_;
  Status status_ = Status::kUndefined;
  Fault fault_;
  Counters counters_;

  ProgramImage image_;
  bool image_loaded_ = false;
  struct Decoded {
    Instruction ins;
    bool ok = false;
  };
  std::vector<Decoded> code_;

  std::array<u32, 32> gprs_{};
  std::array<u64, 32> ioregs_{};
  u32 ioreg_valid_ = 0;
  std::vector<u8> dmem_;
  u32 pc_ = 0;

  std::array<u64, 32> wires_{};  // latest delivered values, pre-latch
  std::array<u32, 8> slregs_{};

  u64 cycle_ = 0;  // HIT cycle stamp of the record in flight
  u64 addr_ = 0;   // monitored address stream, latest value
  bool saw_records_ = false;
  u64 first_cycle_ = 0;

  // Activation state
  ActKind act_ = ActKind::kNone;
  u64 act_instructions_ = 0;
  u64 act_dispatch_record_ = 0;  // delivered-record index at dispatch
  i64 budget_ = 0;               // in ipu-cycle*ratio.hit units
  bool dispatched_this_record_ = false;

  // Deferred control
  bool pending_pause_ = false;
  bool pending_stop_ = false;

  // Triggers
  std::optional<u64> trig_start_;
  std::optional<u64> trig_stop_;
  bool window_closed_ = false;

  // Interval timer
  bool timer_armed_ = false;
  u64 timer_period_ = 0;
  u32 timer_handler_ = 0;
  u64 timer_next_fire_ = 0;  // absolute delivered-record index
  bool timer_pending_ = false;

  // Classification loop
  bool loop_active_ = false;
  u32 loop_remaining_ = 0;
  u32 loop_body_pc_ = 0;
  u32 loop_after_pc_ = 0;

  HistogramUnit hist_;
  std::unique_ptr<SoftLogicBlock> block_;
  std::function<void(Packet&&)> sink_;
  std::vector<Packet> packets_;
};

}  // namespace ipu
