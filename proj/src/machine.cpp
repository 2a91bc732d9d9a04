// Copyright (c) 2026 ipusim contributors
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "ipu/machine.hpp"

#include <utility>

namespace ipu {

namespace {

// Thrown after fault_now() to unwind out of an instruction mid-flight.
struct ExecAbort {};

u32 cost_of(const CostModel& c, const Instruction& ins) {
  Op op = ins.op;
  // FIFO pushes drain two bytes per IPU cycle after the issue cycle.
  if (op == Op::kEmit) return c.emit + (u32(ins.imm) + 1) / 2;
  switch (op) {
    case Op::kLb:
    case Op::kLh:
    case Op::kLw:
    case Op::kLbu:
    case Op::kLhu:
      return c.load;
    case Op::kSb:
    case Op::kSh:
    case Op::kSw:
    case Op::kStio:
      return c.store;
    case Op::kBeq:
    case Op::kBne:
    case Op::kBlt:
    case Op::kBge:
    case Op::kBltu:
    case Op::kBgeu:
    case Op::kBeqi:
    case Op::kBnei:
      return c.branch;
    case Op::kJal:
    case Op::kJalr:
      return c.jump;
    case Op::kHash:
      return c.hash;
    case Op::kHist:
      return c.hist;
    default:
      return c.alu;  // ALU, lui, moves, ret, regtimer, loopn
  }
}

}  // namespace

const char* status_name(Status s) {
  switch (s) {
    case Status::kUndefined: return "UNDEFINED";
    case Status::kPaused: return "PAUSED";
    case Status::kActivePaused: return "ACTIVE-PAUSED";
    case Status::kActiveRunning: return "ACTIVE-RUNNING";
    case Status::kFinalize: return "FINALIZE";
    case Status::kError: return "ERROR";
  }
  return "?";
}

const char* host_command_name(HostCommand c) {
  switch (c) {
    case HostCommand::kPause: return "PAUSE";
    case HostCommand::kResume: return "RESUME";
    case HostCommand::kFinalize: return "FINALIZE";
    case HostCommand::kConfigStart: return "CONFIG_START";
    case HostCommand::kConfigStop: return "CONFIG_STOP";
  }
  return "?";
}

const char* fault_kind_name(FaultKind k) {
  switch (k) {
    case FaultKind::kNone: return "none";
    case FaultKind::kIllegalInstruction: return "IllegalInstruction";
    case FaultKind::kMemFault: return "MemFault";
    case FaultKind::kWriteToImem: return "WriteToImem";
    case FaultKind::kIllegalLoopBody: return "IllegalLoopBody";
    case FaultKind::kRunaway: return "Runaway";
    case FaultKind::kBlockFault: return "BlockFault";
  }
  return "?";
}

Machine::Machine(MachineConfig cfg) : cfg_(cfg), hist_(cfg.hist_buckets) {
  if (cfg_.ratio.hit == 0 || cfg_.ratio.ipu == 0)
    throw Error(ErrorKind::Usage, "clock ratio terms must be nonzero");
  if (kHistAccBase + 4u * cfg_.hist_buckets > kDeviceEnd)
    throw Error(ErrorKind::Usage,
                "bucket count exceeds the device accumulator window");
  dmem_.assign(kDmemBytes, 0);
}

Machine::~Machine() = default;

void Machine::reset_core() {
  gprs_.fill(0);
  ioregs_.fill(0);
  ioreg_valid_ = 0;
  dmem_.assign(kDmemBytes, 0);
  wires_.fill(0);
  slregs_.fill(0);
  pc_ = 0;
  counters_ = Counters{};
  fault_ = Fault{};
  status_ = Status::kUndefined;
  image_loaded_ = false;
  act_ = ActKind::kNone;
  act_instructions_ = 0;
  act_dispatch_record_ = 0;
  budget_ = 0;
  dispatched_this_record_ = false;
  pending_pause_ = false;
  pending_stop_ = false;
  trig_start_.reset();
  trig_stop_.reset();
  window_closed_ = false;
  timer_armed_ = false;
  timer_period_ = 0;
  timer_handler_ = 0;
  timer_next_fire_ = 0;
  timer_pending_ = false;
  loop_active_ = false;
  loop_remaining_ = 0;
  loop_body_pc_ = 0;
  loop_after_pc_ = 0;
  hist_ = HistogramUnit(cfg_.hist_buckets);
  cycle_ = 0;
  addr_ = 0;
  saw_records_ = false;
  first_cycle_ = 0;
  // packets_ and the attached block survive a reload: both belong to the
  // host side of the interface.
}

void Machine::fault_now(FaultKind kind, u32 pc, std::string detail) {
  if (status_ != Status::kError) {  // first fault wins
    fault_ = Fault{kind, pc, std::move(detail)};
    status_ = Status::kError;
  }
  act_ = ActKind::kNone;
  loop_active_ = false;
  budget_ = 0;
}

// ---------------------------------------------------------------------------
// Host control plane
// ---------------------------------------------------------------------------

void Machine::load_image(const ProgramImage& image) {
  if (image.words.size() > kImemWords)
    throw Error(ErrorKind::ImageFormat, "image exceeds instruction memory");
  if (image.main_offset > image.words.size())
    throw Error(ErrorKind::ImageFormat, "main offset beyond image end");
  reset_core();
  image_ = image;
  code_.assign(image_.words.size(), Decoded{});
  for (std::size_t i = 0; i < image_.words.size(); i++) {
    u32 w = image_.words[i];
    if (is_legal_encoding(w)) code_[i] = Decoded{decode(w), true};
  }
  image_loaded_ = true;
  status_ = Status::kPaused;
  if (image_.main_offset > 0) {  // a zero offset means there is no init code
    act_ = ActKind::kInit;
    pc_ = 0;
    act_instructions_ = 0;
    act_dispatch_record_ = 0;
    run_activation_to_completion();
  }
}

void Machine::host_control(HostCommand cmd, std::optional<u64> addr) {
  auto reject = [&] {
    throw Error(ErrorKind::Host, std::string(host_command_name(cmd)) +
                                     " not allowed in status " +
                                     status_name(status_));
  };
  switch (cmd) {
    case HostCommand::kPause:
      if (status_ == Status::kPaused) return;  // idempotent
      if (status_ == Status::kActivePaused) {
        status_ = Status::kPaused;
        return;
      }
      if (status_ == Status::kActiveRunning) {
        pending_pause_ = true;  // graceful: honored at activation completion
        return;
      }
      reject();
      return;
    case HostCommand::kResume:
      if (status_ == Status::kActivePaused ||
          status_ == Status::kActiveRunning) {
        pending_pause_ = false;  // idempotent, cancels a deferred pause
        return;
      }
      if (status_ == Status::kPaused) {
        status_ = Status::kActivePaused;
        return;
      }
      reject();
      return;
    case HostCommand::kFinalize:
      if (status_ != Status::kPaused && status_ != Status::kActivePaused)
        reject();
      begin_finalize();
      run_activation_to_completion();
      return;
    case HostCommand::kConfigStart:
    case HostCommand::kConfigStop:
      if (status_ == Status::kUndefined || status_ == Status::kError ||
          status_ == Status::kFinalize)
        reject();
      if (cmd == HostCommand::kConfigStart) trig_start_ = addr;
      else trig_stop_ = addr;
      window_closed_ = false;  // reconfiguring rearms the one-shot window
      return;
  }
}

void Machine::begin_finalize() {
  if (status_ != Status::kPaused && status_ != Status::kActivePaused)
    throw Error(ErrorKind::Host, std::string("FINALIZE not allowed in ") +
                                     status_name(status_));
  status_ = Status::kFinalize;
  // An image whose words never reach the finish region finalizes as a no-op.
  if (image_.words.size() <= kFinishSlot) {
    status_ = Status::kPaused;
    return;
  }
  act_ = ActKind::kFinish;
  pc_ = kFinishSlot;
  act_instructions_ = 0;
  act_dispatch_record_ = counters_.delivered;
  budget_ = 0;
}

// ---------------------------------------------------------------------------
// Data plane
// ---------------------------------------------------------------------------

void Machine::deliver_cycle(const CycleRecord& rec) {
  if (!image_loaded_)
    throw Error(ErrorKind::Host, "deliver_cycle: no image loaded");
  counters_.delivered++;
  cycle_ = rec.cycle;
  if (!saw_records_) {
    saw_records_ = true;
    first_cycle_ = rec.cycle;
  }
  dispatched_this_record_ = false;
  bool loop_claimed = false;

  // Phase 1: monitored address stream and trigger edges. The start edge
  // fires first, so start and stop matching on the same record open and
  // immediately close a zero-length window.
  if (rec.has_addr) {
    addr_ = rec.addr;
    if (trig_start_ && addr_ == *trig_start_ && !window_closed_ &&
        status_ == Status::kPaused) {
      status_ = Status::kActivePaused;
    }
    if (trig_stop_ && addr_ == *trig_stop_) {
      window_closed_ = true;  // sticky until the host reconfigures
      if (status_ == Status::kActivePaused) status_ = Status::kPaused;
      else if (status_ == Status::kActiveRunning) pending_stop_ = true;
    }
  }

  // Phase 2: wire view update and soft-logic clock, every delivered record.
  clock_block(rec);

  // Phase 3: interval timer, counted in delivered records.
  timer_tick_and_fire();

  // Phase 4: record disposition. Exactly one conservation bucket per record.
  bool has_data = !rec.updates.empty();
  if (loop_active_) {
    // A running classify loop owns the record stream: latch and iterate.
    latch_updates(rec);
    counters_.loop_consumed++;
    loop_claimed = true;
    loop_iteration();
  } else if (status_ == Status::kActiveRunning) {
    if (has_data) counters_.dropped_arrivals++;
    else counters_.idle_records++;
  } else if (status_ == Status::kActivePaused) {
    if (timer_take_pending()) {
      // A pending timer handler dispatches ahead of fresh data.
      dispatch(ActKind::kHandler, timer_handler_);
      dispatched_this_record_ = true;
      if (cfg_.idealized) run_activation_to_completion();
    }
    if (status_ == Status::kActivePaused) {
      if (has_data) {
        dispatch(ActKind::kMain, image_.main_offset);
        latch_updates(rec);
        dispatched_this_record_ = true;
        if (cfg_.idealized) {
          run_activation_to_completion();
        } else if (pc_ < code_.size() && code_[pc_].ok &&
                   code_[pc_].ins.op == Op::kLoopn) {
          // Entry-position loop: the loop setup folds into the dispatch and
          // iteration 1 classifies the dispatch record itself.
          execute_one();
        }
        if (loop_active_) loop_iteration();
      } else {
        counters_.idle_records++;
      }
    } else if (status_ == Status::kActiveRunning) {
      // The handler claimed the core this record.
      if (has_data) counters_.dropped_arrivals++;
      else counters_.idle_records++;
    } else {
      // Handler faulted instantly (idealized); the record was gated.
      if (has_data) counters_.gated_records++;
      else counters_.idle_records++;
    }
  } else {
    // PAUSED / FINALIZE / ERROR: the data plane is gated.
    if (has_data) counters_.gated_records++;
    else counters_.idle_records++;
  }

  // Phase 5: execution budget. Dispatch occupies its whole record, and loop
  // records grant no budget; otherwise each delivered HIT cycle funds
  // ratio.ipu units against instruction costs of cost*ratio.hit units.
  if (!cfg_.idealized && status_ == Status::kActiveRunning &&
      !dispatched_this_record_ && !loop_claimed && !loop_active_) {
    budget_ += cfg_.ratio.ipu;
    drain_budget();
  }
}

bool Machine::step() {
  if (status_ != Status::kActiveRunning && status_ != Status::kFinalize)
    return false;
  if (loop_active_ || act_ == ActKind::kNone) return false;
  execute_one();
  return true;
}

RunReport Machine::run_trace(CycleSource& src, const RunOptions& opt) {
  if (!image_loaded_)
    throw Error(ErrorKind::Host, "run_trace: no image loaded");
  CycleRecord rec;
  while (src.next(rec)) {
    deliver_cycle(rec);
    if (status_ == Status::kError) break;
  }
  // The IPU clock outlives the HIT stream: an in-flight activation and any
  // pending timer handler run to completion once deliveries stop. A partial
  // classify loop stays parked, it can only advance on records.
  for (;;) {
    if (status_ == Status::kActiveRunning && act_ != ActKind::kNone &&
        !loop_active_) {
      run_activation_to_completion();
      continue;
    }
    if (status_ == Status::kActivePaused && timer_take_pending()) {
      dispatch(ActKind::kHandler, timer_handler_);
      continue;
    }
    break;
  }
  if (block_ && status_ != Status::kError) {
    try {
      block_->trace_end(*this);
    } catch (const Error& e) {
      fault_now(FaultKind::kBlockFault, pc_, e.what());
    }
  }
  if (opt.finalize_at_end &&
      (status_ == Status::kPaused || status_ == Status::kActivePaused)) {
    host_control(HostCommand::kFinalize);
  }
  RunReport r;
  r.counters = counters_;
  r.final_status = status_;
  r.fault = fault_;
  r.first_cycle = first_cycle_;
  r.last_cycle = cycle_;
  r.saw_records = saw_records_;
  r.loop_active_at_end = loop_active_;
  return r;
}

// ---------------------------------------------------------------------------
// Activation engine
// ---------------------------------------------------------------------------

void Machine::dispatch(ActKind kind, u32 entry_slot) {
  act_ = kind;
  pc_ = entry_slot;
  act_instructions_ = 0;
  act_dispatch_record_ = counters_.delivered;
  budget_ = 0;
  if (kind == ActKind::kMain) {
    counters_.dispatches++;
    ioreg_valid_ = 0;  // valid flags clear when _main begins
  } else if (kind == ActKind::kHandler) {
    counters_.handler_dispatches++;
  }
  status_ = Status::kActiveRunning;
}

void Machine::latch_updates(const CycleRecord& rec) {
  for (const SignalUpdate& u : rec.updates) {
    ioregs_[u.ioreg & 31] = u.value;
    ioreg_valid_ |= 1u << (u.ioreg & 31);
  }
}

void Machine::complete_activation() {
  ActKind k = act_;
  act_ = ActKind::kNone;
  act_instructions_ = 0;
  budget_ = 0;  // leftover budget is discarded, not banked
  loop_active_ = false;
  switch (k) {
    case ActKind::kInit:
    case ActKind::kFinish:
      status_ = Status::kPaused;
      break;
    case ActKind::kMain:
    case ActKind::kHandler:
      if (pending_pause_ || pending_stop_) {
        pending_pause_ = false;
        pending_stop_ = false;
        status_ = Status::kPaused;
      } else {
        status_ = Status::kActivePaused;
      }
      break;
    case ActKind::kNone:
      break;
  }
}

void Machine::run_activation_to_completion() {
  while (act_ != ActKind::kNone && status_ != Status::kError &&
         !loop_active_) {
    if (!execute_one()) break;
  }
}

void Machine::drain_budget() {
  while (act_ != ActKind::kNone && !loop_active_ &&
         status_ == Status::kActiveRunning) {
    if (pc_ >= code_.size() || !code_[pc_].ok) {
      execute_one();  // surfaces the fetch fault
      return;
    }
    i64 need = i64(cost_of(cfg_.costs, code_[pc_].ins)) * cfg_.ratio.hit;
    if (budget_ < need) return;
    budget_ -= need;
    if (!execute_one()) return;
  }
}

void Machine::timer_tick_and_fire() {
  if (!timer_armed_) return;
  if (counters_.delivered >= timer_next_fire_) {
    if (!timer_pending_) timer_pending_ = true;  // overruns coalesce
    counters_.timer_fires++;
    timer_next_fire_ += timer_period_;
  }
}

bool Machine::timer_take_pending() {
  if (!timer_pending_) return false;
  timer_pending_ = false;
  return true;
}

void Machine::clock_block(const CycleRecord& rec) {
  u32 fresh = 0;
  for (const SignalUpdate& u : rec.updates) {
    wires_[u.ioreg & 31] = u.value;
    fresh |= 1u << (u.ioreg & 31);
  }
  if (!block_) return;
  WireView w;
  w.values = wires_.data();
  w.fresh_mask = fresh;
  w.cycle = rec.cycle;
  try {
    block_->clock(w, *this);
  } catch (const Error& e) {
    fault_now(FaultKind::kBlockFault, pc_, e.what());
  }
}

void Machine::loop_iteration() {
  std::array<u64, HistogramUnit::kLanes> vals{};
  for (u32 i = 0; i < HistogramUnit::kLanes; i++) {
    const HistLane& ln = hist_.lane(i);
    if (!ln.enabled) continue;
    u64 v = ioregs_[ln.ioreg & 31];
    vals[i] = ln.high ? (v >> 32) : (v & 0xFFFFFFFFu);
  }
  hist_.classify(vals);
  counters_.instructions++;
  counters_.active_cycles += cfg_.costs.hist;
  act_instructions_++;
  if (--loop_remaining_ == 0) finish_loop();
}

void Machine::finish_loop() {
  if (hist_.flush_on_loop()) flush_hist_window();
  loop_active_ = false;
  bool after_is_ret = loop_after_pc_ < code_.size() &&
                      code_[loop_after_pc_].ok &&
                      code_[loop_after_pc_].ins.op == Op::kRet;
  if (after_is_ret) {
    // The trailing ret folds into the final iteration: zero extra records.
    complete_activation();
    return;
  }
  pc_ = loop_after_pc_;
  if (cfg_.idealized) run_activation_to_completion();
  // Faithful continuation resumes with the next record's budget.
}

void Machine::flush_hist_window() {
  std::vector<u8> pkt = hist_.flush_window();
  emit(pkt);
  counters_.windows_flushed++;
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

void Machine::emit(const std::vector<u8>& bytes) {
  counters_.emitted_packets++;
  counters_.emitted_bytes += bytes.size();
  Packet p;
  p.cycle = cycle_;
  p.bytes = bytes;
  if (sink_) sink_(std::move(p));
  else packets_.push_back(std::move(p));
}

void Machine::set_packet_sink(std::function<void(Packet&&)> sink) {
  sink_ = std::move(sink);
}

std::vector<Packet> Machine::take_packets() {
  std::vector<Packet> out;
  out.swap(packets_);
  return out;
}

void Machine::attach_block(std::unique_ptr<SoftLogicBlock> block) {
  block_ = std::move(block);
  if (block_) block_->attach_slregs(slregs_.data());
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

u64 Machine::read_source(const Instruction& ins) const {
  if (!ins.src.ioreg) return gprs_[ins.src.idx & 31];
  u64 v = ioregs_[ins.src.idx & 31];
  return ins.src.high ? (v >> 32) : (v & 0xFFFFFFFFu);
}

bool Machine::execute_one() {
  if (act_ == ActKind::kNone) return false;
  if (pc_ >= code_.size()) {
    fault_now(FaultKind::kIllegalInstruction, pc_,
              "execution ran past the image end");
    return false;
  }
  const Decoded& d = code_[pc_];
  if (!d.ok) {
    fault_now(FaultKind::kIllegalInstruction, pc_,
              "illegal instruction word or gap");
    return false;
  }
  if (++act_instructions_ > cfg_.activation_cap) {
    fault_now(FaultKind::kRunaway, pc_,
              "activation exceeded the instruction cap");
    return false;
  }
  const Instruction& ins = d.ins;
  counters_.instructions++;
  counters_.active_cycles += cost_of(cfg_.costs, ins);

  auto r = [&](u8 i) -> u32 { return gprs_[i & 31]; };
  auto wr = [&](u8 i, u32 v) {
    if ((i & 31) != 0) gprs_[i & 31] = v;
  };
  auto branch_slot = [&](i64 byte_target) -> u32 {
    if (byte_target < 0 || (byte_target & 3) ||
        byte_target >= i64(kImemWords) * 4) {
      fault_now(FaultKind::kIllegalInstruction, pc_,
                "branch target outside instruction memory");
      throw ExecAbort{};
    }
    return u32(byte_target / 4);
  };

  u32 next = pc_ + 1;
  try {
    switch (ins.op) {
      case Op::kAdd: wr(ins.rd, r(ins.rs1) + r(ins.rs2)); break;
      case Op::kSub: wr(ins.rd, r(ins.rs1) - r(ins.rs2)); break;
      case Op::kSll: wr(ins.rd, r(ins.rs1) << (r(ins.rs2) & 31)); break;
      case Op::kSlt:
        wr(ins.rd, i32(r(ins.rs1)) < i32(r(ins.rs2)) ? 1 : 0);
        break;
      case Op::kSltu: wr(ins.rd, r(ins.rs1) < r(ins.rs2) ? 1 : 0); break;
      case Op::kXor: wr(ins.rd, r(ins.rs1) ^ r(ins.rs2)); break;
      case Op::kSrl: wr(ins.rd, r(ins.rs1) >> (r(ins.rs2) & 31)); break;
      case Op::kSra:
        wr(ins.rd, u32(i32(r(ins.rs1)) >> (r(ins.rs2) & 31)));
        break;
      case Op::kOr: wr(ins.rd, r(ins.rs1) | r(ins.rs2)); break;
      case Op::kAnd: wr(ins.rd, r(ins.rs1) & r(ins.rs2)); break;

      case Op::kAddi: wr(ins.rd, r(ins.rs1) + u32(ins.imm)); break;
      case Op::kSlti:
        wr(ins.rd, i32(r(ins.rs1)) < ins.imm ? 1 : 0);
        break;
      case Op::kSltiu: wr(ins.rd, r(ins.rs1) < u32(ins.imm) ? 1 : 0); break;
      case Op::kXori: wr(ins.rd, r(ins.rs1) ^ u32(ins.imm)); break;
      case Op::kOri: wr(ins.rd, r(ins.rs1) | u32(ins.imm)); break;
      case Op::kAndi: wr(ins.rd, r(ins.rs1) & u32(ins.imm)); break;
      case Op::kSlli: wr(ins.rd, r(ins.rs1) << (ins.imm & 31)); break;
      case Op::kSrli: wr(ins.rd, r(ins.rs1) >> (ins.imm & 31)); break;
      case Op::kSrai:
        wr(ins.rd, u32(i32(r(ins.rs1)) >> (ins.imm & 31)));
        break;
      case Op::kLui: wr(ins.rd, u32(ins.imm) << 12); break;

      case Op::kLb:
        wr(ins.rd, mem_load(r(ins.rs1) + u32(ins.imm), 1, true, pc_));
        break;
      case Op::kLbu:
        wr(ins.rd, mem_load(r(ins.rs1) + u32(ins.imm), 1, false, pc_));
        break;
      case Op::kLh:
        wr(ins.rd, mem_load(r(ins.rs1) + u32(ins.imm), 2, true, pc_));
        break;
      case Op::kLhu:
        wr(ins.rd, mem_load(r(ins.rs1) + u32(ins.imm), 2, false, pc_));
        break;
      case Op::kLw:
        wr(ins.rd, mem_load(r(ins.rs1) + u32(ins.imm), 4, false, pc_));
        break;
      case Op::kSb:
        mem_store(r(ins.rs1) + u32(ins.imm), 1, r(ins.rs2), pc_);
        break;
      case Op::kSh:
        mem_store(r(ins.rs1) + u32(ins.imm), 2, r(ins.rs2), pc_);
        break;
      case Op::kSw:
        mem_store(r(ins.rs1) + u32(ins.imm), 4, r(ins.rs2), pc_);
        break;

      case Op::kBeq:
        if (r(ins.rs1) == r(ins.rs2))
          next = branch_slot(i64(pc_) * 4 + ins.imm);
        break;
      case Op::kBne:
        if (r(ins.rs1) != r(ins.rs2))
          next = branch_slot(i64(pc_) * 4 + ins.imm);
        break;
      case Op::kBlt:
        if (i32(r(ins.rs1)) < i32(r(ins.rs2)))
          next = branch_slot(i64(pc_) * 4 + ins.imm);
        break;
      case Op::kBge:
        if (i32(r(ins.rs1)) >= i32(r(ins.rs2)))
          next = branch_slot(i64(pc_) * 4 + ins.imm);
        break;
      case Op::kBltu:
        if (r(ins.rs1) < r(ins.rs2))
          next = branch_slot(i64(pc_) * 4 + ins.imm);
        break;
      case Op::kBgeu:
        if (r(ins.rs1) >= r(ins.rs2))
          next = branch_slot(i64(pc_) * 4 + ins.imm);
        break;
      case Op::kJal:
        wr(ins.rd, (pc_ + 1) * 4);
        next = branch_slot(i64(pc_) * 4 + ins.imm);
        break;
      case Op::kJalr: {
        u32 t = r(ins.rs1) + u32(ins.imm);
        wr(ins.rd, (pc_ + 1) * 4);
        next = branch_slot(i64(t));
        break;
      }

      case Op::kHash:
        wr(ins.rd, hash32(u32(read_source(ins))));
        break;
      case Op::kHist: {
        std::array<u64, HistogramUnit::kLanes> vals{};
        for (u32 i = 0; i < HistogramUnit::kLanes; i++) {
          const HistLane& ln = hist_.lane(i);
          if (!ln.enabled) continue;
          u64 v = ioregs_[ln.ioreg & 31];
          vals[i] = ln.high ? (v >> 32) : (v & 0xFFFFFFFFu);
        }
        hist_.classify(vals);
        break;
      }
      case Op::kRegtimer: {
        u64 period = r(ins.rs1);
        if (period == 0) {
          fault_now(FaultKind::kIllegalInstruction, pc_, "zero timer period");
          throw ExecAbort{};
        }
        // Re-arming with identical parameters is a no-op so a timer placed
        // in _main keeps its phase across activations.
        if (!(timer_armed_ && timer_period_ == period &&
              timer_handler_ == ins.target)) {
          timer_armed_ = true;
          timer_period_ = period;
          timer_handler_ = ins.target;
          timer_next_fire_ = act_dispatch_record_ + period;
          timer_pending_ = false;
        }
        break;
      }
      case Op::kLoopn: {
        u32 count = u32(ins.imm);
        if (count == 0) {
          next = pc_ + 2;  // skip the body entirely
          break;
        }
        u32 body = pc_ + 1;
        if (body >= code_.size() || !code_[body].ok ||
            code_[body].ins.op != Op::kHist) {
          fault_now(FaultKind::kIllegalLoopBody, pc_,
                    "loop body must be a single classify instruction");
          throw ExecAbort{};
        }
        loop_active_ = true;
        loop_remaining_ = count;
        loop_body_pc_ = body;
        loop_after_pc_ = pc_ + 2;
        budget_ = 0;  // the loop owns the record stream from here
        break;
      }
      case Op::kEmit: {
        u32 base = r(ins.rs1);
        u32 len = u32(ins.imm);
        u64 end = u64(base) + len;
        bool in_ram = (end <= kDeviceBase) ||
                      (base >= kDeviceEnd && end <= kDmemBytes);
        if (!in_ram) {
          fault_now(FaultKind::kMemFault, pc_,
                    "emit buffer outside scratchpad RAM");
          throw ExecAbort{};
        }
        std::vector<u8> bytes(dmem_.begin() + base, dmem_.begin() + base + len);
        emit(bytes);
        break;
      }
      case Op::kRet:
        complete_activation();
        return false;

      case Op::kMvio:
        wr(ins.rd, u32(read_source(ins)));
        break;
      case Op::kBeqi:
      case Op::kBnei: {
        bool eq = read_source(ins) == u64(ins.cmp);
        bool taken = (ins.op == Op::kBeqi) ? eq : !eq;
        if (taken) next = ins.target;
        break;
      }
      case Op::kStio: {
        u64 v = ioregs_[ins.src.idx & 31];
        u32 val = ins.src.high ? u32(v >> 32) : u32(v & 0xFFFFFFFFu);
        mem_store(r(ins.rs1) + u32(ins.imm), 4, val, pc_);
        break;
      }
    }
  } catch (const ExecAbort&) {
    return false;
  }
  pc_ = next;
  return act_ != ActKind::kNone && status_ != Status::kError;
}

// ---------------------------------------------------------------------------
// Memory map
// ---------------------------------------------------------------------------

u32 Machine::mem_load(u32 addr, u32 width, bool sign_extend, u32 at_pc) {
  if (addr & (width - 1)) {
    fault_now(FaultKind::kMemFault, at_pc, "misaligned load at " + to_hex(addr));
    throw ExecAbort{};
  }
  // Instruction memory window, read-only words.
  if (addr >= kImemWindowBase && addr < kImemWindowBase + kImemWords * 4) {
    if (width != 4) {
      fault_now(FaultKind::kMemFault, at_pc,
                "imem window requires word access");
      throw ExecAbort{};
    }
    u32 slot = (addr - kImemWindowBase) / 4;
    return slot < image_.words.size() ? image_.words[slot] : 0;
  }
  if (addr >= kFifoBase) {
    fault_now(FaultKind::kMemFault, at_pc, "FIFO window is write-only");
    throw ExecAbort{};
  }
  if (addr >= kDmemBytes) {
    fault_now(FaultKind::kMemFault, at_pc,
              "load outside data space at " + to_hex(addr));
    throw ExecAbort{};
  }
  if (addr >= kDeviceBase && addr < kDeviceEnd) {
    if (width != 4) {
      fault_now(FaultKind::kMemFault, at_pc,
                "device window requires word access");
      throw ExecAbort{};
    }
    if (addr >= kSlRegBase && addr < kSlRegEnd)
      return slregs_[(addr - kSlRegBase) / 4];
    if (addr == kHistModeAddr) return u32(hist_.mode());
    if (addr == kHistLanesAddr) return hist_.lane_sel();
    if (addr == kHistCtrlAddr) return hist_.ctrl();
    if (addr == kHistOpsAddr) return hist_.overflow() ? 1u : 0u;
    if (addr >= kHistAccBase &&
        addr < kHistAccBase + 4 * hist_.bucket_count())
      return hist_.bucket((addr - kHistAccBase) / 4);
    fault_now(FaultKind::kMemFault, at_pc,
              "reserved device address " + to_hex(addr));
    throw ExecAbort{};
  }
  u32 v = 0;
  for (u32 i = 0; i < width; i++) v |= u32(dmem_[addr + i]) << (8 * i);
  if (sign_extend && width == 1) v = u32(i32(i8(v)));
  if (sign_extend && width == 2) v = u32(i32(i16(v)));
  return v;
}

void Machine::mem_store(u32 addr, u32 width, u32 value, u32 at_pc) {
  if (addr & (width - 1)) {
    fault_now(FaultKind::kMemFault, at_pc,
              "misaligned store at " + to_hex(addr));
    throw ExecAbort{};
  }
  if (addr >= kImemWindowBase && addr < kImemWindowBase + kImemWords * 4) {
    fault_now(FaultKind::kWriteToImem, at_pc,
              "store into the instruction memory window");
    throw ExecAbort{};
  }
  // FIFO doorbell: each store pushes one packet of the store's width.
  if (addr >= kFifoBase && addr < kFifoEnd) {
    std::vector<u8> bytes(width);
    for (u32 i = 0; i < width; i++) bytes[i] = u8(value >> (8 * i));
    emit(bytes);
    return;
  }
  if (addr >= kDmemBytes) {
    fault_now(FaultKind::kMemFault, at_pc,
              "store outside data space at " + to_hex(addr));
    throw ExecAbort{};
  }
  if (addr >= kDeviceBase && addr < kDeviceEnd) {
    if (width != 4) {
      fault_now(FaultKind::kMemFault, at_pc,
                "device window requires word access");
      throw ExecAbort{};
    }
    if (addr >= kSlRegBase && addr < kSlRegEnd) {
      u32 idx = (addr - kSlRegBase) / 4;
      slregs_[idx] = value;
      if (block_) {
        try {
          block_->slreg_written(idx, value);
        } catch (const Error& e) {
          fault_now(FaultKind::kBlockFault, at_pc, e.what());
          throw ExecAbort{};
        }
      }
      return;
    }
    if (addr == kHistModeAddr) {
      if (value > u32(HistMode::kSimdAdd)) {
        fault_now(FaultKind::kMemFault, at_pc, "invalid histogram mode");
        throw ExecAbort{};
      }
      hist_.set_mode(HistMode(value));
      return;
    }
    if (addr == kHistLanesAddr) {
      hist_.set_lane_sel(value);
      return;
    }
    if (addr == kHistCtrlAddr) {
      hist_.set_ctrl(value);
      return;
    }
    if (addr == kHistOpsAddr) {
      hist_.reset_window();  // any written value clears window and overflow
      return;
    }
    fault_now(FaultKind::kMemFault, at_pc,
              "store to read-only or reserved device address " + to_hex(addr));
    throw ExecAbort{};
  }
  for (u32 i = 0; i < width; i++) dmem_[addr + i] = u8(value >> (8 * i));
}

u8 Machine::dmem_byte(u32 addr) const {
  if (addr >= kDmemBytes) throw Error(ErrorKind::Host, "dmem_byte out of range");
  return dmem_[addr];
}

u32 Machine::dmem_word(u32 addr) const {
  if (addr + 4 > kDmemBytes || (addr & 3))
    throw Error(ErrorKind::Host, "dmem_word out of range or misaligned");
  u32 v = 0;
  for (u32 i = 0; i < 4; i++) v |= u32(dmem_[addr + i]) << (8 * i);
  return v;
}

void Machine::poke_dmem_word(u32 addr, u32 value) {
  if (addr + 4 > kDmemBytes || (addr & 3))
    throw Error(ErrorKind::Host, "poke_dmem_word out of range or misaligned");
  if (addr >= kDeviceBase && addr < kDeviceEnd)
    throw Error(ErrorKind::Host, "poke_dmem_word cannot touch device space");
  for (u32 i = 0; i < 4; i++) dmem_[addr + i] = u8(value >> (8 * i));
}

}  // namespace ipu
