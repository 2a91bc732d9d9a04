// Copyright (c) 2026 ipusim contributors
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "ipu/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "ipu/funcunits.hpp"
#include "json.hpp"

namespace ipu {

// ---------------------------------------------------------------------------
// Sampling program generation
// ---------------------------------------------------------------------------

u8 pics_attribution_ioreg(u32 event_bit) {
  // Flush-adjacent events carry the flushed-instruction PC; everything else
  // is charged to the committing instruction.
  return (event_bit == 5 || event_bit == 8) ? 15 : 12;
}

std::string pics_program_source(u64 period) {
  std::ostringstream os;
  os << "; Per-PC cycle stack sampler.\n"
     << "; Scratchpad layout: 272 table slots of {pc32, packed32} at 0x1000\n"
     << "; (256 direct + 16 overflow), packed = cycles<<11 | event bits.\n"
     << "; 0xFF0 payload staging, 0xFF8 flushed-pc stash, 0xFFC lost flag.\n"
     << ".policy restrictive\n"
     << "init:\n"
     << "  li r20, 0x1000\n"
     << "  li r21, 2048\n"
     << "  li r22, 0xFF0\n"
     << "  li r23, " << period << "\n"
     << "  ret\n"
     << "_main:\n"
     << "  regtimer r23, flush_h\n"
     << "  mv r3, x12\n";
  // Priority chain: the lowest-indexed set event flag wins the record.
  for (u32 k = 0; k < kPicsEventCount; k++) {
    const char* dest = pics_attribution_ioreg(k) == 15 ? "acc_flushpc"
                                                       : "account";
    os << "  addi r4, r0, " << (1u << k) << "\n"
       << "  beq x" << k << ", 1, " << dest << "\n";
  }
  os << "  ret\n"
     << "acc_flushpc:\n"
     << "  st x15, r20, -8\n"  // stash the flushed-instruction pc
     << "  mv r3, x15\n"
     << "account:\n"
     << "  hash r5, r3\n"
     << "  andi r5, r5, 255\n"
     << "  slli r5, r5, 3\n"
     << "  add r5, r5, r20\n"
     << "  addi r6, r0, 16\n"
     << "probe:\n"
     << "  ld r7, r5, 0\n"
     << "  beq r7, r3, acc_hit\n"
     << "  beq r7, r0, acc_claim\n"
     << "  addi r5, r5, 8\n"
     << "  addi r6, r6, -1\n"
     << "  bne r6, r0, probe\n"
     << "  addi r7, r0, 1\n"  // probe exhausted: sticky lost flag
     << "  st r7, r20, -4\n"
     << "  ret\n"
     << "acc_claim:\n"
     << "  st r3, r5, 0\n"
     << "acc_hit:\n"
     << "  ld r8, r5, 4\n"
     << "  add r8, r8, r21\n"
     << "  or r8, r8, r4\n"
     << "  st r8, r5, 4\n"
     << "  ret\n"
     << "flush_h:\n"
     << "  mv r5, r20\n"
     << "  addi r6, r0, " << kPicsTableSlots << "\n"
     << "  mv r8, r0\n"
     << "  mv r9, r0\n"
     << "scan:\n"
     << "  ld r7, r5, 4\n"
     << "  bgeu r8, r7, scan_next\n"  // keep the first strict maximum
     << "  mv r8, r7\n"
     << "  ld r9, r5, 0\n"
     << "scan_next:\n"
     << "  st r0, r5, 4\n"
     << "  st r0, r5, 0\n"
     << "  addi r5, r5, 8\n"
     << "  addi r6, r6, -1\n"
     << "  bne r6, r0, scan\n"
     << "  beq r8, r0, fl_done\n"
     << "  st r9, r20, -16\n"  // payload: pc32 at 0xFF0
     << "  andi r7, r8, 2047\n"
     << "  sh r7, r20, -12\n"  // payload: sig16 at 0xFF4
     << "  emit r22, 6\n"
     << "fl_done:\n"
     << "  ret\n";
  return os.str();
}

ProgramImage pics_program(const AbiSpec& abi, u64 period) {
  ProgramImage img = assemble(pics_program_source(period), abi, "<pics>");
  img.name = "pics";
  return img;
}

std::string util_program_source(u32 window) {
  std::ostringstream os;
  os << "; Activity-window utilization: accumulate 3 busy bits per window.\n"
     << ".policy restrictive\n"
     << "init:\n"
     << "  li r1, 0x5020\n"
     << "  addi r2, r0, 2\n"       // accumulate-add mode
     << "  st r2, r1, 0\n"
     << "  li r3, 0x424140\n"      // lanes: x0,x1,x2 low halves
     << "  st r3, r1, 4\n"
     << "  addi r4, r0, 7\n"       // flush-on-loop, 3 lanes
     << "  st r4, r1, 8\n"
     << "  ret\n"
     << "_main:\n"
     << "  loopn " << window << "\n"
     << "  hist\n"
     << "  ret\n";
  return os.str();
}

ProgramImage util_program(const AbiSpec& abi, u32 window) {
  ProgramImage img = assemble(util_program_source(window), abi, "<util>");
  img.name = "util";
  return img;
}

// ---------------------------------------------------------------------------
// PICS post-processing and host-side recount
// ---------------------------------------------------------------------------

u64 PicsTable::total_cycles() const {
  u64 t = 0;
  for (const auto& r : rows) t += r.cycles;
  return t;
}

std::map<u32, u64> PicsTable::cycles_by_pc() const {
  std::map<u32, u64> m;
  for (const auto& r : rows) m[r.pc] += r.cycles;
  return m;
}

PicsTable pics_postprocess(const std::vector<std::vector<u8>>& payloads,
                           u64 period) {
  PicsTable t;
  t.period = period;
  std::map<std::pair<u32, u16>, u64> wins;
  for (const auto& p : payloads) {
    if (p.size() != 6)
      throw Error(ErrorKind::Malformed,
                  "cycle-stack payload must be 6 bytes, got " +
                      std::to_string(p.size()));
    u32 pc = u32(p[0]) | u32(p[1]) << 8 | u32(p[2]) << 16 | u32(p[3]) << 24;
    u16 sig = u16(p[4]) | u16(p[5]) << 8;
    if (sig >= (1u << kPicsEventCount))
      throw Error(ErrorKind::Malformed, "cycle-stack signature out of range");
    wins[{pc, sig}]++;
  }
  for (const auto& [key, n] : wins)
    t.rows.push_back({key.first, key.second, n * period, n});
  std::sort(t.rows.begin(), t.rows.end(), [](const PicsRow& a,
                                             const PicsRow& b) {
    if (a.cycles != b.cycles) return a.cycles > b.cycles;
    if (a.pc != b.pc) return a.pc < b.pc;
    return a.sig < b.sig;
  });
  return t;
}

PicsTable pics_recount(CycleSource& src, u64 period) {
  if (period == 0) throw Error(ErrorKind::Usage, "recount period is zero");
  struct Slot {
    u32 pc = 0;
    u32 packed = 0;
  };
  std::vector<Slot> slots(kPicsTableSlots);
  u64 vals[kNumIoRegs] = {};
  bool armed = false;
  u64 next_fire = 0;
  std::vector<std::vector<u8>> payloads;

  auto flush = [&]() {
    u32 best = 0, best_pc = 0;
    for (auto& s : slots) {
      if (s.packed > best) {
        best = s.packed;
        best_pc = s.pc;
      }
      s.pc = 0;
      s.packed = 0;
    }
    if (best == 0) return;
    u16 sig = u16(best & 0x7FF);
    payloads.push_back({u8(best_pc), u8(best_pc >> 8), u8(best_pc >> 16),
                        u8(best_pc >> 24), u8(sig), u8(sig >> 8)});
  };

  auto attribute = [&](u32 pc, u32 bit) {
    u32 h = hash32(pc) & (256 - 1);
    for (u32 i = 0; i < kPicsProbeDepth; i++) {
      Slot& s = slots[h + i];
      if (s.pc != pc && s.pc != 0) continue;
      s.pc = pc;  // claim keeps any stale packed value, as the device does
      s.packed = (s.packed + 2048) | bit;
      return;
    }
    // Probe exhausted: the sample is lost, mirroring the sticky lost flag.
  };

  CycleRecord rec;
  u64 p = 0;  // 1-based delivered-record position
  while (src.next(rec)) {
    p++;
    if (armed && p >= next_fire) {
      flush();
      next_fire += period;
    }
    if (rec.updates.empty()) continue;
    if (!armed) {
      armed = true;
      next_fire = p + period;
    }
    for (const auto& u : rec.updates) vals[u.ioreg] = u.value;
    u32 winner = kPicsEventCount;
    for (u32 k = 0; k < kPicsEventCount; k++) {
      if (vals[k] == 1) {
        winner = k;
        break;
      }
    }
    if (winner == kPicsEventCount) continue;
    u32 pc = u32(vals[pics_attribution_ioreg(winner)]);
    attribute(pc, 1u << winner);
  }
  return pics_postprocess(payloads, period);
}

std::string pics_signature_names(u16 sig, const AbiSpec& abi) {
  std::string out;
  for (u32 k = 0; k < kPicsEventCount; k++) {
    if (!(sig & (1u << k))) continue;
    if (!out.empty()) out += "|";
    const SignalDecl* d = abi.by_ioreg(u8(k));
    out += d ? d->name : "x" + std::to_string(k);
  }
  return out.empty() ? "none" : out;
}

std::string pics_csv(const PicsTable& t) {
  std::ostringstream os;
  os << "pc,signature,cycles\n";
  for (const auto& r : t.rows)
    os << "0x" << to_hex(r.pc) << "," << r.sig << "," << r.cycles << "\n";
  return os.str();
}

std::string pics_json(const PicsTable& t, const AbiSpec* abi) {
  nlohmann::json j;
  j["period"] = t.period;
  j["total_cycles"] = t.total_cycles();
  j["rows"] = nlohmann::json::array();
  for (const auto& r : t.rows) {
    nlohmann::json row;
    row["pc"] = "0x" + to_hex(r.pc);
    row["signature"] = r.sig;
    if (abi) row["events"] = pics_signature_names(r.sig, *abi);
    row["cycles"] = r.cycles;
    row["payloads"] = r.payloads;
    j["rows"].push_back(row);
  }
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Utilization windows
// ---------------------------------------------------------------------------

std::vector<UtilWindow> util_decode(const std::vector<std::vector<u8>>& pkts) {
  std::vector<UtilWindow> out;
  for (const auto& p : pkts) {
    if (p.size() != 1 + kUtilSignals || (p[0] & 0xF0) != 0x50)
      throw Error(ErrorKind::Malformed, "bad utilization window packet");
    UtilWindow w;
    w.index = out.size();
    for (u32 i = 0; i < kUtilSignals; i++)
      w.counts[i] = u32(p[1 + i]) | (u32((p[0] >> i) & 1) << 8);
    out.push_back(w);
  }
  return out;
}

UtilSummary util_classify(const std::vector<UtilWindow>& windows,
                          double threshold, u32 window_len) {
  UtilSummary s;
  s.threshold = threshold;
  s.window_len = window_len;
  s.windows = windows;
  std::vector<std::vector<u32>> per_sig(kUtilSignals);
  for (const auto& w : windows) {
    u8 high = 0;
    for (u32 i = 0; i < kUtilSignals; i++) {
      if (double(w.counts[i]) > threshold * window_len) high++;
      per_sig[i].push_back(w.counts[i]);
    }
    s.high_count.push_back(high);
    s.bins[high]++;
  }
  s.sorted_running_avg.resize(kUtilSignals);
  for (u32 i = 0; i < kUtilSignals; i++) {
    auto& v = per_sig[i];
    std::sort(v.begin(), v.end(), std::greater<u32>());
    double acc = 0;
    for (std::size_t k = 0; k < v.size(); k++) {
      acc += v[k];
      s.sorted_running_avg[i].push_back(acc / double(k + 1) /
                                        double(window_len));
    }
  }
  return s;
}

std::string util_csv(const UtilSummary& s) {
  std::ostringstream os;
  os << "window,simt,tc,mem,bin\n";
  for (std::size_t i = 0; i < s.windows.size(); i++) {
    const auto& w = s.windows[i];
    os << w.index << "," << w.counts[0] << "," << w.counts[1] << ","
       << w.counts[2] << "," << unsigned(s.high_count[i]) << "\n";
  }
  return os.str();
}

std::string util_json(const UtilSummary& s) {
  nlohmann::json j;
  j["threshold"] = s.threshold;
  j["window_len"] = s.window_len;
  j["windows_total"] = s.windows.size();
  for (u32 b = 0; b <= kUtilSignals; b++)
    j["bins"][std::to_string(b) + "_high"] = s.bins[b];
  j["windows"] = nlohmann::json::array();
  for (std::size_t i = 0; i < s.windows.size(); i++) {
    const auto& w = s.windows[i];
    j["windows"].push_back({{"window", w.index},
                            {"counts", {w.counts[0], w.counts[1],
                                        w.counts[2]}},
                            {"bin", s.high_count[i]}});
  }
  j["sorted_running_avg"] = s.sorted_running_avg;
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Prefetcher A/B
// ---------------------------------------------------------------------------

PrefetchReport prefetch_report(const std::vector<std::vector<u8>>& pkts) {
  PrefetchReport r;
  r.no_data = pkts.empty();
  r.stats = EntangledPrefetchBlock::decode_packets(pkts);
  const auto& s = r.stats;
  if (s.demand_accesses)
    r.miss_rate = double(s.demand_misses) / double(s.demand_accesses);
  if (s.prefetches_issued)
    r.accuracy = double(s.useful_prefetches) / double(s.prefetches_issued);
  if (s.demand_misses + s.useful_prefetches)
    r.coverage = double(s.useful_prefetches) /
                 double(s.demand_misses + s.useful_prefetches);
  return r;
}

PrefetchAb prefetch_ab(const PrefetchReport& on, const PrefetchReport& off) {
  PrefetchAb ab;
  ab.on = on;
  ab.off = off;
  ab.miss_rate_delta = on.miss_rate - off.miss_rate;
  return ab;
}

std::string prefetch_csv(const PrefetchReport& r) {
  std::ostringstream os;
  os << "coverage,accuracy,missrate\n";
  os << r.coverage << "," << r.accuracy << "," << r.miss_rate << "\n";
  return os.str();
}

std::string prefetch_ab_csv(const PrefetchAb& ab) {
  std::ostringstream os;
  os << "mode,coverage,accuracy,missrate\n";
  os << "on," << ab.on.coverage << "," << ab.on.accuracy << ","
     << ab.on.miss_rate << "\n";
  os << "off," << ab.off.coverage << "," << ab.off.accuracy << ","
     << ab.off.miss_rate << "\n";
  os << "delta,,," << ab.miss_rate_delta << "\n";
  return os.str();
}

static nlohmann::json prefetch_to_json(const PrefetchReport& r) {
  nlohmann::json j;
  j["no_data"] = r.no_data;
  j["demand_accesses"] = r.stats.demand_accesses;
  j["demand_misses"] = r.stats.demand_misses;
  j["prefetches_issued"] = r.stats.prefetches_issued;
  j["useful_prefetches"] = r.stats.useful_prefetches;
  j["coverage"] = r.coverage;
  j["accuracy"] = r.accuracy;
  j["missrate"] = r.miss_rate;
  return j;
}

std::string prefetch_json(const PrefetchReport& r) {
  return prefetch_to_json(r).dump(2);
}

std::string prefetch_ab_json(const PrefetchAb& ab) {
  nlohmann::json j;
  j["on"] = prefetch_to_json(ab.on);
  j["off"] = prefetch_to_json(ab.off);
  j["missrate_delta"] = ab.miss_rate_delta;
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Dual-run error harness
// ---------------------------------------------------------------------------

namespace {

std::vector<std::vector<u8>> payload_bytes(std::vector<Packet> pkts) {
  std::vector<std::vector<u8>> out;
  out.reserve(pkts.size());
  for (auto& p : pkts) out.push_back(std::move(p.bytes));
  return out;
}

std::set<u32> top_pcs(const PicsTable& t, double threshold) {
  std::set<u32> out;
  u64 total = t.total_cycles();
  if (total == 0) return out;
  for (const auto& [pc, cyc] : t.cycles_by_pc())
    if (double(cyc) > threshold * double(total)) out.insert(pc);
  return out;
}

}  // namespace

DualRunReport dual_run(const ProgramImage& image, CycleSource& src,
                       u64 period, MachineConfig base) {
  DualRunReport rep;

  auto one = [&](bool idealized, RunReport& run_out, PicsTable& table_out) {
    MachineConfig cfg = base;
    cfg.idealized = idealized;
    Machine m(cfg);
    m.load_image(image);
    m.host_control(HostCommand::kResume);
    src.reset();
    run_out = m.run_trace(src);
    table_out = pics_postprocess(payload_bytes(m.take_packets()), period);
  };

  one(true, rep.idealized, rep.table_idealized);
  one(false, rep.faithful, rep.table_faithful);

  auto ideal = rep.table_idealized.cycles_by_pc();
  auto faith = rep.table_faithful.cycles_by_pc();
  u64 ideal_total = rep.table_idealized.total_cycles();
  u64 dropped_delay = 0;
  double err_sum = 0;
  for (const auto& [pc, icyc] : ideal) {
    auto it = faith.find(pc);
    u64 fcyc = it == faith.end() ? 0 : it->second;
    double rel = std::abs(double(fcyc) - double(icyc)) / double(icyc);
    rep.pc_errors.push_back({pc, rel});
    err_sum += rel;
    rep.max_rel_error = std::max(rep.max_rel_error, rel);
    if (fcyc == 0) {
      rep.dropped_pcs.push_back(pc);
      dropped_delay += icyc;
    }
  }
  if (!ideal.empty()) rep.avg_rel_error = err_sum / double(ideal.size());
  if (ideal_total)
    rep.dropped_pc_delay_fraction =
        double(dropped_delay) / double(ideal_total);
  rep.top_sets_equal = top_pcs(rep.table_idealized, rep.top_threshold) ==
                       top_pcs(rep.table_faithful, rep.top_threshold);
  return rep;
}

std::string dual_run_csv(const DualRunReport& r) {
  std::ostringstream os;
  os << "pc,rel_error\n";
  for (const auto& [pc, err] : r.pc_errors)
    os << "0x" << to_hex(pc) << "," << err << "\n";
  os << "average," << r.avg_rel_error << "\n";
  return os.str();
}

std::string dual_run_json(const DualRunReport& r) {
  nlohmann::json j;
  j["avg_rel_error"] = r.avg_rel_error;
  j["max_rel_error"] = r.max_rel_error;
  j["dropped_pc_delay_fraction"] = r.dropped_pc_delay_fraction;
  j["top_sets_equal"] = r.top_sets_equal;
  j["top_threshold"] = r.top_threshold;
  j["idealized_drops"] = r.idealized.counters.dropped_arrivals;
  j["faithful_drops"] = r.faithful.counters.dropped_arrivals;
  nlohmann::json errs = nlohmann::json::array();
  for (const auto& [pc, err] : r.pc_errors)
    errs.push_back({{"pc", "0x" + to_hex(pc)}, {"rel_error", err}});
  j["pc_errors"] = errs;
  nlohmann::json dropped = nlohmann::json::array();
  for (u32 pc : r.dropped_pcs) dropped.push_back("0x" + to_hex(pc));
  j["dropped_pcs"] = dropped;
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Run report serialization
// ---------------------------------------------------------------------------

std::string run_report_json(const RunReport& r, const BandwidthReport* bw) {
  nlohmann::json j;
  j["status"] = status_name(r.final_status);
  const Counters& c = r.counters;
  j["counters"] = {{"delivered", c.delivered},
                   {"dispatches", c.dispatches},
                   {"loop_consumed", c.loop_consumed},
                   {"dropped_arrivals", c.dropped_arrivals},
                   {"idle_records", c.idle_records},
                   {"gated_records", c.gated_records},
                   {"handler_dispatches", c.handler_dispatches},
                   {"timer_fires", c.timer_fires},
                   {"instructions", c.instructions},
                   {"active_cycles", c.active_cycles},
                   {"emitted_packets", c.emitted_packets},
                   {"emitted_bytes", c.emitted_bytes},
                   {"windows_flushed", c.windows_flushed}};
  if (r.fault.kind != FaultKind::kNone) {
    j["fault"] = {{"kind", fault_kind_name(r.fault.kind)},
                  {"pc", r.fault.pc},
                  {"detail", r.fault.detail}};
  }
  if (r.saw_records) {
    j["first_cycle"] = r.first_cycle;
    j["last_cycle"] = r.last_cycle;
  }
  j["loop_active_at_end"] = r.loop_active_at_end;
  if (bw) {
    j["bandwidth"] = {{"payload_bytes", bw->payload_bytes},
                      {"packets", bw->packets},
                      {"covered_cycles", bw->covered_cycles},
                      {"hit_clock_hz", bw->hit_clock_hz},
                      {"ipu_count", bw->ipu_count},
                      {"per_ipu_bytes_per_sec", bw->per_ipu_bytes_per_sec},
                      {"aggregate_bytes_per_sec", bw->aggregate_bytes_per_sec}};
  }
  return j.dump(2);
}

}  // namespace ipu
