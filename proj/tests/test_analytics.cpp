// Copyright (c) 2026 ipusim contributors
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "ipu/analytics.hpp"
#include "ipu/hostapi.hpp"
#include "ipu/isa.hpp"
#include "ipu/machine.hpp"
#include "ipu/softlogic.hpp"
#include "ipu/trace.hpp"
#include "json.hpp"

using namespace ipu;
using namespace ipu::test;

namespace {

AbiSpec pics_abi() { return load_abi_file(repo_path("abi/pics17.abi")); }
AbiSpec gpu_abi() { return load_abi_file(repo_path("abi/gpu3.abi")); }

std::vector<std::vector<u8>> payloads_of(std::vector<Packet> pkts) {
  std::vector<std::vector<u8>> out;
  out.reserve(pkts.size());
  for (auto& p : pkts) out.push_back(std::move(p.bytes));
  return out;
}

// Runs the sampling program on an idealized core and post-processes the
// emitted payloads, the reference recipe the recount oracle must match.
PicsTable pics_via_machine(const ProgramImage& img, CycleSource& src,
                           u64 period) {
  MachineConfig cfg;
  cfg.idealized = true;
  Machine m(cfg);
  m.load_image(img);
  m.host_control(HostCommand::kResume);
  src.reset();
  m.run_trace(src);
  return pics_postprocess(payloads_of(m.take_packets()), period);
}

bool tables_equal(const PicsTable& a, const PicsTable& b) {
  if (a.rows.size() != b.rows.size()) return false;
  for (std::size_t i = 0; i < a.rows.size(); i++) {
    const PicsRow& x = a.rows[i];
    const PicsRow& y = b.rows[i];
    if (x.pc != y.pc || x.sig != y.sig || x.cycles != y.cycles ||
        x.payloads != y.payloads)
      return false;
  }
  return true;
}

std::vector<u8> payload(u32 pc, u16 sig) {
  return {u8(pc), u8(pc >> 8), u8(pc >> 16), u8(pc >> 24), u8(sig),
          u8(sig >> 8)};
}

}  // namespace

TEST_CASE("event attribution picks the flush PC only for flush events") {
  for (u32 bit = 0; bit < kPicsEventCount; bit++) {
    u8 want = (bit == 5 || bit == 8) ? 15 : 12;  // flush-pc vs commit-pc
    CHECK(pics_attribution_ioreg(bit) == want);
  }
}

TEST_CASE("the generated sampling program is small, valid, and period-bound") {
  AbiSpec abi = pics_abi();
  ProgramImage img = pics_program(abi);
  ImageReport rep = validate_image(img, abi);
  CAPTURE(rep.findings.empty() ? "" : rep.findings[0].c_str());
  CHECK(rep.valid());
  CHECK(img.words.size() > kFinishSlot);  // has a finish section
  CHECK(img.main_offset > 0);             // has an init section

  u64 nonzero = 0;
  for (u32 w : img.words)
    if (w != 0) nonzero++;
  CHECK(nonzero <= 80);  // the sampling program must stay tiny
  CHECK(nonzero >= 40);

  // the flush period is baked into the program text
  CHECK(pics_program_source(1000) != pics_program_source(2000));
  CHECK(pics_program(abi, 1000).words != pics_program(abi, 2000).words);
}

TEST_CASE("shipped sampling program matches the generator") {
  AbiSpec abi = pics_abi();
  ProgramImage fromfile =
      assemble(read_text_file(repo_path("prog/pics.s")), abi);
  ProgramImage gen = pics_program(abi, kPicsDefaultPeriod);
  CHECK(fromfile.words == gen.words);
  CHECK(fromfile.main_offset == gen.main_offset);
}

TEST_CASE("shipped utilization program matches the generator") {
  AbiSpec abi = gpu_abi();
  ProgramImage fromfile =
      assemble(read_text_file(repo_path("prog/util.s")), abi);
  ProgramImage gen = util_program(abi, kUtilWindowLen);
  CHECK(fromfile.words == gen.words);
  CHECK(fromfile.main_offset == gen.main_offset);
}

TEST_CASE("host recount equals the idealized run exactly, seeded") {
  AbiSpec abi = pics_abi();
  const u64 period = 50000;
  ProgramImage img = pics_program(abi, period);
  for (u64 seed = 1; seed <= 6; seed++) {
    CAPTURE(seed);
    SynthParams p;
    p.seed = seed;
    p.length = 150000;
    SynthSource src(Scenario::PicsEvents, p);
    PicsTable machine_table = pics_via_machine(img, src, period);
    src.reset();
    PicsTable recount_table = pics_recount(src, period);
    CHECK(tables_equal(machine_table, recount_table));
    CHECK(machine_table.total_cycles() == recount_table.total_cycles());
    CHECK(machine_table.rows.size() > 0);
  }
}

TEST_CASE("a single dominant PC wins virtually every window") {
  AbiSpec abi = pics_abi();
  const u64 period = 50000;
  ProgramImage img = pics_program(abi, period);
  SynthParams p;
  p.seed = 77;
  p.length = 400000;
  p.single_dominant = true;
  SynthSource src(Scenario::PicsEvents, p);
  PicsTable t = pics_via_machine(img, src, period);
  const GroundTruth& truth = src.truth();
  REQUIRE_FALSE(t.rows.empty());
  u64 hot = truth.series.at("hot_pcs").at(0);
  auto by_pc = t.cycles_by_pc();
  REQUIRE(by_pc.count(u32(hot)) == 1);
  CHECK(double(by_pc.at(u32(hot))) > 0.99 * double(t.total_cycles()));
}

TEST_CASE("payload post-processing aggregates and sorts") {
  std::vector<std::vector<u8>> pl = {
      payload(0x200, 0x1), payload(0x100, 0x3), payload(0x100, 0x3)};
  PicsTable t = pics_postprocess(pl, 1000);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0].pc == 0x100);
  CHECK(t.rows[0].sig == 0x3);
  CHECK(t.rows[0].cycles == 2000);  // two windows won, period 1000
  CHECK(t.rows[0].payloads == 2);
  CHECK(t.rows[1].pc == 0x200);
  CHECK(t.rows[1].cycles == 1000);
  CHECK(t.total_cycles() == 3000);
  CHECK(t.cycles_by_pc().at(0x100) == 2000);

  // same pc with different signatures stays in separate rows
  PicsTable t2 = pics_postprocess({payload(0x300, 1), payload(0x300, 2)}, 10);
  CHECK(t2.rows.size() == 2);
  CHECK(t2.cycles_by_pc().at(0x300) == 20);

  CHECK_THROWS_AS(pics_postprocess({{1, 2, 3}}, 10), Error);
  CHECK_THROWS_AS(pics_postprocess({payload(0x1, 0x800)}, 10), Error);
}

TEST_CASE("signature names, CSV, and JSON carry the ABI vocabulary") {
  AbiSpec abi = pics_abi();
  std::string names = pics_signature_names((1u << 2) | (1u << 3), abi);
  CHECK(names == "dtlb-miss|dcache-miss");
  CHECK(pics_signature_names(0, abi) == "");

  PicsTable t = pics_postprocess({payload(0x2000, 1u << 4)}, 400000);
  std::string csv = pics_csv(t);
  CHECK(csv.find("pc") != std::string::npos);
  CHECK(csv.find("0x2000") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);  // header + 1 row

  nlohmann::json j = nlohmann::json::parse(pics_json(t, &abi));
  REQUIRE(j.contains("rows"));
  REQUIRE(j["rows"].size() == 1);
  CHECK(j["rows"][0]["events"] == "l2-miss");
  CHECK(j["rows"][0]["cycles"] == 400000);
  CHECK(j["period"] == 400000);
}

TEST_CASE("utilization windows match a brute-force recount of the trace") {
  AbiSpec abi = gpu_abi();
  SynthParams p;
  p.seed = 13;
  p.length = 51200;  // exactly 200 windows of 256
  SynthSource synth(Scenario::GpuActivityPhases, p);
  std::vector<CycleRecord> records;
  CycleRecord r;
  while (synth.next(r)) records.push_back(r);
  REQUIRE(records.size() == p.length);
  GroundTruth truth = synth.truth();

  // brute force: per 256-record window, counts are plain value sums
  std::vector<UtilWindow> expect;
  for (std::size_t w = 0; w + kUtilWindowLen <= records.size();
       w += kUtilWindowLen) {
    UtilWindow win;
    win.index = expect.size();
    for (std::size_t i = 0; i < kUtilWindowLen; i++)
      for (const auto& up : records[w + i].updates)
        if (up.ioreg < kUtilSignals) win.counts[up.ioreg] += u32(up.value);
    expect.push_back(win);
  }
  REQUIRE(expect.size() == 200);

  // faithful machine run: the classify loop owns the record stream
  Machine m;  // default config, not idealized
  m.load_image(util_program(abi));
  m.host_control(HostCommand::kResume);
  VectorSource src(records);
  RunReport run = m.run_trace(src, RunOptions{false});
  CHECK(run.counters.dropped_arrivals == 0);
  CHECK(run.counters.dispatches == 200);

  auto windows = util_decode(payloads_of(m.take_packets()));
  REQUIRE(windows.size() == expect.size());
  for (std::size_t i = 0; i < windows.size(); i++) {
    CAPTURE(i);
    CHECK(windows[i].counts[0] == expect[i].counts[0]);
    CHECK(windows[i].counts[1] == expect[i].counts[1]);
    CHECK(windows[i].counts[2] == expect[i].counts[2]);
  }

  // classification agrees with the generator's own notion of "high"
  UtilSummary s = util_classify(windows);
  CHECK(s.bins[0] == u64(truth.scalars.at("bin0")));
  CHECK(s.bins[1] == u64(truth.scalars.at("bin1")));
  CHECK(s.bins[2] == u64(truth.scalars.at("bin2")));
  CHECK(s.bins[3] == u64(truth.scalars.at("bin3")));
  CHECK(s.bins[0] + s.bins[1] + s.bins[2] + s.bins[3] == windows.size());

  // the sorted running average starts at the per-signal max and never rises
  for (u32 sig = 0; sig < kUtilSignals; sig++) {
    const auto& avg = s.sorted_running_avg[sig];
    REQUIRE(avg.size() == windows.size());
    u32 maxc = 0;
    for (const auto& w : windows) maxc = std::max(maxc, w.counts[sig]);
    CHECK(avg[0] == doctest::Approx(double(maxc)));
    for (std::size_t i = 1; i < avg.size(); i++) CHECK(avg[i] <= avg[i - 1]);
  }

  std::string csv = util_csv(s);
  CHECK(std::count(csv.begin(), csv.end(), '\n') >= 201);
  nlohmann::json j = nlohmann::json::parse(util_json(s));
  CHECK(j["windows"].size() == 200);
  CHECK(j["bins"].size() == 4);
}

TEST_CASE("window packet decode honors the carry bits and rejects junk") {
  // lane 0 carried past 255: header bit 0 adds 256
  std::vector<std::vector<u8>> pkts = {{0x51, 0x00, 0x40, 0x07}};
  auto w = util_decode(pkts);
  REQUIRE(w.size() == 1);
  CHECK(w[0].counts[0] == 256);
  CHECK(w[0].counts[1] == 0x40);
  CHECK(w[0].counts[2] == 0x07);
  CHECK_THROWS_AS(util_decode({{0x51, 0x00, 0x40}}), Error);
  CHECK_THROWS_AS(util_decode({{0x31, 0, 0, 0}}), Error);
}

TEST_CASE("prefetch A/B reporting summarizes stats packets") {
  auto run = [](bool enabled) {
    PrefetchParams p;
    p.cache_bytes = 1024;
    p.ways = 2;
    p.enabled = enabled;
    EntangledPrefetchBlock blk(p);
    struct Sink final : PacketSink {
      std::vector<std::vector<u8>> pkts;
      void emit(const std::vector<u8>& b) override { pkts.push_back(b); }
    } sink;
    u64 vals[32] = {};
    u64 cycle = 0;
    for (int round = 0; round < 120; round++) {
      for (u64 i = 0; i < 30; i++) {
        for (int half = 0; half < 2; half++) {
          vals[11] = 0x10000000 + i * 128 + u64(half) * 64;
          WireView wv;
          wv.values = vals;
          wv.fresh_mask = 1u << 11;
          wv.cycle = ++cycle;
          blk.clock(wv, sink);
        }
      }
    }
    blk.trace_end(sink);
    return prefetch_report(sink.pkts);
  };
  PrefetchReport on = run(true);
  PrefetchReport off = run(false);
  CHECK_FALSE(on.no_data);
  CHECK(on.stats.demand_accesses == off.stats.demand_accesses);
  CHECK(on.stats.useful_prefetches > 0);
  CHECK(on.miss_rate ==
        doctest::Approx(double(on.stats.demand_misses) /
                        double(on.stats.demand_accesses)));
  CHECK(on.accuracy ==
        doctest::Approx(double(on.stats.useful_prefetches) /
                        double(on.stats.prefetches_issued)));
  CHECK(on.coverage ==
        doctest::Approx(double(on.stats.useful_prefetches) /
                        double(on.stats.demand_misses +
                               on.stats.useful_prefetches)));

  PrefetchAb ab = prefetch_ab(on, off);
  CHECK(ab.miss_rate_delta == doctest::Approx(on.miss_rate - off.miss_rate));
  CHECK(ab.miss_rate_delta <= 0.0);

  PrefetchReport none = prefetch_report({});
  CHECK(none.no_data);
  CHECK(none.miss_rate == 0.0);

  nlohmann::json j = nlohmann::json::parse(prefetch_ab_json(ab));
  CHECK(j.contains("on"));
  CHECK(j.contains("off"));
  CHECK(j.contains("missrate_delta"));
  std::string csv = prefetch_ab_csv(ab);
  CHECK(csv.find("miss_rate") != std::string::npos);
}

TEST_CASE("dual run reports zero error when the faithful core never drops") {
  AbiSpec abi = pics_abi();
  const u64 period = 5000;
  ProgramImage img = pics_program(abi, period);
  // eventful records 2500 cycles apart: activations (~tens of records) and
  // the table-scan handler (~couple thousand) always drain inside the gap
  std::vector<CycleRecord> recs;
  const u32 pcs[5] = {0x1000, 0x2000, 0x3000, 0x4000, 0x5000};
  for (u64 i = 1; i <= 40000; i++) {
    if (i % 2500 == 1250) {
      recs.push_back(rec(i, {{0, 1}, {12, pcs[(i / 2500) % 5]}}));
    } else {
      recs.push_back(rec(i));
    }
  }
  VectorSource src(recs);
  DualRunReport rep = dual_run(img, src, period);
  CHECK(rep.faithful.counters.dropped_arrivals == 0);
  CHECK(rep.max_rel_error == 0.0);
  CHECK(rep.avg_rel_error == 0.0);
  CHECK(rep.dropped_pcs.empty());
  CHECK(rep.dropped_pc_delay_fraction == 0.0);
  CHECK(rep.top_sets_equal);
  CHECK(tables_equal(rep.table_idealized, rep.table_faithful));
  CHECK(rep.table_idealized.total_cycles() > 0);
}

TEST_CASE("dual run under pressure stays sound and keeps the top set") {
  AbiSpec abi = pics_abi();
  const u64 period = 50000;
  ProgramImage img = pics_program(abi, period);
  SynthParams p;
  p.seed = 11;
  p.length = 400000;
  SynthSource src(Scenario::PicsEvents, p);
  DualRunReport rep = dual_run(img, src, period);
  CHECK(rep.faithful.counters.dropped_arrivals > 0);  // dense trace
  CHECK(rep.idealized.counters.dropped_arrivals == 0);
  CHECK(rep.dropped_pc_delay_fraction >= 0.0);
  CHECK(rep.dropped_pc_delay_fraction <= 1.0);
  CHECK(rep.avg_rel_error <= rep.max_rel_error);
  CHECK(rep.pc_errors.size() == rep.table_idealized.cycles_by_pc().size());
  CHECK(rep.top_sets_equal);

  nlohmann::json j = nlohmann::json::parse(dual_run_json(rep));
  CHECK(j.contains("avg_rel_error"));
  CHECK(j.contains("dropped_pc_delay_fraction"));
  std::string csv = dual_run_csv(rep);
  CHECK(csv.find("pc") != std::string::npos);
}

TEST_CASE("run reports serialize with optional bandwidth data") {
  Machine m;
  m.load_image(assemble("_main:\nret\n", pics_abi()));
  m.host_control(HostCommand::kResume);
  std::vector<CycleRecord> recs = {rec(1, {{0, 1}}), rec(2)};
  VectorSource src(recs);
  RunReport r = m.run_trace(src, RunOptions{false});
  nlohmann::json j = nlohmann::json::parse(run_report_json(r, nullptr));
  CHECK(j["status"] == "ACTIVE-PAUSED");
  CHECK(j["counters"]["delivered"] == 2);
  CHECK_FALSE(j.contains("bandwidth"));

  BandwidthReport bw = bandwidth_report(6, 1, 400000, 1e9);
  nlohmann::json j2 = nlohmann::json::parse(run_report_json(r, &bw));
  REQUIRE(j2.contains("bandwidth"));
  CHECK(j2["bandwidth"]["per_ipu_bytes_per_sec"] == 15000.0);
}
