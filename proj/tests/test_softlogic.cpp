// Copyright (c) 2026 ipusim contributors
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <deque>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "ref_prefetcher.hpp"
#include "ipu/machine.hpp"
#include "ipu/softlogic.hpp"
#include "ipu/trace.hpp"

using namespace ipu;
using namespace ipu::test;

namespace {

struct CollectSink final : PacketSink {
  std::vector<std::vector<u8>> pkts;
  void emit(const std::vector<u8>& bytes) override { pkts.push_back(bytes); }
};


}  // namespace

TEST_CASE("block counters match the reference model exactly") {
  std::vector<PrefetchParams> variants;
  variants.push_back({});  // defaults
  {
    PrefetchParams p;
    p.cache_bytes = 8 * 1024;
    p.ways = 4;
    p.table_entries = 64;
    variants.push_back(p);
  }
  {
    PrefetchParams p;
    p.cache_bytes = 2 * 1024;
    p.ways = 2;
    p.table_entries = 32;
    p.dests = 3;
    p.history = 2;
    variants.push_back(p);
  }
  {
    PrefetchParams p;
    p.cache_bytes = 4 * 1024;
    p.ways = 4;
    p.line_bytes = 128;
    p.table_entries = 128;
    p.dests = 1;
    p.history = 8;
    p.enabled = false;
    variants.push_back(p);
  }

  for (std::size_t vi = 0; vi < variants.size(); vi++) {
    for (u64 seed = 1; seed <= 20; seed++) {
      CAPTURE(vi);
      CAPTURE(seed);
      EntangledPrefetchBlock blk(variants[vi]);
      RefPrefetcher ref(variants[vi]);
      CollectSink sink;
      auto pcs = mixed_pc_stream(seed * 977 + vi, 20000);
      bool diverged = false;
      for (std::size_t i = 0; i < pcs.size(); i++) {
        drive(blk, sink, pcs[i], i + 1);
        ref.observe(pcs[i]);
        const PrefetchStats& s = blk.stats();
        if (s.demand_accesses != ref.accesses ||
            s.demand_misses != ref.misses ||
            s.prefetches_issued != ref.issued ||
            s.useful_prefetches != ref.useful) {
          diverged = true;
          CAPTURE(i);
          CHECK(s.demand_accesses == ref.accesses);
          CHECK(s.demand_misses == ref.misses);
          CHECK(s.prefetches_issued == ref.issued);
          CHECK(s.useful_prefetches == ref.useful);
          break;
        }
      }
      CHECK_FALSE(diverged);
      // the residual stats packet reconstructs the same totals
      blk.trace_end(sink);
      PrefetchStats dec = EntangledPrefetchBlock::decode_packets(sink.pkts);
      CHECK(dec.demand_accesses == ref.accesses);
      CHECK(dec.demand_misses == ref.misses);
      CHECK(dec.prefetches_issued == ref.issued);
      CHECK(dec.useful_prefetches == ref.useful);
    }
  }
}

TEST_CASE("a capacity-resident loop misses only on the first pass") {
  PrefetchParams p;  // 32 KB, 8 ways, 64 B lines: 512-line capacity
  EntangledPrefetchBlock blk(p);
  CollectSink sink;
  const u64 lines = 256;
  u64 cycle = 0;
  for (int pass = 0; pass < 10; pass++) {
    for (u64 l = 0; l < lines; l++)
      drive(blk, sink, (0x40000 + l) * p.line_bytes, ++cycle);
  }
  CHECK(blk.stats().demand_accesses == lines * 10);
  CHECK(blk.stats().demand_misses == lines);  // cold pass only
}

TEST_CASE("entangling pays off on recurring pairs under capacity pressure") {
  auto run = [](bool enabled) {
    PrefetchParams p;
    p.cache_bytes = 1024;  // 8 sets x 2 ways: 16-line capacity
    p.ways = 2;
    p.enabled = enabled;
    EntangledPrefetchBlock blk(p);
    CollectSink sink;
    u64 cycle = 0;
    // 30 pairs of adjacent lines revisited in bursts; 60 lines thrash the
    // 16-line cache, so the A -> B edge keeps getting exercised
    for (int round = 0; round < 200; round++) {
      for (u64 i = 0; i < 30; i++) {
        u64 a = 0x10000000 + i * 128;
        for (int k = 0; k < 4; k++) drive(blk, sink, a + u64(k) * 4, ++cycle);
        for (int k = 0; k < 4; k++)
          drive(blk, sink, a + 64 + u64(k) * 4, ++cycle);
      }
    }
    return blk.stats();
  };
  PrefetchStats on = run(true);
  PrefetchStats off = run(false);
  CHECK(off.prefetches_issued == 0);
  CHECK(off.useful_prefetches == 0);
  CHECK(on.prefetches_issued > 0);
  CHECK(on.useful_prefetches > 0);
  CHECK(on.demand_misses < off.demand_misses);
  CHECK(on.demand_accesses == off.demand_accesses);
}

TEST_CASE("a prefetched line counts as useful exactly once") {
  PrefetchParams p;
  p.cache_bytes = 512;  // 8 sets x 1 way: adjacent-set thrashing is easy
  p.ways = 1;
  p.history = 1;
  p.dests = 1;
  EntangledPrefetchBlock blk(p);
  CollectSink sink;
  u64 cycle = 0;
  auto pc = [&](u64 line) { return line * p.line_bytes; };
  drive(blk, sink, pc(0), ++cycle);  // miss, history [0]
  drive(blk, sink, pc(8), ++cycle);  // miss, learns 0 -> 8, evicts 0 (set 0)
  drive(blk, sink, pc(0), ++cycle);  // miss again: issues prefetch of 8
  CHECK(blk.stats().prefetches_issued == 1);
  CHECK(blk.stats().useful_prefetches == 0);
  drive(blk, sink, pc(8), ++cycle);  // first demand hit on the prefetch
  CHECK(blk.stats().useful_prefetches == 1);
  drive(blk, sink, pc(8), ++cycle);  // second hit: no double counting
  CHECK(blk.stats().useful_prefetches == 1);
  CHECK(blk.stats().demand_accesses == 5);
}

TEST_CASE("stats packets: cadence, residual, and decode") {
  // period 1: every delivered cycle emits one 12-byte delta packet
  {
    PrefetchParams p;
    p.stats_period = 1;
    EntangledPrefetchBlock blk(p);
    CollectSink sink;
    u64 vals[32] = {};
    for (u64 i = 1; i <= 5; i++) {
      WireView w;
      w.values = vals;
      w.cycle = i;
      if (i <= 3) {
        vals[11] = 0x1000 * i;
        w.fresh_mask = 1u << 11;
      } else {
        w.fresh_mask = 0;  // quiet cycles still clock the block
      }
      blk.clock(w, sink);
    }
    REQUIRE(sink.pkts.size() == 5);
    for (const auto& pkt : sink.pkts) CHECK(pkt.size() == 12);
    blk.trace_end(sink);  // nothing new accumulated since the last emit
    CHECK(sink.pkts.size() == 5);
    PrefetchStats dec = EntangledPrefetchBlock::decode_packets(sink.pkts);
    CHECK(dec.demand_accesses == 3);
    CHECK(dec.demand_misses == 3);
  }
  // long period: nothing until the trace-end residual
  {
    PrefetchParams p;
    EntangledPrefetchBlock blk(p);
    CollectSink sink;
    for (u64 i = 1; i <= 10; i++) drive(blk, sink, 0x4000 + i * 64, i);
    CHECK(sink.pkts.empty());
    blk.trace_end(sink);
    REQUIRE(sink.pkts.size() == 1);
    PrefetchStats dec = EntangledPrefetchBlock::decode_packets(sink.pkts);
    CHECK(dec.demand_accesses == 10);
  }
  // an idle block emits nothing at all
  {
    PrefetchParams p;
    EntangledPrefetchBlock blk(p);
    CollectSink sink;
    u64 vals[32] = {};
    WireView w;
    w.values = vals;
    for (u64 i = 1; i <= 100; i++) {
      w.cycle = i;
      blk.clock(w, sink);
    }
    blk.trace_end(sink);
    CHECK(sink.pkts.empty());
  }
  // decode validates packet length and sums saturated fields
  CHECK_THROWS_AS(
      EntangledPrefetchBlock::decode_packets({std::vector<u8>(11, 0)}),
      Error);
  std::vector<u8> sat(12, 0xFF);
  PrefetchStats dec = EntangledPrefetchBlock::decode_packets({sat, sat});
  CHECK(dec.demand_accesses == 2 * 0xFFFFFFull);
  CHECK(dec.useful_prefetches == 2 * 0xFFFFFFull);
}

TEST_CASE("only fresh PC updates reach the prefetcher") {
  PrefetchParams p;
  EntangledPrefetchBlock blk(p);
  CollectSink sink;
  u64 vals[32] = {};
  vals[11] = 0x8000;  // stale value, never marked fresh
  vals[12] = 0x9000;
  WireView w;
  w.values = vals;
  w.fresh_mask = 1u << 12;  // some other signal updated
  w.cycle = 1;
  blk.clock(w, sink);
  CHECK(blk.stats().demand_accesses == 0);
  w.fresh_mask = 1u << 11;
  w.cycle = 2;
  blk.clock(w, sink);
  CHECK(blk.stats().demand_accesses == 1);
}

TEST_CASE("the block registry parses parameters and rejects junk") {
  std::map<std::string, std::string> good = {
      {"cache_kb", "4"}, {"ways", "4"},    {"line", "64"},
      {"enable", "off"}, {"pc", "11"},     {"entries", "64"},
      {"dests", "3"},    {"history", "2"}, {"period", "1000"},
  };
  auto blk = make_block("prefetch", good);
  CHECK(std::string(blk->name()) == "prefetch");

  auto kind_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Runtime;  // sentinel: did not throw
  };
  CHECK(kind_of([] { make_block("quux", {}); }) == ErrorKind::Usage);
  CHECK(kind_of([] { make_block("prefetch", {{"zork", "1"}}); }) ==
        ErrorKind::Usage);
  CHECK(kind_of([] { make_block("prefetch", {{"enable", "maybe"}}); }) ==
        ErrorKind::Usage);
  CHECK(kind_of([] { make_block("prefetch", {{"ways", "lots"}}); }) ==
        ErrorKind::Usage);
  CHECK(kind_of([] { make_block("prefetch", {{"line", "48"}}); }) ==
        ErrorKind::Usage);
  CHECK(kind_of([] { make_block("prefetch", {{"cache_kb", "3"}}); }) ==
        ErrorKind::Usage);  // 3 KB does not divide into line*ways
  CHECK(kind_of([] { make_block("prefetch", {{"pc", "32"}}); }) ==
        ErrorKind::Usage);
  CHECK(kind_of([] { make_block("prefetch", {{"dests", "0"}}); }) ==
        ErrorKind::Usage);
}

TEST_CASE("attached block sees every record and reports through the FIFO") {
  auto owned = make_block("prefetch", {});
  auto* blk = static_cast<EntangledPrefetchBlock*>(owned.get());
  Machine m;
  m.load_image(assemble("_main:\nret\n",
                        load_abi_file(repo_path("abi/pics17.abi"))));
  m.attach_block(std::move(owned));
  // core stays PAUSED: soft logic is clocked regardless of core status
  SynthParams p;
  p.seed = 7;
  p.length = 20000;
  p.loop_lines = 8;
  SynthSource src(Scenario::PcLoop, p);
  GroundTruth truth;
  RunReport r = m.run_trace(src, RunOptions{false});
  truth = src.truth();
  CHECK(r.counters.delivered == 20000);
  CHECK(blk->stats().demand_accesses == 20000);
  // the 8-line loop fits the cache: cold misses only, exactly the truth
  CHECK(blk->stats().demand_misses ==
        u64(truth.scalars.at("expected_demand_misses")));
  CHECK(blk->stats().prefetches_issued == 0);  // nothing re-misses
  CHECK(blk->stats().useful_prefetches == 0);

  // the run loop rolled trace_end: the residual packet is in the FIFO
  auto pkts = m.take_packets();
  std::vector<std::vector<u8>> stat_pkts;
  for (const auto& pk : pkts)
    if (pk.bytes.size() == 12) stat_pkts.push_back(pk.bytes);
  REQUIRE(stat_pkts.size() == 1);
  PrefetchStats dec = EntangledPrefetchBlock::decode_packets(stat_pkts);
  CHECK(dec.demand_accesses == blk->stats().demand_accesses);
  CHECK(dec.demand_misses == blk->stats().demand_misses);
}
