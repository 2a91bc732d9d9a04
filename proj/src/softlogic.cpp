// Copyright (c) 2026 ipusim contributors
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "ipu/softlogic.hpp"

#include <algorithm>

namespace ipu {

namespace {

bool is_pow2(u32 v) { return v != 0 && (v & (v - 1)) == 0; }

constexpr u32 kDeltaMax = 0xFFFFFF;  // 3-byte saturating stat deltas

void push_delta(std::vector<u8>* out, u64 now, u64 before) {
  u64 d = now - before;
  u32 v = d > kDeltaMax ? kDeltaMax : u32(d);
  out->push_back(u8(v));
  out->push_back(u8(v >> 8));
  out->push_back(u8(v >> 16));
}

u64 pull_delta(const std::vector<u8>& pkt, std::size_t off) {
  return u64(pkt[off]) | u64(pkt[off + 1]) << 8 | u64(pkt[off + 2]) << 16;
}

}  // namespace

EntangledPrefetchBlock::EntangledPrefetchBlock(const PrefetchParams& params)
    : p_(params) {
  if (!is_pow2(p_.line_bytes) || p_.line_bytes < 4)
    throw Error(ErrorKind::Usage, "line size must be a power of two >= 4");
  if (p_.ways == 0 || p_.cache_bytes == 0 ||
      p_.cache_bytes % (p_.line_bytes * p_.ways) != 0 ||
      !is_pow2(p_.cache_bytes / (p_.line_bytes * p_.ways)))
    throw Error(ErrorKind::Usage,
                "cache size must divide into line*ways with a power-of-two "
                "set count");
  if (p_.table_entries == 0 || p_.dests == 0 || p_.history == 0 ||
      p_.stats_period == 0)
    throw Error(ErrorKind::Usage, "prefetcher parameters must be nonzero");
  if (p_.pc_ioreg >= 32)
    throw Error(ErrorKind::Usage, "pc ioreg index out of range");
  sets_ = p_.cache_bytes / (p_.line_bytes * p_.ways);
  ways_.assign(std::size_t(sets_) * p_.ways, Way{});
  table_.assign(p_.table_entries, Entry{});
}

bool EntangledPrefetchBlock::lookup_touch(u64 line, bool* was_prefetched) {
  u32 set = u32(line % sets_);
  Way* base = &ways_[std::size_t(set) * p_.ways];
  for (u32 i = 0; i < p_.ways; i++) {
    if (base[i].valid && base[i].line == line) {
      base[i].stamp = ++stamp_;
      if (base[i].prefetched) {
        *was_prefetched = true;       // useful exactly once
        base[i].prefetched = false;
      }
      return true;
    }
  }
  return false;
}

bool EntangledPrefetchBlock::resident(u64 line) const {
  u32 set = u32(line % sets_);
  const Way* base = &ways_[std::size_t(set) * p_.ways];
  for (u32 i = 0; i < p_.ways; i++)
    if (base[i].valid && base[i].line == line) return true;
  return false;
}

void EntangledPrefetchBlock::fill(u64 line, bool prefetched) {
  u32 set = u32(line % sets_);
  Way* base = &ways_[std::size_t(set) * p_.ways];
  Way* victim = &base[0];
  for (u32 i = 0; i < p_.ways; i++) {
    if (!base[i].valid) {
      victim = &base[i];
      break;
    }
    if (base[i].stamp < victim->stamp) victim = &base[i];
  }
  victim->line = line;
  victim->valid = true;
  victim->prefetched = prefetched;
  victim->stamp = ++stamp_;
}

void EntangledPrefetchBlock::observe(u64 pc, PacketSink& sink) {
  (void)sink;
  u64 line = pc / p_.line_bytes;
  stats_.demand_accesses++;
  bool was_pf = false;
  if (lookup_touch(line, &was_pf)) {
    if (was_pf) stats_.useful_prefetches++;
    return;
  }
  stats_.demand_misses++;

  // Every line in the recent-miss history learns the current miss as a
  // destination: the entangling edge older-miss -> current-miss.
  for (u64 src : history_) {
    if (src == line) continue;
    Entry& e = table_[src % p_.table_entries];
    if (!e.valid || e.source != src) {
      e.valid = true;
      e.source = src;
      e.dests.clear();
    }
    if (std::find(e.dests.begin(), e.dests.end(), line) == e.dests.end()) {
      e.dests.push_back(line);
      if (e.dests.size() > p_.dests) e.dests.erase(e.dests.begin());
    }
  }

  fill(line, false);

  if (p_.enabled) {
    const Entry& e = table_[line % p_.table_entries];
    if (e.valid && e.source == line) {
      for (u64 dest : e.dests) {
        if (resident(dest)) continue;
        fill(dest, true);
        stats_.prefetches_issued++;
      }
    }
  }

  history_.push_back(line);
  if (history_.size() > p_.history) history_.erase(history_.begin());
}

void EntangledPrefetchBlock::emit_stats(PacketSink& sink) {
  std::vector<u8> pkt;
  pkt.reserve(12);
  push_delta(&pkt, stats_.demand_accesses, last_emitted_.demand_accesses);
  push_delta(&pkt, stats_.demand_misses, last_emitted_.demand_misses);
  push_delta(&pkt, stats_.prefetches_issued, last_emitted_.prefetches_issued);
  push_delta(&pkt, stats_.useful_prefetches, last_emitted_.useful_prefetches);
  sink.emit(pkt);
  last_emitted_ = stats_;
}

void EntangledPrefetchBlock::clock(const WireView& wires, PacketSink& sink) {
  if ((wires.fresh_mask >> p_.pc_ioreg) & 1)
    observe(wires.values[p_.pc_ioreg], sink);
  cycles_seen_++;
  if (cycles_seen_ % p_.stats_period == 0) emit_stats(sink);
}

void EntangledPrefetchBlock::trace_end(PacketSink& sink) {
  if (stats_.demand_accesses != last_emitted_.demand_accesses ||
      stats_.demand_misses != last_emitted_.demand_misses ||
      stats_.prefetches_issued != last_emitted_.prefetches_issued ||
      stats_.useful_prefetches != last_emitted_.useful_prefetches) {
    emit_stats(sink);
  }
}

PrefetchStats EntangledPrefetchBlock::decode_packets(
    const std::vector<std::vector<u8>>& pkts) {
  PrefetchStats s;
  for (const auto& pkt : pkts) {
    if (pkt.size() != 12)
      throw Error(ErrorKind::Malformed, "prefetch stats packet must be 12 B");
    s.demand_accesses += pull_delta(pkt, 0);
    s.demand_misses += pull_delta(pkt, 3);
    s.prefetches_issued += pull_delta(pkt, 6);
    s.useful_prefetches += pull_delta(pkt, 9);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

namespace {

u64 parse_num(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    u64 n = std::stoull(v, &pos, 0);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Usage,
                "block parameter " + key + " wants a number, got '" + v + "'");
  }
}

bool parse_flag(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw Error(ErrorKind::Usage,
              "block parameter " + key + " wants a flag, got '" + v + "'");
}

}  // namespace

std::unique_ptr<SoftLogicBlock> make_block(
    const std::string& name, const std::map<std::string, std::string>& params) {
  if (name == "prefetch") {
    PrefetchParams p;
    for (const auto& [key, value] : params) {
      if (key == "enable") p.enabled = parse_flag(key, value);
      else if (key == "pc") p.pc_ioreg = u8(parse_num(key, value));
      else if (key == "cache_kb") p.cache_bytes = u32(parse_num(key, value)) * 1024;
      else if (key == "ways") p.ways = u32(parse_num(key, value));
      else if (key == "line") p.line_bytes = u32(parse_num(key, value));
      else if (key == "entries") p.table_entries = u32(parse_num(key, value));
      else if (key == "dests") p.dests = u32(parse_num(key, value));
      else if (key == "history") p.history = u32(parse_num(key, value));
      else if (key == "period") p.stats_period = parse_num(key, value);
      else
        throw Error(ErrorKind::Usage, "unknown prefetch parameter: " + key);
    }
    return std::make_unique<EntangledPrefetchBlock>(p);
  }
  throw Error(ErrorKind::Usage, "unknown soft-logic block: " + name);
}

}  // namespace ipu
