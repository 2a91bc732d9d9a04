// Copyright (c) 2026 ipusim contributors
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "ipu/trace.hpp"

#include "ipu/isa.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace ipu {

// ---------------------------------------------------------------------------
// AbiSpec
// ---------------------------------------------------------------------------

const SignalDecl* AbiSpec::find(const std::string& name) const {
  for (const auto& s : signals)
    if (s.name == name) return &s;
  return nullptr;
}

const SignalDecl* AbiSpec::by_ioreg(u8 idx) const {
  for (const auto& s : signals)
    if (s.ioreg == idx) return &s;
  return nullptr;
}

bool AbiSpec::has_ioreg(u8 idx) const { return by_ioreg(idx) != nullptr; }

u32 AbiSpec::total_bits() const {
  u32 n = 0;
  for (const auto& s : signals) n += s.width;
  return n;
}

std::string AbiSpec::canonical_text() const {
  std::ostringstream os;
  for (const auto& s : signals)
    os << "#abi " << s.name << " " << int(s.width) << " " << int(s.ioreg)
       << " " << int(s.rate) << "\n";
  return os.str();
}

u32 AbiSpec::hash() const { return crc32_str(canonical_text()); }

bool AbiSpec::matches(const AbiSpec& other) const {
  if (signals.size() != other.signals.size()) return false;
  for (std::size_t i = 0; i < signals.size(); i++) {
    const auto& a = signals[i];
    const auto& b = other.signals[i];
    if (a.name != b.name || a.width != b.width || a.ioreg != b.ioreg ||
        a.rate != b.rate)
      return false;
  }
  return true;
}

AbiReport validate_abi(const AbiSpec& abi) {
  AbiReport rep;
  rep.total_bits = abi.total_bits();
  std::set<u8> ioregs;
  std::set<std::string> names;
  std::vector<std::string> findings;
  if (abi.signals.empty()) findings.push_back("no signals declared");
  if (abi.signals.size() > kNumIoRegs)
    findings.push_back("more than 32 signals declared (" +
                       std::to_string(abi.signals.size()) + ")");
  for (const auto& s : abi.signals) {
    if (s.width < 1 || s.width > 64)
      findings.push_back("signal " + s.name + ": width " +
                         std::to_string(s.width) + " outside 1..64");
    if (s.ioreg >= kNumIoRegs)
      findings.push_back("signal " + s.name + ": IOReg index " +
                         std::to_string(s.ioreg) + " outside 0..31");
    if (s.rate == 0)
      findings.push_back("signal " + s.name + ": rate must be positive");
    if (!names.insert(s.name).second)
      findings.push_back("duplicate signal name " + s.name);
    if (s.ioreg < kNumIoRegs && !ioregs.insert(s.ioreg).second) {
      // name both parties deterministically, independent of order
      std::vector<std::string> sharers;
      for (const auto& t : abi.signals)
        if (t.ioreg == s.ioreg) sharers.push_back(t.name);
      std::sort(sharers.begin(), sharers.end());
      std::string msg = "IOReg " + std::to_string(s.ioreg) + " shared by";
      for (const auto& n : sharers) msg += " " + n;
      findings.push_back(msg);
    }
  }
  std::sort(findings.begin(), findings.end());
  findings.erase(std::unique(findings.begin(), findings.end()),
                 findings.end());
  rep.findings = std::move(findings);
  rep.ioregs.assign(ioregs.begin(), ioregs.end());
  return rep;
}

namespace {

std::vector<std::string> split_ws(const std::string& s, std::size_t max_parts) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(u8(s[i]))) i++;
    if (i >= s.size()) break;
    if (out.size() + 1 == max_parts) {
      out.push_back(s.substr(i));
      break;
    }
    std::size_t j = i;
    while (j < s.size() && !std::isspace(u8(s[j]))) j++;
    out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

AbiSpec parse_abi_lines(const std::vector<std::string>& lines,
                        const std::string& origin) {
  AbiSpec abi;
  int n = 0;
  for (const auto& line : lines) {
    n++;
    auto fail = [&](const std::string& m) {
      throw Error(ErrorKind::Malformed,
                  origin + ": ABI line " + std::to_string(n) + ": " + m);
    };
    auto parts = split_ws(line, 6);
    // Lines that are not #abi declarations (comments, blanks, foreign
    // content) pass through unparsed.
    if (parts.empty() || parts[0] != "#abi") continue;
    if (parts.size() < 5)
      fail("expected '#abi name width ioreg rate [semantics]'");
    SignalDecl d;
    d.name = parts[1];
    char* end = nullptr;
    long w = std::strtol(parts[2].c_str(), &end, 10);
    if (*end || w < 1 || w > 64) fail("bad width '" + parts[2] + "'");
    long io = std::strtol(parts[3].c_str(), &end, 10);
    if (*end || io < 0 || io >= long(kNumIoRegs))
      fail("bad IOReg index '" + parts[3] + "'");
    long rate = std::strtol(parts[4].c_str(), &end, 10);
    if (*end || rate < 1 || rate > 255) fail("bad rate '" + parts[4] + "'");
    d.width = u8(w);
    d.ioreg = u8(io);
    d.rate = u8(rate);
    if (parts.size() == 6) d.semantics = parts[5];
    abi.signals.push_back(d);
  }
  if (abi.signals.size() > kNumIoRegs)
    throw Error(ErrorKind::Malformed,
                origin + ": more than 32 signals declared");
  return abi;
}

AbiSpec load_abi_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::Usage, "cannot open ABI file " + path);
  std::vector<std::string> abi_lines;
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind("#abi ", 0) == 0) abi_lines.push_back(line);
  }
  if (abi_lines.empty())
    throw Error(ErrorKind::Malformed, path + ": no #abi lines found");
  return parse_abi_lines(abi_lines, path);
}

void save_abi_file(const std::string& path, const AbiSpec& abi) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::Usage, "cannot write ABI file " + path);
  for (const auto& s : abi.signals) {
    os << "#abi " << s.name << " " << int(s.width) << " " << int(s.ioreg)
       << " " << int(s.rate);
    if (!s.semantics.empty()) os << " " << s.semantics;
    os << "\n";
  }
}

// ---------------------------------------------------------------------------
// Sources
// ---------------------------------------------------------------------------

bool VectorSource::next(CycleRecord& out) {
  if (pos_ >= records_.size()) return false;
  out = records_[pos_++];
  return true;
}

bool SampledSource::next(CycleRecord& out) {
  if (!inner_.next(out)) return false;
  for (u64 i = 1; i < keep_every_; i++) {
    CycleRecord skip;
    if (!inner_.next(skip)) break;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Text format
// ---------------------------------------------------------------------------

void write_trace_text(std::ostream& os, const AbiSpec& abi, CycleSource& src) {
  for (const auto& s : abi.signals) {
    os << "#abi " << s.name << " " << int(s.width) << " " << int(s.ioreg)
       << " " << int(s.rate);
    if (!s.semantics.empty()) os << " " << s.semantics;
    os << "\n";
  }
  CycleRecord r;
  while (src.next(r)) {
    os << r.cycle << ";";
    if (r.has_addr) os << to_hex(r.addr);
    os << ";";
    for (std::size_t i = 0; i < r.updates.size(); i++) {
      if (i) os << ",";
      os << "x" << int(r.updates[i].ioreg) << "=" << to_hex(r.updates[i].value);
    }
    os << "\n";
  }
}

namespace {

class TextTraceSource final : public CycleSource {
 public:
  TextTraceSource(const std::string& path, const AbiSpec& abi) : path_(path) {
    is_.open(path);
    if (!is_) throw Error(ErrorKind::Usage, "cannot open trace " + path);
    std::vector<std::string> abi_lines;
    std::string line;
    while (is_.peek() == '#') {
      std::getline(is_, line);
      line_no_++;
      if (line.rfind("#abi ", 0) == 0) abi_lines.push_back(line);
    }
    header_lines_ = line_no_;
    // A trace without #abi header lines is trusted against the caller's
    // ABI; a present header must agree with it exactly.
    if (!abi_lines.empty()) {
      AbiSpec embedded = parse_abi_lines(abi_lines, path);
      if (!embedded.matches(abi))
        throw Error(ErrorKind::AbiMismatch,
                    path + ": embedded ABI disagrees with the supplied one");
    }
    abi_ = abi;
  }

  bool next(CycleRecord& out) override {
    std::string line;
    for (;;) {
      if (!std::getline(is_, line)) return false;
      line_no_++;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      break;
    }
    parse_record(line, out);
    return true;
  }

  void reset() override {
    is_.clear();
    is_.seekg(0);
    line_no_ = 0;
    std::string line;
    for (int i = 0; i < header_lines_; i++) {
      std::getline(is_, line);
      line_no_++;
    }
    last_cycle_ = 0;
    first_ = true;
  }

 private:
  [[noreturn]] void fail(const std::string& m) {
    throw Error(ErrorKind::Malformed,
                path_ + ":" + std::to_string(line_no_) + ": " + m);
  }

  u64 parse_hex(const std::string& t) {
    std::size_t i = t.rfind("0x", 0) == 0 ? 2 : 0;
    if (i >= t.size()) fail("empty hex value");
    u64 v = 0;
    for (; i < t.size(); i++) {
      char c = std::tolower(u8(t[i]));
      int d;
      if (std::isdigit(u8(c))) d = c - '0';
      else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
      else fail("bad hex value '" + t + "'");
      if (v >> 60 && v > (~u64(0) >> 4)) fail("hex value overflows 64 bits");
      v = v << 4 | u64(d);
    }
    return v;
  }

  void parse_record(const std::string& line, CycleRecord& out) {
    out.clear();
    auto p1 = line.find(';');
    auto p2 = p1 == std::string::npos ? p1 : line.find(';', p1 + 1);
    if (p1 == std::string::npos || p2 == std::string::npos)
      fail("expected 'cycle;addr;updates'");
    std::string cyc = line.substr(0, p1);
    std::string addr = line.substr(p1 + 1, p2 - p1 - 1);
    std::string ups = line.substr(p2 + 1);
    char* end = nullptr;
    out.cycle = std::strtoull(cyc.c_str(), &end, 10);
    if (cyc.empty() || *end) fail("bad cycle number '" + cyc + "'");
    if (!first_ && out.cycle <= last_cycle_)
      fail("cycle numbers must increase strictly");
    first_ = false;
    last_cycle_ = out.cycle;
    if (!addr.empty()) {
      out.has_addr = true;
      out.addr = parse_hex(addr);
    }
    if (!ups.empty()) {
      std::size_t i = 0;
      while (i <= ups.size()) {
        auto c = ups.find(',', i);
        std::string item =
            ups.substr(i, c == std::string::npos ? std::string::npos : c - i);
        i = c == std::string::npos ? ups.size() + 1 : c + 1;
        auto eq = item.find('=');
        if (eq == std::string::npos || item.empty() || item[0] != 'x')
          fail("bad update '" + item + "'");
        char* e2 = nullptr;
        long idx = std::strtol(item.c_str() + 1, &e2, 10);
        if (e2 != item.c_str() + eq || idx < 0 || idx >= long(kNumIoRegs))
          fail("bad signal index in '" + item + "'");
        const SignalDecl* d = abi_.by_ioreg(u8(idx));
        if (!d) fail("signal x" + std::to_string(idx) + " not declared");
        u64 v = parse_hex(item.substr(eq + 1));
        if (d->width < 64 && v >> d->width)
          fail("value exceeds " + std::to_string(d->width) + "-bit signal " +
               d->name);
        out.updates.push_back({u8(idx), v});
        if (c == std::string::npos) break;
      }
    }
  }

  std::string path_;
  std::ifstream is_;
  AbiSpec abi_;
  int line_no_ = 0;
  int header_lines_ = 0;
  u64 last_cycle_ = 0;
  bool first_ = true;
};

// ---------------------------------------------------------------------------
// Binary format
// ---------------------------------------------------------------------------

void put_le(std::ostream& os, u64 v, int bytes) {
  for (int i = 0; i < bytes; i++) os.put(char((v >> (8 * i)) & 0xFF));
}

}  // namespace

void write_trace_bin(std::ostream& os, const AbiSpec& abi, CycleSource& src) {
  os.write("IPB1", 4);
  put_le(os, 1, 2);
  put_le(os, 0, 2);
  put_le(os, abi.hash(), 4);
  CycleRecord r;
  while (src.next(r)) {
    put_le(os, r.cycle, 8);
    put_le(os, r.has_addr ? 1 : 0, 1);
    u32 bitmap = 0;
    for (const auto& u : r.updates) bitmap |= 1u << u.ioreg;
    put_le(os, bitmap, 4);
    if (r.has_addr) put_le(os, r.addr, 8);
    // ascending IOReg order
    for (u8 idx = 0; idx < kNumIoRegs; idx++) {
      if (!(bitmap & (1u << idx))) continue;
      for (const auto& u : r.updates)
        if (u.ioreg == idx) put_le(os, u.value, 8);
    }
  }
}

namespace {

class BinTraceSource final : public CycleSource {
 public:
  BinTraceSource(const std::string& path, const AbiSpec& abi) : path_(path) {
    is_.open(path, std::ios::binary);
    if (!is_) throw Error(ErrorKind::Usage, "cannot open trace " + path);
    char magic[4];
    u8 hdr[8];
    if (!is_.read(magic, 4) || !is_.read(reinterpret_cast<char*>(hdr), 8))
      fail("truncated header");
    if (std::string(magic, 4) != "IPB1") fail("bad magic");
    u16 ver = u16(hdr[0] | hdr[1] << 8);
    if (ver != 1) fail("unsupported version");
    u32 crc = u32(hdr[4]) | u32(hdr[5]) << 8 | u32(hdr[6]) << 16 |
              u32(hdr[7]) << 24;
    if (crc != abi.hash())
      throw Error(ErrorKind::AbiMismatch,
                  path + ": trace ABI hash disagrees with the supplied ABI");
  }

  bool next(CycleRecord& out) override {
    out.clear();
    u8 buf[13];
    if (!is_.read(reinterpret_cast<char*>(buf), 13)) {
      if (is_.gcount() == 0) return false;
      fail("truncated record");
    }
    out.cycle = get_le(buf, 8);
    u8 flags = buf[8];
    u32 bitmap = u32(get_le(buf + 9, 4));
    if (flags & ~1u) fail("bad record flags");
    if (flags & 1) {
      u8 a[8];
      if (!is_.read(reinterpret_cast<char*>(a), 8)) fail("truncated record");
      out.has_addr = true;
      out.addr = get_le(a, 8);
    }
    for (u8 idx = 0; idx < kNumIoRegs; idx++) {
      if (!(bitmap & (1u << idx))) continue;
      u8 v[8];
      if (!is_.read(reinterpret_cast<char*>(v), 8)) fail("truncated record");
      out.updates.push_back({idx, get_le(v, 8)});
    }
    if (!first_ && out.cycle <= last_cycle_)
      fail("cycle numbers must increase strictly");
    first_ = false;
    last_cycle_ = out.cycle;
    return true;
  }

  void reset() override {
    is_.clear();
    is_.seekg(12);
    last_cycle_ = 0;
    first_ = true;
  }

 private:
  static u64 get_le(const u8* p, int n) {
    u64 v = 0;
    for (int i = n - 1; i >= 0; i--) v = v << 8 | p[i];
    return v;
  }

  [[noreturn]] void fail(const std::string& m) {
    throw Error(ErrorKind::Malformed, path_ + ": " + m);
  }

  std::string path_;
  std::ifstream is_;
  u64 last_cycle_ = 0;
  bool first_ = true;
};

}  // namespace

std::unique_ptr<CycleSource> open_trace(const std::string& path,
                                        const AbiSpec& abi) {
  auto dot = path.rfind('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot);
  if (ext == ".ipt") return std::make_unique<TextTraceSource>(path, abi);
  if (ext == ".ipb") return std::make_unique<BinTraceSource>(path, abi);
  throw Error(ErrorKind::Usage,
              "unknown trace extension '" + ext + "' (want .ipt or .ipb)");
}

// ---------------------------------------------------------------------------
// Synthetic workloads
// ---------------------------------------------------------------------------

Scenario scenario_from_name(const std::string& name) {
  if (name == "pics-events") return Scenario::PicsEvents;
  if (name == "pc-loop") return Scenario::PcLoop;
  if (name == "pc-entangled-pairs") return Scenario::PcEntangledPairs;
  if (name == "gpu-activity-phases") return Scenario::GpuActivityPhases;
  throw Error(ErrorKind::Usage, "unknown scenario '" + name + "'");
}

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::PicsEvents: return "pics-events";
    case Scenario::PcLoop: return "pc-loop";
    case Scenario::PcEntangledPairs: return "pc-entangled-pairs";
    case Scenario::GpuActivityPhases: return "gpu-activity-phases";
  }
  return "?";
}

AbiSpec synth_abi(Scenario scenario) {
  auto sig = [](const char* n, u8 w, u8 io, const char* sem) {
    return SignalDecl{n, w, io, 1, sem};
  };
  AbiSpec abi;
  switch (scenario) {
    case Scenario::PicsEvents:
      abi.signals = {
          sig("itlb-miss", 1, 0, "instruction TLB miss strobe"),
          sig("icache-miss", 1, 1, "L1 instruction cache miss strobe"),
          sig("dtlb-miss", 1, 2, "data TLB miss strobe"),
          sig("dcache-miss", 1, 3, "L1 data cache miss strobe"),
          sig("l2-miss", 1, 4, "unified L2 miss strobe"),
          sig("branch-mispredict", 1, 5, "branch mispredict strobe"),
          sig("sq-full", 1, 6, "store queue full stall"),
          sig("rob-empty", 1, 7, "reorder buffer drained"),
          sig("flush", 1, 8, "pipeline flush strobe"),
          sig("recycle", 1, 9, "issue recycle strobe"),
          sig("store-drain", 1, 10, "post-retire store drain stall"),
          sig("fetch-pc-head", 64, 11, "fetch group head program counter"),
          sig("commit-pc", 28, 12, "committing instruction program counter"),
          sig("rob-head-pc", 28, 13, "reorder buffer head program counter"),
          sig("dispatch-pc", 28, 14, "dispatch stage program counter"),
          sig("flush-pc", 28, 15, "flushed instruction program counter"),
          sig("next-fetch-pc", 28, 16, "next fetch target program counter"),
      };
      break;
    case Scenario::PcLoop:
    case Scenario::PcEntangledPairs:
      abi.signals = {
          sig("fetch-pc-head", 64, 11, "fetch group head program counter"),
      };
      break;
    case Scenario::GpuActivityPhases:
      abi.signals = {
          sig("fb-engine-busy", 1, 0, "framebuffer engine busy"),
          sig("geom-engine-busy", 1, 1, "geometry engine busy"),
          sig("shader-core-busy", 1, 2, "shader core busy"),
      };
      break;
  }
  return abi;
}

SynthSource::SynthSource(Scenario scenario, const SynthParams& params)
    : scenario_(scenario), params_(params), abi_(synth_abi(scenario)),
      rng_(params.seed) {
  prepare();
}

void SynthSource::reset() {
  rng_ = Rng(params_.seed);
  pos_ = 0;
  truth_ = GroundTruth{};
  hot_pcs_.clear();
  noise_pcs_.clear();
  pairs_.clear();
  pair_cursor_ = 0;
  burst_left_ = 0;
  burst_line_ = 0;
  next_line_ = 0;
  gpu_active_ = 0;
  phase_left_ = 0;
  gpu_window_c_[0] = gpu_window_c_[1] = gpu_window_c_[2] = 0;
  prepare();
}

void SynthSource::prepare() {
  switch (scenario_) {
    case Scenario::PicsEvents: {
      // Quiet fraction inside [0.78, 0.87], comfortably within the
      // contract's [0.75, 0.9] even after sampling noise.
      eventful_p_ = 0.13 + rng_.unit() * 0.09;
      u32 nhot = params_.single_dominant ? 1 : params_.hot_pcs;
      std::set<u64> seen;
      while (hot_pcs_.size() < nhot) {
        u64 pc = (rng_.range(0x100000, 0x7FFFFFF) & ~u64(3));
        if (seen.insert(pc).second) hot_pcs_.push_back(pc);
      }
      while (noise_pcs_.size() < 48) {
        u64 pc = (rng_.range(0x100000, 0x7FFFFFF) & ~u64(3));
        if (seen.insert(pc).second) noise_pcs_.push_back(pc);
      }
      for (u64 pc : hot_pcs_) truth_.series["hot_pcs"].push_back(pc);
      truth_.scalars["eventful_p"] = eventful_p_;
      break;
    }
    case Scenario::PcLoop:
      // Seed-dependent, line-aligned loop base so distinct seeds produce
      // distinct streams; the miss count only depends on the line count.
      loop_base_ = 0x00400000 + rng_.below(1 << 16) * 0x1000;
      truth_.scalars["lines"] = params_.loop_lines;
      truth_.scalars["expected_demand_misses"] = params_.loop_lines;
      break;
    case Scenario::PcEntangledPairs: {
      u64 base = 0x10000000;
      for (u32 i = 0; i < params_.pair_count; i++) {
        u64 a = base + u64(i) * 2 * 64;
        u64 b = base + (u64(i) * 2 + 1) * 64;
        pairs_.push_back({a, b});
      }
      truth_.scalars["pairs"] = params_.pair_count;
      break;
    }
    case Scenario::GpuActivityPhases:
      gpu_active_ = 0;
      phase_left_ = rng_.range(params_.phase_len * 3 / 4,
                               params_.phase_len * 5 / 4);
      truth_.scalars["bin0"] = 0;
      truth_.scalars["bin1"] = 0;
      truth_.scalars["bin2"] = 0;
      truth_.scalars["bin3"] = 0;
      break;
  }
}

bool SynthSource::next(CycleRecord& out) {
  if (pos_ >= params_.length) return false;
  switch (scenario_) {
    case Scenario::PicsEvents: return next_pics(out);
    case Scenario::PcLoop: return next_pcloop(out);
    case Scenario::PcEntangledPairs: return next_pairs(out);
    case Scenario::GpuActivityPhases: return next_gpu(out);
  }
  return false;
}

bool SynthSource::next_pics(CycleRecord& out) {
  out.clear();
  out.cycle = pos_;
  if (rng_.chance(eventful_p_)) {
    u64 pc;
    if (params_.single_dominant) {
      pc = rng_.chance(0.9) ? hot_pcs_[0]
                            : noise_pcs_[rng_.below(noise_pcs_.size())];
    } else {
      u64 window = pos_ / params_.pics_period;
      u64 dominant = hot_pcs_[window % hot_pcs_.size()];
      double r = rng_.unit();
      if (r < 0.60) {
        pc = dominant;
      } else if (r < 0.85) {
        pc = hot_pcs_[rng_.below(hot_pcs_.size())];
      } else {
        pc = noise_pcs_[rng_.below(noise_pcs_.size())];
      }
    }
    // event class weights, in IOReg order x0..x10
    static const double w[11] = {0.06, 0.14, 0.10, 0.22, 0.08, 0.12,
                                 0.07, 0.05, 0.06, 0.06, 0.04};
    double r = rng_.unit(), acc = 0;
    u32 primary = 10;
    for (u32 i = 0; i < 11; i++) {
      acc += w[i];
      if (r < acc) {
        primary = i;
        break;
      }
    }
    u32 flags = 1u << primary;
    if (rng_.chance(0.25)) flags |= 1u << rng_.below(11);
    if (flags & (1u << 5)) flags |= 1u << 8;  // mispredict implies a flush
    u32 winner = 0;
    while (!(flags & (1u << winner))) winner++;
    for (u8 i = 0; i < 11; i++)
      out.updates.push_back({i, (flags >> i) & 1});
    for (u8 i = 11; i < 17; i++) out.updates.push_back({i, pc});
    truth_.pc_cycles[pc]++;
    truth_.pc_flags[pc] |= 1u << winner;
    truth_.scalars["eventful_cycles"]++;
  } else {
    truth_.scalars["quiet_cycles"]++;
  }
  pos_++;
  return true;
}

bool SynthSource::next_pcloop(CycleRecord& out) {
  out.clear();
  out.cycle = pos_;
  u64 line = (pos_ / 16) % params_.loop_lines;
  u64 pc = loop_base_ + line * 64 + (pos_ % 16) * 4;
  out.updates.push_back({11, pc});
  pos_++;
  return true;
}

bool SynthSource::next_pairs(CycleRecord& out) {
  out.clear();
  out.cycle = pos_;
  if (burst_left_ == 0) {
    if (next_line_) {
      burst_line_ = next_line_;
      next_line_ = 0;
    } else if (rng_.chance(0.08)) {
      burst_line_ = 0x30000000 + rng_.below(4096) * 64;
      truth_.scalars["jitter_visits"]++;
    } else {
      auto& p = pairs_[pair_cursor_];
      pair_cursor_ = (pair_cursor_ + 1) % pairs_.size();
      burst_line_ = p.first;
      next_line_ = p.second;
      truth_.scalars["pair_visits"]++;
    }
    burst_left_ = 4;
  }
  u64 pc = burst_line_ + u64(4 - burst_left_) * 4;
  out.updates.push_back({11, pc});
  burst_left_--;
  pos_++;
  return true;
}

bool SynthSource::next_gpu(CycleRecord& out) {
  out.clear();
  out.cycle = pos_;
  if (phase_left_ == 0) {
    gpu_active_ = (gpu_active_ + 1) % 3;
    phase_left_ =
        rng_.range(params_.phase_len * 3 / 4, params_.phase_len * 5 / 4);
  }
  for (u8 i = 0; i < 3; i++) {
    u64 v = rng_.chance(i == gpu_active_ ? 0.80 : 0.02) ? 1 : 0;
    out.updates.push_back({i, v});
    gpu_window_c_[i] += v;
  }
  phase_left_--;
  pos_++;
  if (pos_ % 256 == 0) {
    u32 high = 0;
    for (u64 c : gpu_window_c_) {
      truth_.series["window_counts"].push_back(c);
      if (c > 64) high++;
    }
    truth_.scalars["bin" + std::to_string(high)]++;
    gpu_window_c_[0] = gpu_window_c_[1] = gpu_window_c_[2] = 0;
  }
  return true;
}

std::string GroundTruth::to_json() const {
  nlohmann::json j;
  for (const auto& [k, v] : scalars) j["scalars"][k] = v;
  for (const auto& [k, v] : series) j["series"][k] = v;
  for (const auto& [pc, n] : pc_cycles)
    j["pc_cycles"]["0x" + to_hex(pc)] = n;
  for (const auto& [pc, f] : pc_flags)
    j["pc_flags"]["0x" + to_hex(pc)] = f;
  return j.dump(2);
}

}  // namespace ipu
