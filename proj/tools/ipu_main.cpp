// Copyright (c) 2026 ipusim contributors
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: assemble introspection binaries, run them against
// traces, synthesize workloads, and post-process emitted packets.
//
// Exit status taxonomy (stable): 0 success, 1 usage, 2 input format,
// 3 runtime fault, 4 policy refusal.

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ipu/analytics.hpp"
#include "ipu/hostapi.hpp"
#include "ipu/isa.hpp"
#include "ipu/machine.hpp"
#include "ipu/softlogic.hpp"
#include "ipu/trace.hpp"

namespace {

using namespace ipu;

int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::Usage: return 1;
    case ErrorKind::Syntax:
    case ErrorKind::Encoding:
    case ErrorKind::ImageFormat:
    case ErrorKind::AbiMismatch:
    case ErrorKind::Malformed: return 2;
    case ErrorKind::Policy: return 4;
    case ErrorKind::Host:
    case ErrorKind::Runtime: return 3;
  }
  return 3;
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::Usage, "cannot open " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::vector<u8> read_binary_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Usage, "cannot open " + path);
  std::vector<u8> out((std::istreambuf_iterator<char>(is)),
                      std::istreambuf_iterator<char>());
  return out;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::Usage, "cannot write " + path);
  os << text;
}

void write_binary_file(const std::string& path, const std::vector<u8>& b) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::Usage, "cannot write " + path);
  os.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size()));
}

u64 parse_u64_any(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    u64 v = std::stoull(s, &pos, 0);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Usage, std::string("bad ") + what + " '" + s + "'");
  }
}

ClockRatio parse_ratio(const std::string& s) {
  auto colon = s.find(':');
  if (colon == std::string::npos) {
    u64 ipu = parse_u64_any(s, "clock ratio");
    return ClockRatio{1, u32(ipu)};
  }
  ClockRatio r;
  r.hit = u32(parse_u64_any(s.substr(0, colon), "clock ratio"));
  r.ipu = u32(parse_u64_any(s.substr(colon + 1), "clock ratio"));
  if (r.hit == 0 || r.ipu == 0)
    throw Error(ErrorKind::Usage, "clock ratio terms must be nonzero");
  return r;
}

u64 parse_sample(const std::string& s) {
  auto slash = s.find('/');
  std::string k = slash == std::string::npos ? s : s.substr(slash + 1);
  if (slash != std::string::npos && s.substr(0, slash) != "1")
    throw Error(ErrorKind::Usage, "sampling must be of the form 1/k");
  u64 v = parse_u64_any(k, "sampling divisor");
  if (v == 0) throw Error(ErrorKind::Usage, "sampling divisor must be >= 1");
  return v;
}

// Optional key=value configuration file. '#' starts a comment; keys mirror
// the long flag names, block parameters as "block.<param>".
std::map<std::string, std::string> load_config(const std::string& path) {
  std::map<std::string, std::string> out;
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::Usage, "cannot open config file " + path);
  std::string line;
  int n = 0;
  auto trim = [](std::string s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    n++;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::Usage, path + ":" + std::to_string(n) +
                                        ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw Error(ErrorKind::Usage,
                  path + ":" + std::to_string(n) + ": empty key");
    out[key] = val;
  }
  return out;
}

AbiSpec abi_for(const std::string& abi_path, const std::string& builtin) {
  if (!abi_path.empty()) return load_abi_file(abi_path);
  if (builtin == "pics") return synth_abi(Scenario::PicsEvents);
  if (builtin == "util") return synth_abi(Scenario::GpuActivityPhases);
  throw Error(ErrorKind::Usage, "--abi is required");
}

ProgramImage image_for(const std::string& image_path,
                       const std::string& builtin, const AbiSpec& abi,
                       u64 period) {
  if (!image_path.empty())
    return ProgramImage::parse(read_binary_file(image_path));
  if (builtin == "pics") return pics_program(abi, period);
  if (builtin == "util") return util_program(abi);
  throw Error(ErrorKind::Usage, "either --image or --builtin is required");
}

// ---------------------------------------------------------------------------
// asm
// ---------------------------------------------------------------------------

struct AsmArgs {
  std::string in, builtin, abi, out, source_out;
  u64 period = kPicsDefaultPeriod;
  u32 window = kUtilWindowLen;
};

int cmd_asm(const AsmArgs& a) {
  if (a.in.empty() == a.builtin.empty())
    throw Error(ErrorKind::Usage, "pass exactly one of --in or --builtin");
  AbiSpec abi = abi_for(a.abi, a.builtin);
  ProgramImage img;
  std::string source;
  if (!a.in.empty()) {
    source = read_text_file(a.in);
    img = assemble(source, abi, a.in);
    img.name = a.in;
  } else if (a.builtin == "pics") {
    source = pics_program_source(a.period);
    img = pics_program(abi, a.period);
  } else if (a.builtin == "util") {
    source = util_program_source(a.window);
    img = util_program(abi, a.window);
  } else {
    throw Error(ErrorKind::Usage, "unknown builtin '" + a.builtin + "'");
  }
  ImageReport report = validate_image(img, abi);
  if (!report.valid()) {
    for (const auto& f : report.findings) std::cerr << "finding: " << f << "\n";
    return 2;
  }
  if (!a.source_out.empty()) write_text_file(a.source_out, source);
  if (!a.out.empty()) write_binary_file(a.out, img.serialize());
  std::cout << "assembled " << img.words.size() << " words (policy "
            << policy_name(img.policy) << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

struct RunArgs {
  std::string image, builtin, abi, trace, out, report_out, block;
  std::vector<std::string> block_params;
  std::vector<std::string> allow_policies;
  std::string ts, te, ratio = "1:1", sample;
  u64 period = kPicsDefaultPeriod;
  double hz = 1e9;
  u64 fifo_capacity = HostFifo::kDefaultCapacity;
  u32 ipus = 1;
  u32 pkt_header = 0;
  bool idealized = false;
};

void apply_config(const std::map<std::string, std::string>& cfg, CLI::App* sub,
                  RunArgs& a) {
  auto take = [&](const char* flag, const char* key, std::string& dst) {
    auto it = cfg.find(key);
    if (it != cfg.end() && sub->count(flag) == 0) dst = it->second;
  };
  take("--image", "image", a.image);
  take("--builtin", "builtin", a.builtin);
  take("--abi", "abi", a.abi);
  take("--trace", "trace", a.trace);
  take("--out", "out", a.out);
  take("--report-out", "report-out", a.report_out);
  take("--block", "block", a.block);
  take("--ts", "ts", a.ts);
  take("--te", "te", a.te);
  take("--clock-ratio", "clock-ratio", a.ratio);
  take("--sample", "sample", a.sample);
  if (auto it = cfg.find("period"); it != cfg.end() && !sub->count("--period"))
    a.period = parse_u64_any(it->second, "period");
  if (auto it = cfg.find("hz"); it != cfg.end() && !sub->count("--hz"))
    a.hz = std::stod(it->second);
  if (auto it = cfg.find("fifo-capacity");
      it != cfg.end() && !sub->count("--fifo-capacity"))
    a.fifo_capacity = parse_u64_any(it->second, "fifo capacity");
  if (auto it = cfg.find("idealized");
      it != cfg.end() && !sub->count("--idealized"))
    a.idealized = it->second == "true" || it->second == "1";
  for (const auto& [k, v] : cfg)
    if (k.rfind("block.", 0) == 0)
      a.block_params.push_back(k.substr(6) + "=" + v);
}

std::map<std::string, std::string> block_param_map(
    const std::vector<std::string>& kvs) {
  std::map<std::string, std::string> out;
  for (const auto& kv : kvs) {
    auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::Usage, "block parameter '" + kv +
                                        "' is not of the form key=value");
    out[kv.substr(0, eq)] = kv.substr(eq + 1);  // later entries win
  }
  return out;
}

int cmd_run(const RunArgs& a) {
  if (a.trace.empty()) throw Error(ErrorKind::Usage, "--trace is required");
  if (a.out.empty()) throw Error(ErrorKind::Usage, "--out is required");
  AbiSpec abi = abi_for(a.abi, a.builtin);

  MachineConfig cfg;
  cfg.ratio = parse_ratio(a.ratio);
  cfg.idealized = a.idealized;

  DeviceRegistry reg;
  int id = reg.create_device(cfg, a.fifo_capacity);
  if (!a.allow_policies.empty()) {
    std::set<Policy> allowed;
    for (const auto& p : a.allow_policies) allowed.insert(policy_from_name(p));
    reg.set_allowed_policies(id, allowed);
  }
  if (!a.image.empty()) {
    reg.ipu_config_image(id, read_binary_file(a.image));
  } else {
    reg.ipu_config_image(id, image_for("", a.builtin, abi, a.period));
  }
  Machine& m = reg.at(id).machine();

  if (!a.block.empty())
    m.attach_block(make_block(a.block, block_param_map(a.block_params)));

  std::optional<u64> ts, te;
  if (!a.ts.empty()) ts = parse_u64_any(a.ts, "trigger start");
  if (!a.te.empty()) te = parse_u64_any(a.te, "trigger stop");
  if (ts || te) reg.ipu_trigger_calls(id, ts, te);
  // With a start trigger the core stays paused until the address fires;
  // otherwise activate it before the stream begins.
  if (!ts) m.host_control(HostCommand::kResume);

  auto src = open_trace(a.trace, abi);
  std::unique_ptr<CycleSource> sampled;
  CycleSource* feed = src.get();
  if (!a.sample.empty()) {
    u64 k = parse_sample(a.sample);
    if (k > 1) {
      sampled = std::make_unique<SampledSource>(*src, k);
      feed = sampled.get();
    }
  }

  RunReport rep = m.run_trace(*feed);
  auto pkts = reg.fifo_drain(id);
  save_packets(a.out, pkts);

  const HostFifo& fifo = reg.at(id).fifo();
  BandwidthReport bw = bandwidth_report(
      fifo.accepted_bytes(), fifo.accepted_packets(), rep.counters.delivered,
      a.hz, a.ipus, a.pkt_header);
  std::string report = run_report_json(rep, &bw);
  if (!a.report_out.empty()) write_text_file(a.report_out, report);

  std::cout << "delivered " << rep.counters.delivered << " records, wrote "
            << pkts.size() << " packets (" << fifo.accepted_bytes()
            << " bytes) to " << a.out << ", final status "
            << status_name(rep.final_status) << "\n";
  if (rep.fault.kind != FaultKind::kNone) {
    std::cerr << "fault: " << fault_kind_name(rep.fault.kind) << " at slot "
              << rep.fault.pc << ": " << rep.fault.detail << "\n";
    return 3;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ReportArgs {
  std::string kind, packets, off_packets, faithful_packets, abi;
  std::string out, json_out;
  u64 period = kPicsDefaultPeriod;
  double threshold = 0.25;
};

int cmd_report(const ReportArgs& a) {
  auto payloads = [&](const std::string& path) {
    return packet_payloads(load_packets(path));
  };
  if (a.kind == "pics") {
    PicsTable t = pics_postprocess(payloads(a.packets), a.period);
    AbiSpec abi =
        a.abi.empty() ? synth_abi(Scenario::PicsEvents) : load_abi_file(a.abi);
    if (!a.out.empty()) write_text_file(a.out, pics_csv(t));
    if (!a.json_out.empty()) write_text_file(a.json_out, pics_json(t, &abi));
    std::cout << "cycle-stack rows: " << t.rows.size() << ", attributed "
              << t.total_cycles() << " cycles\n";
  } else if (a.kind == "util") {
    UtilSummary s = util_classify(util_decode(payloads(a.packets)),
                                  a.threshold);
    if (!a.out.empty()) write_text_file(a.out, util_csv(s));
    if (!a.json_out.empty()) write_text_file(a.json_out, util_json(s));
    std::cout << "windows: " << s.windows.size() << " bins " << s.bins[0]
              << "/" << s.bins[1] << "/" << s.bins[2] << "/" << s.bins[3]
              << "\n";
  } else if (a.kind == "prefetch") {
    PrefetchReport on = prefetch_report(payloads(a.packets));
    if (!a.off_packets.empty()) {
      PrefetchAb ab = prefetch_ab(on, prefetch_report(payloads(a.off_packets)));
      if (!a.out.empty()) write_text_file(a.out, prefetch_ab_csv(ab));
      if (!a.json_out.empty()) write_text_file(a.json_out, prefetch_ab_json(ab));
      std::cout << "missrate on " << ab.on.miss_rate << " off "
                << ab.off.miss_rate << " delta " << ab.miss_rate_delta << "\n";
    } else {
      if (!a.out.empty()) write_text_file(a.out, prefetch_csv(on));
      if (!a.json_out.empty()) write_text_file(a.json_out, prefetch_json(on));
      std::cout << "coverage " << on.coverage << " accuracy " << on.accuracy
                << " missrate " << on.miss_rate << "\n";
    }
  } else if (a.kind == "dualrun") {
    if (a.faithful_packets.empty())
      throw Error(ErrorKind::Usage, "report dualrun needs --faithful");
    DualRunReport r;
    r.table_idealized = pics_postprocess(payloads(a.packets), a.period);
    r.table_faithful = pics_postprocess(payloads(a.faithful_packets),
                                        a.period);
    // Error metrics over the two tables only; run counters are not part of
    // a packets-only report.
    auto ideal = r.table_idealized.cycles_by_pc();
    auto faith = r.table_faithful.cycles_by_pc();
    u64 dropped = 0;
    double err_sum = 0;
    for (const auto& [pc, icyc] : ideal) {
      auto it = faith.find(pc);
      u64 fcyc = it == faith.end() ? 0 : it->second;
      double rel = std::abs(double(fcyc) - double(icyc)) / double(icyc);
      r.pc_errors.push_back({pc, rel});
      err_sum += rel;
      r.max_rel_error = std::max(r.max_rel_error, rel);
      if (fcyc == 0) {
        r.dropped_pcs.push_back(pc);
        dropped += icyc;
      }
    }
    if (!ideal.empty()) r.avg_rel_error = err_sum / double(ideal.size());
    if (u64 tot = r.table_idealized.total_cycles())
      r.dropped_pc_delay_fraction = double(dropped) / double(tot);
    if (!a.out.empty()) write_text_file(a.out, dual_run_csv(r));
    if (!a.json_out.empty()) write_text_file(a.json_out, dual_run_json(r));
    std::cout << "avg rel error " << r.avg_rel_error << ", dropped-pc delay "
              << r.dropped_pc_delay_fraction << "\n";
  } else {
    throw Error(ErrorKind::Usage, "unknown report kind '" + a.kind + "'");
  }
  return 0;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string scenario, out, truth_out;
  u64 seed = 1, length = 100000;
  u64 period = 50000, phase_len = 5120;
  u32 hot_pcs = 4, loop_lines = 4, pairs = 600;
  bool single_dominant = false;
};

int cmd_synth(const SynthArgs& a) {
  if (a.out.empty()) throw Error(ErrorKind::Usage, "--out is required");
  SynthParams p;
  p.seed = a.seed;
  p.length = a.length;
  p.pics_period = a.period;
  p.hot_pcs = a.hot_pcs;
  p.single_dominant = a.single_dominant;
  p.loop_lines = a.loop_lines;
  p.pair_count = a.pairs;
  p.phase_len = a.phase_len;
  SynthSource src(scenario_from_name(a.scenario), p);

  bool binary = a.out.size() > 4 &&
                a.out.compare(a.out.size() - 4, 4, ".ipb") == 0;
  std::ofstream os(a.out, binary ? std::ios::binary : std::ios::out);
  if (!os) throw Error(ErrorKind::Usage, "cannot write " + a.out);
  if (binary)
    write_trace_bin(os, src.abi(), src);
  else
    write_trace_text(os, src.abi(), src);
  os.close();
  if (!a.truth_out.empty()) write_text_file(a.truth_out, src.truth().to_json());
  std::cout << "wrote " << a.length << " records to " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// dualrun
// ---------------------------------------------------------------------------

struct DualArgs {
  std::string image, builtin = "pics", abi, trace, out, json_out;
  std::string ratio = "1:1";
  u64 period = kPicsDefaultPeriod;
};

int cmd_dualrun(const DualArgs& a) {
  if (a.trace.empty()) throw Error(ErrorKind::Usage, "--trace is required");
  AbiSpec abi = abi_for(a.abi, a.builtin);
  ProgramImage img = image_for(a.image, a.builtin, abi, a.period);
  MachineConfig cfg;
  cfg.ratio = parse_ratio(a.ratio);
  auto src = open_trace(a.trace, abi);
  DualRunReport r = dual_run(img, *src, a.period, cfg);
  if (!a.out.empty()) write_text_file(a.out, dual_run_csv(r));
  if (!a.json_out.empty()) write_text_file(a.json_out, dual_run_json(r));
  std::cout << "avg rel error " << r.avg_rel_error << ", max "
            << r.max_rel_error << ", dropped-pc delay "
            << r.dropped_pc_delay_fraction << ", faithful drops "
            << r.faithful.counters.dropped_arrivals << "\n";
  if (r.idealized.fault.kind != FaultKind::kNone ||
      r.faithful.fault.kind != FaultKind::kNone) {
    std::cerr << "fault during dual run\n";
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"introspection core emulator and trace toolkit"};
  app.require_subcommand(1);

  AsmArgs aa;
  CLI::App* s_asm = app.add_subcommand("asm", "assemble an image");
  s_asm->add_option("--in", aa.in, "assembly source file");
  s_asm->add_option("--builtin", aa.builtin, "generate a built-in program");
  s_asm->add_option("--abi", aa.abi, "ABI file");
  s_asm->add_option("--out", aa.out, "image file to write");
  s_asm->add_option("--source-out", aa.source_out, "write program source");
  s_asm->add_option("--period", aa.period, "sampler flush period");
  s_asm->add_option("--window", aa.window, "utilization window length");

  RunArgs ra;
  std::string run_config;
  CLI::App* s_run = app.add_subcommand("run", "run an image over a trace");
  s_run->add_option("--config", run_config, "key=value configuration file");
  s_run->add_option("--image", ra.image, "image file");
  s_run->add_option("--builtin", ra.builtin, "built-in program");
  s_run->add_option("--abi", ra.abi, "ABI file");
  s_run->add_option("--trace", ra.trace, "trace file (.ipt/.ipb)");
  s_run->add_option("--out", ra.out, "packet capture to write (.ipk)");
  s_run->add_option("--report-out", ra.report_out, "run-report JSON");
  s_run->add_option("--block", ra.block, "soft-logic block name");
  s_run->add_option("--block-param", ra.block_params,
                    "block parameter key=value (repeatable)");
  s_run->add_option("--allow-policy", ra.allow_policies,
                    "extend the policy allow-list (repeatable)");
  s_run->add_option("--ts", ra.ts, "start trigger address");
  s_run->add_option("--te", ra.te, "stop trigger address");
  s_run->add_option("--clock-ratio", ra.ratio, "HIT:IPU clock ratio");
  s_run->add_option("--sample", ra.sample, "1/k record sampling");
  s_run->add_option("--period", ra.period, "built-in sampler period");
  s_run->add_option("--hz", ra.hz, "HIT clock in Hz for bandwidth");
  s_run->add_option("--fifo-capacity", ra.fifo_capacity, "FIFO bytes");
  s_run->add_option("--ipus", ra.ipus, "IPU count for aggregate bandwidth");
  s_run->add_option("--pkt-header", ra.pkt_header,
                    "header bytes per packet for payload rates");
  s_run->add_flag("--idealized", ra.idealized, "infinitely fast core");

  ReportArgs pa;
  CLI::App* s_rep = app.add_subcommand("report", "post-process packets");
  s_rep->add_option("kind", pa.kind, "pics|util|prefetch|dualrun")
      ->required();
  s_rep->add_option("--packets", pa.packets, "packet capture (.ipk)")
      ->required();
  s_rep->add_option("--off", pa.off_packets, "prefetch-off capture for A/B");
  s_rep->add_option("--faithful", pa.faithful_packets,
                    "faithful-mode capture for dualrun");
  s_rep->add_option("--abi", pa.abi, "ABI file for event names");
  s_rep->add_option("--period", pa.period, "sampler flush period");
  s_rep->add_option("--threshold", pa.threshold, "high-activity threshold");
  s_rep->add_option("--out", pa.out, "CSV output");
  s_rep->add_option("--json-out", pa.json_out, "JSON output");

  SynthArgs sa;
  CLI::App* s_syn = app.add_subcommand("synth", "synthesize a trace");
  s_syn->add_option("--scenario", sa.scenario,
                    "pics-events|pc-loop|pc-entangled-pairs|"
                    "gpu-activity-phases")
      ->required();
  s_syn->add_option("--seed", sa.seed, "RNG seed");
  s_syn->add_option("--length", sa.length, "records to generate");
  s_syn->add_option("--out", sa.out, "trace file (.ipt/.ipb)");
  s_syn->add_option("--truth-out", sa.truth_out, "ground-truth JSON sidecar");
  s_syn->add_option("--period", sa.period, "dominance rotation period");
  s_syn->add_option("--hot-pcs", sa.hot_pcs, "rotating dominant PC count");
  s_syn->add_flag("--single-dominant", sa.single_dominant,
                  "one PC dominates throughout");
  s_syn->add_option("--loop-lines", sa.loop_lines, "pc-loop line count");
  s_syn->add_option("--pairs", sa.pairs, "entangled pair count");
  s_syn->add_option("--phase-len", sa.phase_len, "activity phase length");

  DualArgs da;
  std::string dual_config;
  CLI::App* s_dual = app.add_subcommand(
      "dualrun", "idealized vs faithful error measurement");
  s_dual->add_option("--config", dual_config, "key=value configuration file");
  s_dual->add_option("--image", da.image, "image file");
  s_dual->add_option("--builtin", da.builtin, "built-in program");
  s_dual->add_option("--abi", da.abi, "ABI file");
  s_dual->add_option("--trace", da.trace, "trace file");
  s_dual->add_option("--period", da.period, "sampler flush period");
  s_dual->add_option("--clock-ratio", da.ratio, "HIT:IPU clock ratio");
  s_dual->add_option("--out", da.out, "CSV output");
  s_dual->add_option("--json-out", da.json_out, "JSON output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (s_asm->parsed()) return cmd_asm(aa);
    if (s_run->parsed()) {
      if (!run_config.empty()) apply_config(load_config(run_config), s_run, ra);
      return cmd_run(ra);
    }
    if (s_rep->parsed()) return cmd_report(pa);
    if (s_syn->parsed()) return cmd_synth(sa);
    if (s_dual->parsed()) {
      if (!dual_config.empty()) {
        auto cfg = load_config(dual_config);
        auto take = [&](const char* flag, const char* key, std::string& dst) {
          auto it = cfg.find(key);
          if (it != cfg.end() && s_dual->count(flag) == 0) dst = it->second;
        };
        take("--image", "image", da.image);
        take("--builtin", "builtin", da.builtin);
        take("--abi", "abi", da.abi);
        take("--trace", "trace", da.trace);
        take("--clock-ratio", "clock-ratio", da.ratio);
        if (auto it = cfg.find("period");
            it != cfg.end() && !s_dual->count("--period"))
          da.period = parse_u64_any(it->second, "period");
      }
      return cmd_dualrun(da);
    }
  } catch (const ipu::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
