// Copyright (c) 2026 ipusim contributors
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ipu/isa.hpp"
#include "ipu/trace.hpp"

namespace ipu::test {

inline std::string repo_path(const std::string& rel) {
  return std::string(IPU_REPO_ROOT) + "/" + rel;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline CycleRecord rec(u64 cycle) {
  CycleRecord r;
  r.cycle = cycle;
  return r;
}

inline CycleRecord rec(u64 cycle, std::vector<SignalUpdate> ups) {
  CycleRecord r;
  r.cycle = cycle;
  r.updates = std::move(ups);
  return r;
}

inline CycleRecord rec_addr(u64 cycle, u64 addr,
                            std::vector<SignalUpdate> ups = {}) {
  CycleRecord r;
  r.cycle = cycle;
  r.has_addr = true;
  r.addr = addr;
  r.updates = std::move(ups);
  return r;
}

// Uniformly random legal instruction with canonical don't-care fields.
// Meaningful-field fidelity is asserted via the word-level fixpoint
// encode(decode(w)) == w, which every value produced here must satisfy.
inline Instruction random_legal_instruction(std::mt19937_64& rng) {
  auto pick = [&](u32 n) { return u32(rng() % n); };
  auto reg = [&] { return u8(pick(32)); };
  static const Op kAll[] = {
      Op::kAdd,  Op::kSub,   Op::kSll,  Op::kSlt,  Op::kSltu, Op::kXor,
      Op::kSrl,  Op::kSra,   Op::kOr,   Op::kAnd,  Op::kAddi, Op::kSlti,
      Op::kSltiu, Op::kXori, Op::kOri,  Op::kAndi, Op::kSlli, Op::kSrli,
      Op::kSrai, Op::kLui,   Op::kLb,   Op::kLh,   Op::kLw,   Op::kLbu,
      Op::kLhu,  Op::kSb,    Op::kSh,   Op::kSw,   Op::kBeq,  Op::kBne,
      Op::kBlt,  Op::kBge,   Op::kBltu, Op::kBgeu, Op::kJal,  Op::kJalr,
      Op::kHash, Op::kHist,  Op::kRegtimer, Op::kLoopn, Op::kEmit,
      Op::kRet,  Op::kMvio,  Op::kBeqi, Op::kBnei, Op::kStio,
  };
  Instruction in{};
  in.op = kAll[pick(u32(sizeof(kAll) / sizeof(kAll[0])))];
  switch (in.op) {
    case Op::kAdd: case Op::kSub: case Op::kSll: case Op::kSlt:
    case Op::kSltu: case Op::kXor: case Op::kSrl: case Op::kSra:
    case Op::kOr: case Op::kAnd:
      in.rd = reg();
      in.rs1 = reg();
      in.rs2 = reg();
      break;
    case Op::kAddi: case Op::kSlti: case Op::kSltiu: case Op::kXori:
    case Op::kOri: case Op::kAndi:
      in.rd = reg();
      in.rs1 = reg();
      in.imm = i32(pick(4096)) - 2048;
      break;
    case Op::kSlli: case Op::kSrli: case Op::kSrai:
      in.rd = reg();
      in.rs1 = reg();
      in.imm = i32(pick(32));
      break;
    case Op::kLui:
      in.rd = reg();
      in.imm = i32(pick(1u << 20));
      break;
    case Op::kLb: case Op::kLh: case Op::kLw: case Op::kLbu: case Op::kLhu:
    case Op::kJalr:
      in.rd = reg();
      in.rs1 = reg();
      in.imm = i32(pick(4096)) - 2048;
      break;
    case Op::kSb: case Op::kSh: case Op::kSw:
      in.rs1 = reg();
      in.rs2 = reg();
      in.imm = i32(pick(4096)) - 2048;
      break;
    case Op::kBeq: case Op::kBne: case Op::kBlt: case Op::kBge:
    case Op::kBltu: case Op::kBgeu:
      in.rs1 = reg();
      in.rs2 = reg();
      in.imm = (i32(pick(2048)) - 1024) * 4;
      break;
    case Op::kJal:
      in.rd = reg();
      in.imm = (i32(pick(1u << 18)) - (1 << 17)) * 4;
      break;
    case Op::kHash: {
      in.rd = reg();
      bool io = pick(2) != 0;
      in.src = {u8(pick(32)), io, io && pick(2) != 0};
      break;
    }
    case Op::kHist: case Op::kRet:
      break;
    case Op::kRegtimer:
      in.rs1 = reg();
      in.target = u16(pick(kImemWords));
      break;
    case Op::kLoopn:
      in.imm = i32(pick(1u << 17));
      break;
    case Op::kEmit:
      in.rs1 = reg();
      in.imm = 1 + i32(pick(4095));
      break;
    case Op::kMvio:
      in.rd = reg();
      in.src = {u8(pick(32)), true, pick(2) != 0};
      break;
    case Op::kBeqi: case Op::kBnei: {
      bool io = pick(2) != 0;
      in.src = {u8(pick(32)), io, io && pick(2) != 0};
      in.cmp = u8(pick(4));
      in.target = u16(pick(kImemWords));
      break;
    }
    case Op::kStio:
      in.src = {u8(pick(32)), true, pick(2) != 0};
      in.rs1 = reg();
      in.imm = i32(pick(2048)) - 1024;
      break;
  }
  return in;
}

}  // namespace ipu::test
