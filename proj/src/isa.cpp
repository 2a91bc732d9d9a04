// Copyright (c) 2026 ipusim contributors
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "ipu/isa.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace ipu {

namespace {

constexpr u32 kOpcLoad = 0x03;
constexpr u32 kOpcCustom0 = 0x0B;
constexpr u32 kOpcOpImm = 0x13;
constexpr u32 kOpcStore = 0x23;
constexpr u32 kOpcCustom1 = 0x2B;
constexpr u32 kOpcOp = 0x33;
constexpr u32 kOpcLui = 0x37;
constexpr u32 kOpcBranch = 0x63;
constexpr u32 kOpcJalr = 0x67;
constexpr u32 kOpcJal = 0x6F;

u32 get_bits(u32 w, int hi, int lo) { return (w >> lo) & ((1u << (hi - lo + 1)) - 1); }

[[noreturn]] void enc_fail(const std::string& msg) {
  throw Error(ErrorKind::Encoding, msg);
}

void check_reg(u8 r, const char* what) {
  if (r >= kNumGprs) enc_fail(std::string(what) + " register out of range");
}

void check_simm(i32 v, int bits, const char* what) {
  i32 lo = -(1 << (bits - 1)), hi = (1 << (bits - 1)) - 1;
  if (v < lo || v > hi) enc_fail(std::string(what) + " immediate out of range");
}

void check_uimm(i32 v, int bits, const char* what) {
  if (v < 0 || v >= (1 << bits)) enc_fail(std::string(what) + " immediate out of range");
}

u32 enc_r(u32 funct7, u8 rs2, u8 rs1, u32 f3, u8 rd, u32 opc) {
  return funct7 << 25 | u32(rs2) << 20 | u32(rs1) << 15 | f3 << 12 |
         u32(rd) << 7 | opc;
}

u32 enc_i(i32 imm, u8 rs1, u32 f3, u8 rd, u32 opc) {
  return u32(imm & 0xFFF) << 20 | u32(rs1) << 15 | f3 << 12 | u32(rd) << 7 | opc;
}

u32 enc_s(i32 imm, u8 rs2, u8 rs1, u32 f3, u32 opc) {
  u32 v = u32(imm & 0xFFF);
  return (v >> 5) << 25 | u32(rs2) << 20 | u32(rs1) << 15 | f3 << 12 |
         (v & 0x1F) << 7 | opc;
}

u32 enc_b(i32 imm, u8 rs2, u8 rs1, u32 f3, u32 opc) {
  u32 v = u32(imm) & 0x1FFF;
  return ((v >> 12) & 1) << 31 | ((v >> 5) & 0x3F) << 25 | u32(rs2) << 20 |
         u32(rs1) << 15 | f3 << 12 | ((v >> 1) & 0xF) << 8 |
         ((v >> 11) & 1) << 7 | opc;
}

u32 enc_j(i32 imm, u8 rd, u32 opc) {
  u32 v = u32(imm) & 0x1FFFFF;
  return ((v >> 20) & 1) << 31 | ((v >> 1) & 0x3FF) << 21 |
         ((v >> 11) & 1) << 20 | ((v >> 12) & 0xFF) << 12 | u32(rd) << 7 | opc;
}

i32 dec_i_imm(u32 w) { return i32(w) >> 20; }

i32 dec_s_imm(u32 w) {
  return i32((get_bits(w, 31, 25) << 5 | get_bits(w, 11, 7)) << 20) >> 20;
}

i32 dec_b_imm(u32 w) {
  u32 v = get_bits(w, 31, 31) << 12 | get_bits(w, 7, 7) << 11 |
          get_bits(w, 30, 25) << 5 | get_bits(w, 11, 8) << 1;
  return i32(v << 19) >> 19;
}

i32 dec_j_imm(u32 w) {
  u32 v = get_bits(w, 31, 31) << 20 | get_bits(w, 19, 12) << 12 |
          get_bits(w, 20, 20) << 11 | get_bits(w, 30, 21) << 1;
  return i32(v << 11) >> 11;
}

struct NameEntry {
  Op op;
  const char* name;
};

constexpr NameEntry kOpNames[] = {
    {Op::kAdd, "add"},   {Op::kSub, "sub"},   {Op::kSll, "sll"},
    {Op::kSlt, "slt"},   {Op::kSltu, "sltu"}, {Op::kXor, "xor"},
    {Op::kSrl, "srl"},   {Op::kSra, "sra"},   {Op::kOr, "or"},
    {Op::kAnd, "and"},   {Op::kAddi, "addi"}, {Op::kSlti, "slti"},
    {Op::kSltiu, "sltiu"}, {Op::kXori, "xori"}, {Op::kOri, "ori"},
    {Op::kAndi, "andi"}, {Op::kSlli, "slli"}, {Op::kSrli, "srli"},
    {Op::kSrai, "srai"}, {Op::kLui, "lui"},   {Op::kLb, "lb"},
    {Op::kLh, "lh"},     {Op::kLw, "lw"},     {Op::kLbu, "lbu"},
    {Op::kLhu, "lhu"},   {Op::kSb, "sb"},     {Op::kSh, "sh"},
    {Op::kSw, "sw"},     {Op::kBeq, "beq"},   {Op::kBne, "bne"},
    {Op::kBlt, "blt"},   {Op::kBge, "bge"},   {Op::kBltu, "bltu"},
    {Op::kBgeu, "bgeu"}, {Op::kJal, "jal"},   {Op::kJalr, "jalr"},
    {Op::kHash, "hash"}, {Op::kHist, "hist"}, {Op::kRegtimer, "regtimer"},
    {Op::kLoopn, "loopn"}, {Op::kEmit, "emit"}, {Op::kRet, "ret"},
    {Op::kMvio, "mv"},   {Op::kBeqi, "beq"},  {Op::kBnei, "bne"},
    {Op::kStio, "st"},
};

}  // namespace

const char* op_name(Op op) {
  for (const auto& e : kOpNames)
    if (e.op == op) return e.name;
  return "?";
}

// ---------------------------------------------------------------------------
// Encode
// ---------------------------------------------------------------------------

u32 encode(const Instruction& in) {
  check_reg(in.rd, "rd");
  check_reg(in.rs1, "rs1");
  check_reg(in.rs2, "rs2");
  switch (in.op) {
    case Op::kAdd:  return enc_r(0x00, in.rs2, in.rs1, 0, in.rd, kOpcOp);
    case Op::kSub:  return enc_r(0x20, in.rs2, in.rs1, 0, in.rd, kOpcOp);
    case Op::kSll:  return enc_r(0x00, in.rs2, in.rs1, 1, in.rd, kOpcOp);
    case Op::kSlt:  return enc_r(0x00, in.rs2, in.rs1, 2, in.rd, kOpcOp);
    case Op::kSltu: return enc_r(0x00, in.rs2, in.rs1, 3, in.rd, kOpcOp);
    case Op::kXor:  return enc_r(0x00, in.rs2, in.rs1, 4, in.rd, kOpcOp);
    case Op::kSrl:  return enc_r(0x00, in.rs2, in.rs1, 5, in.rd, kOpcOp);
    case Op::kSra:  return enc_r(0x20, in.rs2, in.rs1, 5, in.rd, kOpcOp);
    case Op::kOr:   return enc_r(0x00, in.rs2, in.rs1, 6, in.rd, kOpcOp);
    case Op::kAnd:  return enc_r(0x00, in.rs2, in.rs1, 7, in.rd, kOpcOp);
    case Op::kAddi:
    case Op::kSlti:
    case Op::kSltiu:
    case Op::kXori:
    case Op::kOri:
    case Op::kAndi: {
      static const std::map<Op, u32> f3{{Op::kAddi, 0}, {Op::kSlti, 2},
                                        {Op::kSltiu, 3}, {Op::kXori, 4},
                                        {Op::kOri, 6},  {Op::kAndi, 7}};
      check_simm(in.imm, 12, op_name(in.op));
      return enc_i(in.imm, in.rs1, f3.at(in.op), in.rd, kOpcOpImm);
    }
    case Op::kSlli:
      check_uimm(in.imm, 5, "shift");
      return enc_i(in.imm, in.rs1, 1, in.rd, kOpcOpImm);
    case Op::kSrli:
      check_uimm(in.imm, 5, "shift");
      return enc_i(in.imm, in.rs1, 5, in.rd, kOpcOpImm);
    case Op::kSrai:
      check_uimm(in.imm, 5, "shift");
      return enc_i(in.imm | 0x400, in.rs1, 5, in.rd, kOpcOpImm);
    case Op::kLui:
      check_uimm(in.imm, 20, "lui");
      return u32(in.imm) << 12 | u32(in.rd) << 7 | kOpcLui;
    case Op::kLb:
    case Op::kLh:
    case Op::kLw:
    case Op::kLbu:
    case Op::kLhu: {
      static const std::map<Op, u32> f3{{Op::kLb, 0}, {Op::kLh, 1},
                                        {Op::kLw, 2}, {Op::kLbu, 4},
                                        {Op::kLhu, 5}};
      check_simm(in.imm, 12, "load offset");
      return enc_i(in.imm, in.rs1, f3.at(in.op), in.rd, kOpcLoad);
    }
    case Op::kSb:
    case Op::kSh:
    case Op::kSw: {
      static const std::map<Op, u32> f3{{Op::kSb, 0}, {Op::kSh, 1}, {Op::kSw, 2}};
      check_simm(in.imm, 12, "store offset");
      return enc_s(in.imm, in.rs2, in.rs1, f3.at(in.op), kOpcStore);
    }
    case Op::kBeq:
    case Op::kBne:
    case Op::kBlt:
    case Op::kBge:
    case Op::kBltu:
    case Op::kBgeu: {
      static const std::map<Op, u32> f3{{Op::kBeq, 0},  {Op::kBne, 1},
                                        {Op::kBlt, 4},  {Op::kBge, 5},
                                        {Op::kBltu, 6}, {Op::kBgeu, 7}};
      check_simm(in.imm, 13, "branch offset");
      if (in.imm & 3) enc_fail("branch offset not word aligned");
      return enc_b(in.imm, in.rs2, in.rs1, f3.at(in.op), kOpcBranch);
    }
    case Op::kJal:
      check_simm(in.imm, 21, "jump offset");
      if (in.imm & 3) enc_fail("jump offset not word aligned");
      return enc_j(in.imm, in.rd, kOpcJal);
    case Op::kJalr:
      check_simm(in.imm, 12, "jalr offset");
      return enc_i(in.imm, in.rs1, 0, in.rd, kOpcJalr);
    case Op::kHash: {
      if (in.src.idx >= (in.src.ioreg ? kNumIoRegs : kNumGprs))
        enc_fail("hash source out of range");
      u32 tag = (in.src.ioreg ? 1u : 0u) | (in.src.high ? 2u : 0u);
      if (in.src.high && !in.src.ioreg) enc_fail("half select needs an IOReg");
      return tag << 25 | u32(in.src.idx) << 15 | 0u << 12 | u32(in.rd) << 7 |
             kOpcCustom0;
    }
    case Op::kHist:
      return 1u << 12 | kOpcCustom0;
    case Op::kRegtimer:
      if (in.target >= kImemWords) enc_fail("regtimer target out of range");
      return u32(in.target) << 21 | u32(in.rs1) << 15 | 2u << 12 | kOpcCustom0;
    case Op::kLoopn:
      check_uimm(in.imm, 17, "loopn");
      return u32(in.imm) << 15 | 3u << 12 | kOpcCustom0;
    case Op::kEmit:
      check_uimm(in.imm, 12, "emit length");
      if (in.imm == 0) enc_fail("emit length must be nonzero");
      return u32(in.imm) << 20 | u32(in.rs1) << 15 | 4u << 12 | kOpcCustom0;
    case Op::kRet:
      return 5u << 12 | kOpcCustom0;
    case Op::kMvio:
      if (in.src.idx >= kNumIoRegs) enc_fail("mv source out of range");
      return (in.src.high ? 1u : 0u) << 20 | u32(in.src.idx) << 15 | 0u << 12 |
             u32(in.rd) << 7 | kOpcCustom1;
    case Op::kBeqi:
    case Op::kBnei: {
      if (in.src.idx >= (in.src.ioreg ? kNumIoRegs : kNumGprs))
        enc_fail("branch source out of range");
      if (in.src.high && !in.src.ioreg) enc_fail("half select needs an IOReg");
      if (in.cmp > 3) enc_fail("branch comparand out of range");
      if (in.target >= kImemWords) enc_fail("branch target out of range");
      u32 cond = in.op == Op::kBnei ? 1u : 0u;
      u32 tgt = in.target;
      return (tgt >> 4) << 25 | u32(in.cmp) << 23 | cond << 22 |
             (in.src.high ? 1u : 0u) << 21 | (in.src.ioreg ? 1u : 0u) << 20 |
             u32(in.src.idx) << 15 | 1u << 12 | (tgt & 0xF) << 8 | kOpcCustom1;
    }
    case Op::kStio: {
      if (in.src.idx >= kNumIoRegs) enc_fail("store source out of range");
      check_simm(in.imm, 11, "store offset");
      u32 v = u32(in.imm & 0x7FF);
      return (v >> 5) << 26 | (in.src.high ? 1u : 0u) << 25 |
             u32(in.src.idx) << 20 | u32(in.rs1) << 15 | 2u << 12 |
             (v & 0x1F) << 7 | kOpcCustom1;
    }
  }
  enc_fail("unencodable instruction");
}

// ---------------------------------------------------------------------------
// Decode
// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void dec_fail(u32 w) {
  throw Error(ErrorKind::Encoding, "illegal instruction word 0x" + to_hex(w));
}

Instruction dec_custom0(u32 w) {
  Instruction in{};
  u32 f3 = get_bits(w, 14, 12);
  u8 rd = u8(get_bits(w, 11, 7));
  u8 rs1 = u8(get_bits(w, 19, 15));
  switch (f3) {
    case 0: {  // hash
      in.op = Op::kHash;
      in.rd = rd;
      u32 tag = get_bits(w, 26, 25);
      in.src = {rs1, (tag & 1) != 0, (tag & 2) != 0};
      if (in.src.high && !in.src.ioreg) dec_fail(w);
      if (get_bits(w, 31, 27) != 0 || get_bits(w, 24, 20) != 0) dec_fail(w);
      return in;
    }
    case 1:  // hist
      if ((w >> 15) != 0 || rd != 0) dec_fail(w);
      in.op = Op::kHist;
      return in;
    case 2:  // regtimer
      in.op = Op::kRegtimer;
      in.rs1 = rs1;
      in.target = u16(get_bits(w, 31, 21));
      if (rd != 0 || get_bits(w, 20, 20) != 0) dec_fail(w);
      return in;
    case 3:  // loopn
      in.op = Op::kLoopn;
      in.imm = i32(get_bits(w, 31, 15));
      if (rd != 0) dec_fail(w);
      return in;
    case 4:  // emit
      in.op = Op::kEmit;
      in.rs1 = rs1;
      in.imm = i32(get_bits(w, 31, 20));
      if (rd != 0 || in.imm == 0) dec_fail(w);
      return in;
    case 5:  // ret
      if ((w >> 15) != 0 || rd != 0) dec_fail(w);
      in.op = Op::kRet;
      return in;
    default:
      dec_fail(w);
  }
}

Instruction dec_custom1(u32 w) {
  Instruction in{};
  u32 f3 = get_bits(w, 14, 12);
  switch (f3) {
    case 0:  // mv from IOReg
      in.op = Op::kMvio;
      in.rd = u8(get_bits(w, 11, 7));
      in.src = {u8(get_bits(w, 19, 15)), true, get_bits(w, 20, 20) != 0};
      if (get_bits(w, 31, 21) != 0) dec_fail(w);
      return in;
    case 1: {  // branch vs small immediate
      in.op = get_bits(w, 22, 22) ? Op::kBnei : Op::kBeqi;
      in.src = {u8(get_bits(w, 19, 15)), get_bits(w, 20, 20) != 0,
                get_bits(w, 21, 21) != 0};
      if (in.src.high && !in.src.ioreg) dec_fail(w);
      in.cmp = u8(get_bits(w, 24, 23));
      in.target = u16(get_bits(w, 31, 25) << 4 | get_bits(w, 11, 8));
      if (get_bits(w, 7, 7) != 0) dec_fail(w);
      return in;
    }
    case 2: {  // store IOReg data
      in.op = Op::kStio;
      in.src = {u8(get_bits(w, 24, 20)), true, get_bits(w, 25, 25) != 0};
      in.rs1 = u8(get_bits(w, 19, 15));
      u32 v = get_bits(w, 31, 26) << 5 | get_bits(w, 11, 7);
      in.imm = i32(v << 21) >> 21;
      return in;
    }
    default:
      dec_fail(w);
  }
}

}  // namespace

Instruction decode(u32 w) {
  Instruction in{};
  u32 opc = w & 0x7F;
  u32 f3 = get_bits(w, 14, 12);
  u32 f7 = get_bits(w, 31, 25);
  in.rd = u8(get_bits(w, 11, 7));
  in.rs1 = u8(get_bits(w, 19, 15));
  in.rs2 = u8(get_bits(w, 24, 20));
  switch (opc) {
    case kOpcOp: {
      static const std::map<u32, Op> base{{0, Op::kAdd}, {1, Op::kSll},
                                          {2, Op::kSlt}, {3, Op::kSltu},
                                          {4, Op::kXor}, {5, Op::kSrl},
                                          {6, Op::kOr},  {7, Op::kAnd}};
      if (f7 == 0x00) {
        in.op = base.at(f3);
      } else if (f7 == 0x20 && f3 == 0) {
        in.op = Op::kSub;
      } else if (f7 == 0x20 && f3 == 5) {
        in.op = Op::kSra;
      } else {
        dec_fail(w);
      }
      return in;
    }
    case kOpcOpImm:
      switch (f3) {
        case 0: in.op = Op::kAddi; break;
        case 2: in.op = Op::kSlti; break;
        case 3: in.op = Op::kSltiu; break;
        case 4: in.op = Op::kXori; break;
        case 6: in.op = Op::kOri; break;
        case 7: in.op = Op::kAndi; break;
        case 1:
          if (f7 != 0) dec_fail(w);
          in.op = Op::kSlli;
          in.imm = i32(in.rs2);
          return in;
        case 5:
          if (f7 == 0x00) in.op = Op::kSrli;
          else if (f7 == 0x20) in.op = Op::kSrai;
          else dec_fail(w);
          in.imm = i32(in.rs2);
          return in;
        default: dec_fail(w);
      }
      in.imm = dec_i_imm(w);
      return in;
    case kOpcLoad:
      switch (f3) {
        case 0: in.op = Op::kLb; break;
        case 1: in.op = Op::kLh; break;
        case 2: in.op = Op::kLw; break;
        case 4: in.op = Op::kLbu; break;
        case 5: in.op = Op::kLhu; break;
        default: dec_fail(w);
      }
      in.imm = dec_i_imm(w);
      return in;
    case kOpcStore:
      switch (f3) {
        case 0: in.op = Op::kSb; break;
        case 1: in.op = Op::kSh; break;
        case 2: in.op = Op::kSw; break;
        default: dec_fail(w);
      }
      in.imm = dec_s_imm(w);
      in.rd = 0;
      return in;
    case kOpcBranch:
      switch (f3) {
        case 0: in.op = Op::kBeq; break;
        case 1: in.op = Op::kBne; break;
        case 4: in.op = Op::kBlt; break;
        case 5: in.op = Op::kBge; break;
        case 6: in.op = Op::kBltu; break;
        case 7: in.op = Op::kBgeu; break;
        default: dec_fail(w);
      }
      in.imm = dec_b_imm(w);
      in.rd = 0;
      return in;
    case kOpcJal:
      in.op = Op::kJal;
      in.imm = dec_j_imm(w);
      return in;
    case kOpcJalr:
      if (f3 != 0) dec_fail(w);
      in.op = Op::kJalr;
      in.imm = dec_i_imm(w);
      return in;
    case kOpcLui:
      in.op = Op::kLui;
      in.imm = i32(w >> 12);
      return in;
    case kOpcCustom0:
      return dec_custom0(w);
    case kOpcCustom1:
      return dec_custom1(w);
    default:
      dec_fail(w);
  }
}

bool is_legal_encoding(u32 w) {
  try {
    decode(w);
    return true;
  } catch (const Error&) {
    return false;
  }
}

// ---------------------------------------------------------------------------
// Program image container
// ---------------------------------------------------------------------------

const char* policy_name(Policy p) {
  switch (p) {
    case kPolicyClosed: return "closed";
    case kPolicyRestrictive: return "restrictive";
    case kPolicyPermissive: return "permissive";
  }
  return "?";
}

Policy policy_from_name(const std::string& name) {
  if (name == "closed") return kPolicyClosed;
  if (name == "restrictive") return kPolicyRestrictive;
  if (name == "permissive") return kPolicyPermissive;
  throw Error(ErrorKind::Usage, "unknown policy tag '" + name + "'");
}

namespace {

void put_u16(std::vector<u8>& v, u16 x) {
  v.push_back(u8(x & 0xFF));
  v.push_back(u8(x >> 8));
}

void put_u32(std::vector<u8>& v, u32 x) {
  for (int i = 0; i < 4; i++) v.push_back(u8((x >> (8 * i)) & 0xFF));
}

std::vector<u8> image_body(const ProgramImage& img) {
  std::vector<u8> out;
  out.reserve(16 + img.words.size() * 4);
  out.insert(out.end(), {'I', 'P', 'U', 'I'});
  put_u16(out, 1);  // format version
  put_u16(out, img.main_offset);
  put_u16(out, u16(img.words.size()));
  out.push_back(u8(img.policy));
  for (int i = 0; i < 5; i++) out.push_back(0);
  for (u32 w : img.words) put_u32(out, w);
  return out;
}

}  // namespace

u32 ProgramImage::checksum() const {
  auto body = image_body(*this);
  return crc32_bytes(body.data(), body.size());
}

std::vector<u8> ProgramImage::serialize() const {
  if (words.size() > kImemWords)
    throw Error(ErrorKind::ImageFormat, "image exceeds instruction memory");
  auto out = image_body(*this);
  put_u32(out, crc32_bytes(out.data(), out.size()));
  return out;
}

ProgramImage ProgramImage::parse(const std::vector<u8>& bytes) {
  auto fail = [](const std::string& m) -> ProgramImage {
    throw Error(ErrorKind::ImageFormat, m);
  };
  if (bytes.size() < 20) return fail("image truncated");
  if (bytes[0] != 'I' || bytes[1] != 'P' || bytes[2] != 'U' || bytes[3] != 'I')
    return fail("bad image magic");
  auto rd16 = [&](std::size_t o) { return u16(bytes[o] | bytes[o + 1] << 8); };
  auto rd32 = [&](std::size_t o) {
    return u32(bytes[o]) | u32(bytes[o + 1]) << 8 | u32(bytes[o + 2]) << 16 |
           u32(bytes[o + 3]) << 24;
  };
  if (rd16(4) != 1) return fail("unsupported image version");
  ProgramImage img;
  img.main_offset = rd16(6);
  u16 count = rd16(8);
  if (bytes[10] > kPolicyPermissive) return fail("bad policy tag");
  img.policy = Policy(bytes[10]);
  for (int i = 11; i < 16; i++)
    if (bytes[i] != 0) return fail("nonzero header padding");
  if (count > kImemWords) return fail("image exceeds instruction memory");
  if (bytes.size() != 16 + std::size_t(count) * 4 + 4)
    return fail("image length disagrees with word count");
  img.words.resize(count);
  for (u16 i = 0; i < count; i++) img.words[i] = rd32(16 + std::size_t(i) * 4);
  u32 stored = rd32(bytes.size() - 4);
  u32 actual = crc32_bytes(bytes.data(), bytes.size() - 4);
  if (stored != actual) return fail("image checksum mismatch");
  return img;
}

ImageReport validate_image(const ProgramImage& image, const AbiSpec& abi) {
  ImageReport rep;
  auto add = [&](const std::string& f) { rep.findings.push_back(f); };
  if (image.words.empty()) {
    add("image is empty");
    return rep;
  }
  if (image.words.size() > kImemWords)
    add("capacity exceeded: " + std::to_string(image.words.size()) + " words");
  if (image.main_offset >= image.words.size())
    add("main offset " + std::to_string(image.main_offset) + " out of range");
  if (image.words.size() <= kFinishSlot)
    add("finish region missing (no word at slot " + std::to_string(kFinishSlot) + ")");
  if (image.words[0] == 0)
    add("init region empty (slot 0 is padding)");
  if (image.words.size() > kFinishSlot && image.words[kFinishSlot] == 0)
    add("finish region starts with padding");
  for (std::size_t i = 0; i < image.words.size(); i++) {
    u32 w = image.words[i];
    if (w == 0) continue;  // gap padding
    Instruction in;
    try {
      in = decode(w);
    } catch (const Error&) {
      add("slot " + std::to_string(i) + ": illegal encoding 0x" + to_hex(w));
      continue;
    }
    auto check_sig = [&](const SrcTag& s) {
      if (s.ioreg && !abi.has_ioreg(s.idx))
        add("slot " + std::to_string(i) + ": references undeclared signal x" +
            std::to_string(s.idx));
    };
    switch (in.op) {
      case Op::kHash:
      case Op::kMvio:
      case Op::kBeqi:
      case Op::kBnei:
      case Op::kStio:
        check_sig(in.src);
        break;
      default:
        break;
    }
    u32 tgt = kImemWords;
    if (in.op == Op::kBeqi || in.op == Op::kBnei || in.op == Op::kRegtimer)
      tgt = in.target;
    else if (in.op == Op::kJal)
      tgt = u32(i32(i) + in.imm / 4);
    else if (in.op == Op::kBeq || in.op == Op::kBne || in.op == Op::kBlt ||
             in.op == Op::kBge || in.op == Op::kBltu || in.op == Op::kBgeu)
      tgt = u32(i32(i) + in.imm / 4);
    if (tgt != kImemWords && tgt >= image.words.size())
      add("slot " + std::to_string(i) + ": control transfer past image end");
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Assembler
// ---------------------------------------------------------------------------

namespace {

enum class Section { kNone, kInit, kMain, kFinish };

enum class Fixup { kNone, kBranchRel, kJal, kAbsTarget };

struct Pending {
  Instruction in;
  int line = 0;
  Fixup fixup = Fixup::kNone;
  std::string label;
};

struct AsmCtx {
  const AbiSpec* abi = nullptr;
  std::string origin;
  std::vector<Pending> sec[4];
  Section cur = Section::kNone;
  std::map<std::string, std::pair<Section, u32>> labels;
  Policy policy = kPolicyPermissive;
  bool has[4] = {false, false, false, false};
  int line = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorKind::Syntax,
                origin + ":" + std::to_string(line) + ": " + msg);
  }

  // Structurally fine but the value does not fit the instruction field.
  [[noreturn]] void fail_encoding(const std::string& msg) const {
    throw Error(ErrorKind::Encoding,
                origin + ":" + std::to_string(line) + ": " + msg);
  }
};

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool is_ident(const std::string& s) {
  if (s.empty() || !(std::isalpha(u8(s[0])) || s[0] == '_')) return false;
  for (char c : s)
    if (!(std::isalnum(u8(c)) || c == '_')) return false;
  return true;
}

std::optional<u8> parse_gpr(const std::string& t) {
  if (t.size() < 2 || t[0] != 'r') return std::nullopt;
  for (std::size_t i = 1; i < t.size(); i++)
    if (!std::isdigit(u8(t[i]))) return std::nullopt;
  int v = std::atoi(t.c_str() + 1);
  if (v >= int(kNumGprs)) return std::nullopt;
  return u8(v);
}

std::optional<SrcTag> parse_ioreg(const std::string& t) {
  std::string base = t;
  bool high = false;
  if (base.size() > 3 && base.substr(base.size() - 3) == ".hi") {
    high = true;
    base = base.substr(0, base.size() - 3);
  }
  if (base.size() < 2 || base[0] != 'x') return std::nullopt;
  for (std::size_t i = 1; i < base.size(); i++)
    if (!std::isdigit(u8(base[i]))) return std::nullopt;
  int v = std::atoi(base.c_str() + 1);
  if (v >= int(kNumIoRegs)) return std::nullopt;
  return SrcTag{u8(v), true, high};
}

std::optional<i64> parse_int(const std::string& t) {
  if (t.empty()) return std::nullopt;
  std::size_t i = 0;
  bool neg = false;
  if (t[i] == '-' || t[i] == '+') {
    neg = t[i] == '-';
    i++;
  }
  if (i >= t.size()) return std::nullopt;
  int base = 10;
  if (t.size() - i > 2 && t[i] == '0' && (t[i + 1] == 'x' || t[i + 1] == 'X')) {
    base = 16;
    i += 2;
  }
  i64 v = 0;
  for (; i < t.size(); i++) {
    int d;
    char c = std::tolower(u8(t[i]));
    if (std::isdigit(u8(c))) d = c - '0';
    else if (base == 16 && c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else return std::nullopt;
    v = v * base + d;
    if (v > (i64(1) << 40)) return std::nullopt;
  }
  return neg ? -v : v;
}

std::vector<std::string> split_ops(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  cur = trim(cur);
  if (!cur.empty() || !out.empty()) out.push_back(cur);
  return out;
}

class Assembler {
 public:
  Assembler(const std::string& src, const AbiSpec& abi,
            const std::string& origin)
      : src_(src) {
    ctx_.abi = &abi;
    ctx_.origin = origin;
  }

  ProgramImage run() {
    parse_lines();
    return layout();
  }

 private:
  AsmCtx ctx_;
  const std::string& src_;

  void emit(const Instruction& in, Fixup f = Fixup::kNone,
            const std::string& label = {}) {
    if (ctx_.cur == Section::kNone)
      ctx_.fail("instruction outside of init/_main/finish");
    ctx_.sec[int(ctx_.cur)].push_back({in, ctx_.line, f, label});
  }

  void check_sig(const SrcTag& s) {
    if (s.ioreg && !ctx_.abi->has_ioreg(s.idx))
      ctx_.fail("unknown signal x" + std::to_string(s.idx));
  }

  void define_label(const std::string& name) {
    if (name == "init" || name == "_main" || name == "finish") {
      Section s = name == "init" ? Section::kInit
                  : name == "_main" ? Section::kMain
                                    : Section::kFinish;
      if (ctx_.has[int(s)]) ctx_.fail("duplicate section " + name);
      ctx_.has[int(s)] = true;
      ctx_.cur = s;
      return;
    }
    if (ctx_.cur == Section::kNone) ctx_.fail("label outside of a section");
    if (ctx_.labels.count(name)) ctx_.fail("duplicate label " + name);
    ctx_.labels[name] = {ctx_.cur, u32(ctx_.sec[int(ctx_.cur)].size())};
  }

  void parse_lines() {
    std::istringstream is(src_);
    std::string raw;
    while (std::getline(is, raw)) {
      ctx_.line++;
      auto sc = raw.find(';');
      std::string text = trim(sc == std::string::npos ? raw : raw.substr(0, sc));
      if (text.empty()) continue;
      if (text[0] == '.') {
        parse_directive(text);
        continue;
      }
      // labels: "name:" prefixes, possibly several, then an optional instr
      for (;;) {
        std::size_t c = text.find(':');
        if (c == std::string::npos) break;
        std::string head = trim(text.substr(0, c));
        if (!is_ident(head)) break;
        define_label(head);
        text = trim(text.substr(c + 1));
        if (text.empty()) break;
      }
      if (!text.empty()) parse_instr(text);
    }
  }

  void parse_directive(const std::string& text) {
    std::istringstream is(text);
    std::string name, arg;
    is >> name >> arg;
    if (name == ".policy") {
      try {
        ctx_.policy = policy_from_name(arg);
      } catch (const Error&) {
        ctx_.fail("unknown policy tag '" + arg + "'");
      }
    } else {
      ctx_.fail("unknown directive " + name);
    }
  }

  u8 want_gpr(const std::string& t) {
    auto r = parse_gpr(t);
    if (!r) ctx_.fail("expected GPR, got '" + t + "'");
    return *r;
  }

  SrcTag want_src(const std::string& t) {
    if (auto r = parse_gpr(t)) return SrcTag{*r, false, false};
    if (auto x = parse_ioreg(t)) {
      check_sig(*x);
      return *x;
    }
    ctx_.fail("expected register or signal, got '" + t + "'");
  }

  i64 want_int(const std::string& t, i64 lo, i64 hi, const char* what) {
    auto v = parse_int(t);
    if (!v) ctx_.fail(std::string("expected ") + what + ", got '" + t + "'");
    if (*v < lo || *v > hi)
      ctx_.fail_encoding(std::string(what) + " out of range: " +
                         std::to_string(*v));
    return *v;
  }

  std::string want_label(const std::string& t) {
    if (!is_ident(t)) ctx_.fail("expected label, got '" + t + "'");
    return t;
  }

  void need_ops(const std::vector<std::string>& ops, std::size_t n,
                const char* mn) {
    if (ops.size() != n)
      ctx_.fail(std::string(mn) + " expects " + std::to_string(n) +
                " operands, got " + std::to_string(ops.size()));
  }

  void emit_li(u8 rd, i64 value) {
    u32 v = u32(value);
    i32 sv = i32(v);
    if (sv >= -2048 && sv <= 2047) {
      emit({.op = Op::kAddi, .rd = rd, .rs1 = 0, .imm = sv});
      return;
    }
    u32 hi = (v + 0x800) >> 12;
    i32 lo = i32(v << 20) >> 20;
    emit({.op = Op::kLui, .rd = rd, .imm = i32(hi & 0xFFFFF)});
    if (lo != 0) emit({.op = Op::kAddi, .rd = rd, .rs1 = rd, .imm = lo});
  }

  void parse_instr(const std::string& text) {
    std::size_t sp = text.find_first_of(" \t");
    std::string mn = sp == std::string::npos ? text : text.substr(0, sp);
    std::vector<std::string> ops =
        sp == std::string::npos ? std::vector<std::string>{}
                                : split_ops(trim(text.substr(sp)));
    for (const auto& o : ops)
      if (o.empty()) ctx_.fail("empty operand");

    static const std::map<std::string, Op> rrr{
        {"add", Op::kAdd}, {"sub", Op::kSub}, {"sll", Op::kSll},
        {"slt", Op::kSlt}, {"sltu", Op::kSltu}, {"xor", Op::kXor},
        {"srl", Op::kSrl}, {"sra", Op::kSra}, {"or", Op::kOr},
        {"and", Op::kAnd}};
    static const std::map<std::string, Op> rri{
        {"addi", Op::kAddi}, {"slti", Op::kSlti}, {"sltiu", Op::kSltiu},
        {"xori", Op::kXori}, {"ori", Op::kOri},   {"andi", Op::kAndi}};
    static const std::map<std::string, Op> shifts{
        {"slli", Op::kSlli}, {"srli", Op::kSrli}, {"srai", Op::kSrai}};
    static const std::map<std::string, Op> loads{
        {"lb", Op::kLb},   {"lh", Op::kLh},   {"lw", Op::kLw},
        {"lbu", Op::kLbu}, {"lhu", Op::kLhu}, {"ld", Op::kLw}};
    static const std::map<std::string, Op> stores{
        {"sb", Op::kSb}, {"sh", Op::kSh}, {"sw", Op::kSw}};
    static const std::map<std::string, Op> bcond{
        {"blt", Op::kBlt},   {"bge", Op::kBge},
        {"bltu", Op::kBltu}, {"bgeu", Op::kBgeu}};

    if (auto it = rrr.find(mn); it != rrr.end()) {
      need_ops(ops, 3, mn.c_str());
      emit({.op = it->second, .rd = want_gpr(ops[0]), .rs1 = want_gpr(ops[1]),
            .rs2 = want_gpr(ops[2])});
    } else if (auto it = rri.find(mn); it != rri.end()) {
      need_ops(ops, 3, mn.c_str());
      emit({.op = it->second, .rd = want_gpr(ops[0]), .rs1 = want_gpr(ops[1]),
            .imm = i32(want_int(ops[2], -2048, 2047, "immediate"))});
    } else if (auto it = shifts.find(mn); it != shifts.end()) {
      need_ops(ops, 3, mn.c_str());
      emit({.op = it->second, .rd = want_gpr(ops[0]), .rs1 = want_gpr(ops[1]),
            .imm = i32(want_int(ops[2], 0, 31, "shift amount"))});
    } else if (auto it = loads.find(mn); it != loads.end()) {
      need_ops(ops, 3, mn.c_str());
      emit({.op = it->second, .rd = want_gpr(ops[0]), .rs1 = want_gpr(ops[1]),
            .imm = i32(want_int(ops[2], -2048, 2047, "load offset"))});
    } else if (mn == "st") {
      need_ops(ops, 3, "st");
      if (auto x = parse_ioreg(ops[0])) {
        check_sig(*x);
        emit({.op = Op::kStio, .rs1 = want_gpr(ops[1]),
              .imm = i32(want_int(ops[2], -1024, 1023, "store offset")),
              .src = *x});
      } else {
        emit({.op = Op::kSw, .rs1 = want_gpr(ops[1]), .rs2 = want_gpr(ops[0]),
              .imm = i32(want_int(ops[2], -2048, 2047, "store offset"))});
      }
    } else if (auto it = stores.find(mn); it != stores.end()) {
      need_ops(ops, 3, mn.c_str());
      emit({.op = it->second, .rs1 = want_gpr(ops[1]),
            .rs2 = want_gpr(ops[0]),
            .imm = i32(want_int(ops[2], -2048, 2047, "store offset"))});
    } else if (mn == "beq" || mn == "bne") {
      need_ops(ops, 3, mn.c_str());
      SrcTag src = want_src(ops[0]);
      std::string label = want_label(ops[2]);
      if (auto r2 = parse_gpr(ops[1])) {
        if (src.ioreg)
          ctx_.fail("signal compare takes an immediate, not a register");
        emit({.op = mn == "beq" ? Op::kBeq : Op::kBne, .rs1 = src.idx,
              .rs2 = *r2},
             Fixup::kBranchRel, label);
      } else {
        u8 cmp = u8(want_int(ops[1], 0, 3, "comparand"));
        emit({.op = mn == "beq" ? Op::kBeqi : Op::kBnei, .src = src,
              .cmp = cmp},
             Fixup::kAbsTarget, label);
      }
    } else if (auto it = bcond.find(mn); it != bcond.end()) {
      need_ops(ops, 3, mn.c_str());
      emit({.op = it->second, .rs1 = want_gpr(ops[0]),
            .rs2 = want_gpr(ops[1])},
           Fixup::kBranchRel, want_label(ops[2]));
    } else if (mn == "jal") {
      need_ops(ops, 2, "jal");
      emit({.op = Op::kJal, .rd = want_gpr(ops[0])}, Fixup::kJal,
           want_label(ops[1]));
    } else if (mn == "j") {
      need_ops(ops, 1, "j");
      emit({.op = Op::kJal, .rd = 0}, Fixup::kJal, want_label(ops[0]));
    } else if (mn == "jalr") {
      need_ops(ops, 3, "jalr");
      emit({.op = Op::kJalr, .rd = want_gpr(ops[0]), .rs1 = want_gpr(ops[1]),
            .imm = i32(want_int(ops[2], -2048, 2047, "offset"))});
    } else if (mn == "lui") {
      need_ops(ops, 2, "lui");
      emit({.op = Op::kLui, .rd = want_gpr(ops[0]),
            .imm = i32(want_int(ops[1], 0, 0xFFFFF, "upper immediate"))});
    } else if (mn == "li") {
      need_ops(ops, 2, "li");
      emit_li(want_gpr(ops[0]),
              want_int(ops[1], -(i64(1) << 31), (i64(1) << 32) - 1, "immediate"));
    } else if (mn == "mv") {
      need_ops(ops, 2, "mv");
      u8 rd = want_gpr(ops[0]);
      SrcTag src = want_src(ops[1]);
      if (src.ioreg)
        emit({.op = Op::kMvio, .rd = rd, .src = src});
      else
        emit({.op = Op::kAddi, .rd = rd, .rs1 = src.idx, .imm = 0});
    } else if (mn == "nop") {
      need_ops(ops, 0, "nop");
      emit({.op = Op::kAddi});
    } else if (mn == "hash") {
      need_ops(ops, 2, "hash");
      emit({.op = Op::kHash, .rd = want_gpr(ops[0]), .src = want_src(ops[1])});
    } else if (mn == "hist") {
      need_ops(ops, 0, "hist");
      emit({.op = Op::kHist});
    } else if (mn == "ret") {
      need_ops(ops, 0, "ret");
      emit({.op = Op::kRet});
    } else if (mn == "loopn") {
      need_ops(ops, 1, "loopn");
      emit({.op = Op::kLoopn,
            .imm = i32(want_int(ops[0], 0, (1 << 17) - 1, "loop count"))});
    } else if (mn == "emit") {
      need_ops(ops, 2, "emit");
      emit({.op = Op::kEmit, .rs1 = want_gpr(ops[0]),
            .imm = i32(want_int(ops[1], 1, 4095, "emit length"))});
    } else if (mn == "regtimer") {
      need_ops(ops, 2, "regtimer");
      std::string label = want_label(ops[1]);
      if (auto r = parse_gpr(ops[0])) {
        emit({.op = Op::kRegtimer, .rs1 = *r}, Fixup::kAbsTarget, label);
      } else {
        // Literal period: materialize into the reserved assembler temp r31.
        // Zero assembles fine and faults at execution, like a zero register.
        emit_li(31, want_int(ops[0], 0, (i64(1) << 32) - 1, "period"));
        emit({.op = Op::kRegtimer, .rs1 = 31}, Fixup::kAbsTarget, label);
      }
    } else {
      ctx_.fail("unknown mnemonic '" + mn + "'");
    }
  }

  ProgramImage layout() {
    if (!ctx_.has[int(Section::kMain)])
      throw Error(ErrorKind::Syntax, ctx_.origin + ": missing _main section");
    auto& init = ctx_.sec[int(Section::kInit)];
    auto& main = ctx_.sec[int(Section::kMain)];
    auto& fin = ctx_.sec[int(Section::kFinish)];
    if (init.empty()) init.push_back({Instruction{.op = Op::kRet}, 0});
    if (fin.empty()) fin.push_back({Instruction{.op = Op::kRet}, 0});
    if (main.empty()) main.push_back({Instruction{.op = Op::kRet}, 0});

    u32 main_base = u32(init.size());
    if (main_base + main.size() > kFinishSlot)
      throw Error(ErrorKind::ImageFormat,
                  ctx_.origin + ": capacity exceeded (" +
                      std::to_string(main_base + main.size()) +
                      " words before the finish region)");
    if (fin.size() > kFinishWords)
      throw Error(ErrorKind::ImageFormat,
                  ctx_.origin + ": finish region exceeds " +
                      std::to_string(kFinishWords) + " words");

    auto sec_base = [&](Section s) -> u32 {
      switch (s) {
        case Section::kInit: return 0;
        case Section::kMain: return main_base;
        case Section::kFinish: return kFinishSlot;
        default: return 0;
      }
    };

    auto resolve = [&](const Pending& p) -> u32 {
      auto it = ctx_.labels.find(p.label);
      if (it == ctx_.labels.end()) {
        if (p.label == "init") return 0;
        if (p.label == "_main") return main_base;
        if (p.label == "finish") return kFinishSlot;
        throw Error(ErrorKind::Syntax, ctx_.origin + ":" +
                                           std::to_string(p.line) +
                                           ": undefined label " + p.label);
      }
      return sec_base(it->second.first) + it->second.second;
    };

    ProgramImage img;
    img.policy = ctx_.policy;
    img.main_offset = u16(main_base);
    // The container always spans the full instruction memory; slots no
    // section occupies stay zero and load as gap padding.
    img.words.assign(kImemWords, 0);

    auto place = [&](std::vector<Pending>& sec, u32 base) {
      for (std::size_t i = 0; i < sec.size(); i++) {
        Pending& p = sec[i];
        u32 pc = base + u32(i);
        if (p.fixup == Fixup::kBranchRel || p.fixup == Fixup::kJal) {
          i64 delta = (i64(resolve(p)) - pc) * 4;
          i64 lim = p.fixup == Fixup::kBranchRel ? 4094 : 1048574;
          if (delta < -lim - 2 || delta > lim)
            throw Error(ErrorKind::Encoding,
                        ctx_.origin + ":" + std::to_string(p.line) +
                            ": branch target out of range");
          p.in.imm = i32(delta);
        } else if (p.fixup == Fixup::kAbsTarget) {
          p.in.target = u16(resolve(p));
        }
        img.words[pc] = encode(p.in);
      }
    };
    place(init, 0);
    place(main, main_base);
    place(fin, kFinishSlot);
    return img;
  }
};

}  // namespace

ProgramImage assemble(const std::string& source, const AbiSpec& abi,
                      const std::string& origin) {
  return Assembler(source, abi, origin).run();
}

// ---------------------------------------------------------------------------
// Disassembler
// ---------------------------------------------------------------------------

namespace {

std::string src_str(const SrcTag& s) {
  if (!s.ioreg) return "r" + std::to_string(s.idx);
  return "x" + std::to_string(s.idx) + (s.high ? ".hi" : "");
}

std::string imm_str(i32 v) { return std::to_string(v); }

}  // namespace

std::string disassemble(const ProgramImage& image) {
  std::set<u32> label_slots;
  auto each_instr = [&](auto&& fn) {
    for (std::size_t i = 0; i < image.words.size(); i++) {
      if (image.words[i] == 0) continue;  // gap padding
      fn(u32(i), decode(image.words[i]));
    }
  };
  each_instr([&](u32 pc, const Instruction& in) {
    switch (in.op) {
      case Op::kBeq: case Op::kBne: case Op::kBlt: case Op::kBge:
      case Op::kBltu: case Op::kBgeu: case Op::kJal:
        label_slots.insert(u32(i32(pc) + in.imm / 4));
        break;
      case Op::kBeqi: case Op::kBnei: case Op::kRegtimer:
        label_slots.insert(in.target);
        break;
      default:
        break;
    }
  });

  std::ostringstream os;
  os << ".policy " << policy_name(image.policy) << "\n";
  auto label_for = [&](u32 slot) { return "L" + std::to_string(slot); };
  each_instr([&](u32 pc, const Instruction& in) {
    if (pc == 0) os << "init:\n";
    if (pc == image.main_offset) os << "_main:\n";
    if (pc == kFinishSlot) os << "finish:\n";
    if (label_slots.count(pc)) os << label_for(pc) << ":\n";
    os << "    ";
    switch (in.op) {
      case Op::kAdd: case Op::kSub: case Op::kSll: case Op::kSlt:
      case Op::kSltu: case Op::kXor: case Op::kSrl: case Op::kSra:
      case Op::kOr: case Op::kAnd:
        os << op_name(in.op) << " r" << int(in.rd) << ", r" << int(in.rs1)
           << ", r" << int(in.rs2);
        break;
      case Op::kAddi: case Op::kSlti: case Op::kSltiu: case Op::kXori:
      case Op::kOri: case Op::kAndi: case Op::kSlli: case Op::kSrli:
      case Op::kSrai:
        os << op_name(in.op) << " r" << int(in.rd) << ", r" << int(in.rs1)
           << ", " << imm_str(in.imm);
        break;
      case Op::kLui:
        os << "lui r" << int(in.rd) << ", " << imm_str(in.imm);
        break;
      case Op::kLb: case Op::kLh: case Op::kLbu: case Op::kLhu:
        os << op_name(in.op) << " r" << int(in.rd) << ", r" << int(in.rs1)
           << ", " << imm_str(in.imm);
        break;
      case Op::kLw:
        os << "ld r" << int(in.rd) << ", r" << int(in.rs1) << ", "
           << imm_str(in.imm);
        break;
      case Op::kSb: case Op::kSh:
        os << op_name(in.op) << " r" << int(in.rs2) << ", r" << int(in.rs1)
           << ", " << imm_str(in.imm);
        break;
      case Op::kSw:
        os << "st r" << int(in.rs2) << ", r" << int(in.rs1) << ", "
           << imm_str(in.imm);
        break;
      case Op::kBeq: case Op::kBne: case Op::kBlt: case Op::kBge:
      case Op::kBltu: case Op::kBgeu:
        os << op_name(in.op) << " r" << int(in.rs1) << ", r" << int(in.rs2)
           << ", " << label_for(u32(i32(pc) + in.imm / 4));
        break;
      case Op::kJal:
        os << "jal r" << int(in.rd) << ", "
           << label_for(u32(i32(pc) + in.imm / 4));
        break;
      case Op::kJalr:
        os << "jalr r" << int(in.rd) << ", r" << int(in.rs1) << ", "
           << imm_str(in.imm);
        break;
      case Op::kHash:
        os << "hash r" << int(in.rd) << ", " << src_str(in.src);
        break;
      case Op::kHist:
        os << "hist";
        break;
      case Op::kRegtimer:
        os << "regtimer r" << int(in.rs1) << ", " << label_for(in.target);
        break;
      case Op::kLoopn:
        os << "loopn " << in.imm;
        break;
      case Op::kEmit:
        os << "emit r" << int(in.rs1) << ", " << in.imm;
        break;
      case Op::kRet:
        os << "ret";
        break;
      case Op::kMvio:
        os << "mv r" << int(in.rd) << ", " << src_str(in.src);
        break;
      case Op::kBeqi: case Op::kBnei:
        os << (in.op == Op::kBeqi ? "beq " : "bne ") << src_str(in.src) << ", "
           << int(in.cmp) << ", " << label_for(in.target);
        break;
      case Op::kStio:
        os << "st " << src_str(in.src) << ", r" << int(in.rs1) << ", "
           << imm_str(in.imm);
        break;
    }
    os << "\n";
  });
  return os.str();
}

}  // namespace ipu
