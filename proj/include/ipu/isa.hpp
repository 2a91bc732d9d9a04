// Copyright (c) 2026 ipusim contributors
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "ipu/common.hpp"
#include "ipu/trace.hpp"

namespace ipu {

// ---------------------------------------------------------------------------
// Machine geometry
// ---------------------------------------------------------------------------

inline constexpr u32 kImemWords = 2048;    // 8 KB of 32-bit instructions
inline constexpr u32 kFinishSlot = 2032;   // finish region: last 16 slots
inline constexpr u32 kFinishWords = kImemWords - kFinishSlot;
inline constexpr u32 kDmemBytes = 32768;   // scratchpad
inline constexpr u32 kNumGprs = 32;
inline constexpr u32 kNumIoRegs = 32;

// ---------------------------------------------------------------------------
// Instruction model
// ---------------------------------------------------------------------------
//
// Base integer subset uses the standard 32-bit encodings (opcodes 0x03,
// 0x13, 0x23, 0x33, 0x37, 0x63, 0x67, 0x6F). The introspection extension
// lives in the two custom opcode spaces:
//
//   custom-0 (0x0B), selected by funct3:
//     0 hash      rd, src           src = GPR[19:15], bit25 = IOReg tag,
//                                   bit26 = high-half select
//     1 hist                        all other fields zero
//     2 regtimer  rs1, target       period GPR in [19:15],
//                                   11-bit absolute word target in [31:21]
//     3 loopn     count             17-bit unsigned count in [31:15]
//     4 emit      rs1, len          buffer GPR in [19:15],
//                                   12-bit unsigned byte length in [31:20]
//     5 ret                         all other fields zero
//
//   custom-1 (0x2B), tagged-operand forms, selected by funct3:
//     0 mv        rd, xN[.hi]       IOReg idx in [19:15], half in [20]
//     1 beq/bne   src, imm2, tgt    src idx [19:15], IOReg tag [20],
//                                   half [21], cond [22] (0=eq), imm2
//                                   [24:23], 11-bit absolute target in
//                                   [31:25] (hi 7) and [11:8] (lo 4)
//     2 st        xN[.hi], rs1, off data IOReg idx [24:20], half [25],
//                                   base GPR [19:15], signed 11-bit byte
//                                   offset in [31:26] (hi) and [11:7] (lo)
//
// Decoding is strict: reserved bits must be zero, anything else raises an
// Encoding error. The all-zero word never decodes (image gap padding).

enum class Op : u8 {
  // base register-register
  kAdd, kSub, kSll, kSlt, kSltu, kXor, kSrl, kSra, kOr, kAnd,
  // base register-immediate
  kAddi, kSlti, kSltiu, kXori, kOri, kAndi, kSlli, kSrli, kSrai, kLui,
  // memory
  kLb, kLh, kLw, kLbu, kLhu, kSb, kSh, kSw,
  // control
  kBeq, kBne, kBlt, kBge, kBltu, kBgeu, kJal, kJalr,
  // introspection extension, custom-0
  kHash, kHist, kRegtimer, kLoopn, kEmit, kRet,
  // introspection extension, custom-1 (tagged operands)
  kMvio, kBeqi, kBnei, kStio,
};

const char* op_name(Op op);

// Source operand that may name a GPR or an IOReg half.
struct SrcTag {
  u8 idx = 0;
  bool ioreg = false;
  bool high = false;  // only meaningful with ioreg
};

struct Instruction {
  Op op = Op::kRet;
  u8 rd = 0;
  u8 rs1 = 0;
  u8 rs2 = 0;
  i32 imm = 0;      // I/S/B/J/U immediate, loopn count, emit length
  SrcTag src{};     // hash/mvio/beqi/bnei/stio tagged operand
  u8 cmp = 0;       // beqi/bnei comparand, 0..3
  u16 target = 0;   // beqi/bnei/regtimer absolute word address
};

u32 encode(const Instruction& in);          // throws Error(Encoding)
Instruction decode(u32 word);               // throws Error(Encoding)
bool is_legal_encoding(u32 word);

// ---------------------------------------------------------------------------
// Program image
// ---------------------------------------------------------------------------
//
// Container layout: 16-byte header, `count` little-endian instruction words,
// 4-byte CRC-32 trailer over header+words.
//
//   offset  size  field
//   0       4     magic "IPUI"
//   4       2     format version (1)
//   6       2     main_offset (word slot of _main)
//   8       2     count (total words, gap padding included)
//   10      1     policy tag (0 closed, 1 restrictive, 2 permissive)
//   11      5     zero padding
//
// Slot 0 is the init region, `finish` occupies slot 2032 upward, and the
// unused stretch between the last main-region word and the finish region is
// zero-filled (the all-zero word is not executable).

enum Policy : u8 {
  kPolicyClosed = 0,
  kPolicyRestrictive = 1,
  kPolicyPermissive = 2,
};

const char* policy_name(Policy p);
Policy policy_from_name(const std::string& name);

struct ProgramImage {
  std::vector<u32> words;
  u16 main_offset = 0;
  Policy policy = kPolicyPermissive;
  std::string name;  // in-memory label only, not serialized

  u32 checksum() const;  // CRC-32 over header+words as serialized
  std::vector<u8> serialize() const;
  static ProgramImage parse(const std::vector<u8>& bytes);
};

struct ImageReport {
  std::vector<std::string> findings;
  bool valid() const { return findings.empty(); }
};

// Structural checks: capacity, init/_main/finish layout, decodability of
// non-gap words, IOReg references covered by the ABI.
ImageReport validate_image(const ProgramImage& image, const AbiSpec& abi);

// ---------------------------------------------------------------------------
// Assembler / disassembler
// ---------------------------------------------------------------------------
//
// Surface syntax: one instruction per line, `label:` prefixes (a line may be
// label-only), operands separated by commas, `;` starts a comment. GPRs are
// r0..r31, IORegs x0..x31 with an optional `.hi` suffix selecting the upper
// half of a 64-bit signal. Sections are introduced by the reserved labels
// `init`, `_main` and `finish`; init defaults to a bare `ret` at slot 0 and
// finish to a bare `ret` at slot 2032 when omitted.
//
// Pseudo-instructions: `li rd, imm32` (addi or lui+addi), `mv rd, rs`,
// `j label`, `nop`, `ld`/`st` (paper operand order: ld rd, rbase, off),
// and `regtimer <literal>, label`, which materializes the period into r31.
// r31 is therefore reserved as the assembler temporary.

ProgramImage assemble(const std::string& source, const AbiSpec& abi,
                      const std::string& origin = "<asm>");
std::string disassemble(const ProgramImage& image);

}  // namespace ipu
