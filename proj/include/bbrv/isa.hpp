#pragma once

#include <cstdint>
#include <string>
#include <variant>

namespace bbrv::isa {

// RV32IM plus the bb / lcnt extension.
enum class Op : uint8_t {
  Lui, Auipc, Jal, Jalr,
  Beq, Bne, Blt, Bge, Bltu, Bgeu,
  Lb, Lh, Lw, Lbu, Lhu, Sb, Sh, Sw,
  Addi, Slti, Sltiu, Xori, Ori, Andi, Slli, Srli, Srai,
  Add, Sub, Sll, Slt, Sltu, Xor, Srl, Sra, Or, And,
  Mul, Mulh, Mulhsu, Mulhu, Div, Divu, Rem, Remu,
  Ecall, Ebreak, Rdcycle,
  Bb, Lcnt,
};

struct Instruction {
  Op op = Op::Addi;
  uint8_t rd = 0, rs1 = 0, rs2 = 0;
  int32_t imm = 0;
  // bb fields: size counts the instructions following the bb itself.
  uint16_t bbSize = 0;
  bool bbSeq = false;
  uint8_t sFlags = 0, eFlags = 0;
  // lcnt: loop-set index (0..3) lives in the rd field position.
  uint8_t loopSet = 0;

  bool operator==(const Instruction&) const = default;
};

struct InstrClass {
  bool isControlFlow = false;
  bool isConditionalBranch = false;
  bool isCall = false;
  bool isLoad = false;
  bool isStore = false;
  bool isBb = false;
  bool isLcnt = false;
};

enum class DecodeError { IllegalInstruction, IllegalBb, IllegalLcnt };
enum class EncodeError { UnencodableImmediate };

using DecodeResult = std::variant<Instruction, DecodeError>;
using EncodeResult = std::variant<uint32_t, EncodeError>;

DecodeResult decode(uint32_t word);
EncodeResult encode(const Instruction& ins);
InstrClass classify(const Instruction& ins);

const char* mnemonic(Op op);

// Register operands actually read (x0 entries excluded) and the register
// written (0 when none; x0 is never a definition). ecall reads a7/a0.
struct RegUse {
  uint8_t reads[2] = {0, 0};
  uint8_t nReads = 0;
  uint8_t def = 0;
};
RegUse regUse(const Instruction& ins);

inline bool decodeOk(const DecodeResult& r) { return std::holds_alternative<Instruction>(r); }

}  // namespace bbrv::isa
