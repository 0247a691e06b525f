#include "bbrv/isa.hpp"

namespace bbrv::isa {

namespace {

constexpr uint32_t kOpcLui = 0b0110111;
constexpr uint32_t kOpcAuipc = 0b0010111;
constexpr uint32_t kOpcJal = 0b1101111;
constexpr uint32_t kOpcJalr = 0b1100111;
constexpr uint32_t kOpcBranch = 0b1100011;
constexpr uint32_t kOpcLoad = 0b0000011;
constexpr uint32_t kOpcStore = 0b0100011;
constexpr uint32_t kOpcOpImm = 0b0010011;
constexpr uint32_t kOpcOp = 0b0110011;
constexpr uint32_t kOpcSystem = 0b1110011;
constexpr uint32_t kOpcBb = 0b0001011;    // custom-0
constexpr uint32_t kOpcLcnt = 0b0101011;  // custom-1
constexpr uint32_t kCsrCycle = 0xC00;

int32_t signExtend(uint32_t v, unsigned bits) {
  uint32_t m = 1u << (bits - 1);
  return static_cast<int32_t>((v ^ m) - m);
}

uint32_t bits(uint32_t w, unsigned hi, unsigned lo) {
  return (w >> lo) & ((1u << (hi - lo + 1)) - 1);
}

int32_t immI(uint32_t w) { return signExtend(bits(w, 31, 20), 12); }
int32_t immS(uint32_t w) { return signExtend(bits(w, 31, 25) << 5 | bits(w, 11, 7), 12); }
int32_t immB(uint32_t w) {
  uint32_t v = bits(w, 31, 31) << 12 | bits(w, 7, 7) << 11 | bits(w, 30, 25) << 5 |
               bits(w, 11, 8) << 1;
  return signExtend(v, 13);
}
int32_t immU(uint32_t w) { return static_cast<int32_t>(w & 0xFFFFF000u); }
int32_t immJ(uint32_t w) {
  uint32_t v = bits(w, 31, 31) << 20 | bits(w, 19, 12) << 12 | bits(w, 20, 20) << 11 |
               bits(w, 30, 21) << 1;
  return signExtend(v, 21);
}

bool fits(int32_t v, unsigned bits) {
  int32_t lo = -(1 << (bits - 1)), hi = (1 << (bits - 1)) - 1;
  return v >= lo && v <= hi;
}

}  // namespace

DecodeResult decode(uint32_t word) {
  uint32_t opc = word & 0x7F;
  uint8_t rd = static_cast<uint8_t>(bits(word, 11, 7));
  uint8_t rs1 = static_cast<uint8_t>(bits(word, 19, 15));
  uint8_t rs2 = static_cast<uint8_t>(bits(word, 24, 20));
  uint32_t f3 = bits(word, 14, 12);
  uint32_t f7 = bits(word, 31, 25);
  Instruction i;
  i.rd = rd;
  i.rs1 = rs1;
  i.rs2 = rs2;

  switch (opc) {
    case kOpcLui: i.op = Op::Lui; i.imm = immU(word); i.rs1 = i.rs2 = 0; return i;
    case kOpcAuipc: i.op = Op::Auipc; i.imm = immU(word); i.rs1 = i.rs2 = 0; return i;
    case kOpcJal: i.op = Op::Jal; i.imm = immJ(word); i.rs1 = i.rs2 = 0; return i;
    case kOpcJalr:
      if (f3 != 0) return DecodeError::IllegalInstruction;
      i.op = Op::Jalr; i.imm = immI(word); i.rs2 = 0; return i;
    case kOpcBranch: {
      static constexpr Op kBr[8] = {Op::Beq, Op::Bne, Op::Beq, Op::Beq,
                                    Op::Blt, Op::Bge, Op::Bltu, Op::Bgeu};
      if (f3 == 2 || f3 == 3) return DecodeError::IllegalInstruction;
      i.op = kBr[f3]; i.imm = immB(word); i.rd = 0; return i;
    }
    case kOpcLoad: {
      static constexpr Op kLd[8] = {Op::Lb, Op::Lh, Op::Lw, Op::Lb, Op::Lbu, Op::Lhu, Op::Lb, Op::Lb};
      if (f3 == 3 || f3 > 5) return DecodeError::IllegalInstruction;
      i.op = kLd[f3]; i.imm = immI(word); i.rs2 = 0; return i;
    }
    case kOpcStore: {
      static constexpr Op kSt[3] = {Op::Sb, Op::Sh, Op::Sw};
      if (f3 > 2) return DecodeError::IllegalInstruction;
      i.op = kSt[f3]; i.imm = immS(word); i.rd = 0; return i;
    }
    case kOpcOpImm: {
      i.imm = immI(word);
      i.rs2 = 0;
      switch (f3) {
        case 0: i.op = Op::Addi; return i;
        case 2: i.op = Op::Slti; return i;
        case 3: i.op = Op::Sltiu; return i;
        case 4: i.op = Op::Xori; return i;
        case 6: i.op = Op::Ori; return i;
        case 7: i.op = Op::Andi; return i;
        case 1:
          if (f7 != 0) return DecodeError::IllegalInstruction;
          i.op = Op::Slli; i.imm = static_cast<int32_t>(rs2); i.rs2 = 0; return i;
        case 5:
          if (f7 == 0) { i.op = Op::Srli; i.imm = static_cast<int32_t>(rs2); i.rs2 = 0; return i; }
          if (f7 == 0b0100000) { i.op = Op::Srai; i.imm = static_cast<int32_t>(rs2); i.rs2 = 0; return i; }
          return DecodeError::IllegalInstruction;
      }
      return DecodeError::IllegalInstruction;
    }
    case kOpcOp: {
      i.imm = 0;
      if (f7 == 0b0000001) {
        static constexpr Op kM[8] = {Op::Mul, Op::Mulh, Op::Mulhsu, Op::Mulhu,
                                     Op::Div, Op::Divu, Op::Rem, Op::Remu};
        i.op = kM[f3];
        return i;
      }
      if (f7 == 0) {
        static constexpr Op kA[8] = {Op::Add, Op::Sll, Op::Slt, Op::Sltu,
                                     Op::Xor, Op::Srl, Op::Or, Op::And};
        i.op = kA[f3];
        return i;
      }
      if (f7 == 0b0100000) {
        if (f3 == 0) { i.op = Op::Sub; return i; }
        if (f3 == 5) { i.op = Op::Sra; return i; }
      }
      return DecodeError::IllegalInstruction;
    }
    case kOpcSystem:
      if (word == 0x00000073) { i = Instruction{}; i.op = Op::Ecall; return i; }
      if (word == 0x00100073) { i = Instruction{}; i.op = Op::Ebreak; return i; }
      if (f3 == 0b010 && rs1 == 0 && bits(word, 31, 20) == kCsrCycle) {
        i.op = Op::Rdcycle; i.rs1 = i.rs2 = 0; i.imm = 0; return i;
      }
      return DecodeError::IllegalInstruction;
    case kOpcBb: {
      uint32_t n = bits(word, 31, 16);
      if (n == 0) return DecodeError::IllegalBb;
      i = Instruction{};
      i.op = Op::Bb;
      i.bbSize = static_cast<uint16_t>(n);
      i.bbSeq = bits(word, 7, 7) != 0;
      i.sFlags = static_cast<uint8_t>(bits(word, 11, 8));
      i.eFlags = static_cast<uint8_t>(bits(word, 15, 12));
      return i;
    }
    case kOpcLcnt: {
      if (f3 != 0) return DecodeError::IllegalInstruction;
      if (rd > 3) return DecodeError::IllegalLcnt;
      i.op = Op::Lcnt;
      i.imm = immI(word);
      i.loopSet = rd;
      i.rd = 0;
      i.rs2 = 0;
      return i;
    }
    default:
      return DecodeError::IllegalInstruction;
  }
}

namespace {

uint32_t encR(uint32_t f7, uint8_t rs2, uint8_t rs1, uint32_t f3, uint8_t rd, uint32_t opc) {
  return f7 << 25 | uint32_t(rs2) << 20 | uint32_t(rs1) << 15 | f3 << 12 | uint32_t(rd) << 7 | opc;
}
uint32_t encI(int32_t imm, uint8_t rs1, uint32_t f3, uint8_t rd, uint32_t opc) {
  return (static_cast<uint32_t>(imm) & 0xFFF) << 20 | uint32_t(rs1) << 15 | f3 << 12 |
         uint32_t(rd) << 7 | opc;
}
uint32_t encS(int32_t imm, uint8_t rs2, uint8_t rs1, uint32_t f3, uint32_t opc) {
  uint32_t u = static_cast<uint32_t>(imm);
  return bits(u, 11, 5) << 25 | uint32_t(rs2) << 20 | uint32_t(rs1) << 15 | f3 << 12 |
         bits(u, 4, 0) << 7 | opc;
}
uint32_t encB(int32_t imm, uint8_t rs2, uint8_t rs1, uint32_t f3) {
  uint32_t u = static_cast<uint32_t>(imm);
  return bits(u, 12, 12) << 31 | bits(u, 10, 5) << 25 | uint32_t(rs2) << 20 |
         uint32_t(rs1) << 15 | f3 << 12 | bits(u, 4, 1) << 8 | bits(u, 11, 11) << 7 | kOpcBranch;
}
uint32_t encJ(int32_t imm, uint8_t rd) {
  uint32_t u = static_cast<uint32_t>(imm);
  return bits(u, 20, 20) << 31 | bits(u, 10, 1) << 21 | bits(u, 11, 11) << 20 |
         bits(u, 19, 12) << 12 | uint32_t(rd) << 7 | kOpcJal;
}

}  // namespace

EncodeResult encode(const Instruction& i) {
  auto bad = EncodeError::UnencodableImmediate;
  switch (i.op) {
    case Op::Lui:
    case Op::Auipc:
      if (i.imm & 0xFFF) return bad;
      return static_cast<uint32_t>(i.imm) | uint32_t(i.rd) << 7 |
             (i.op == Op::Lui ? kOpcLui : kOpcAuipc);
    case Op::Jal:
      if (!fits(i.imm, 21) || (i.imm & 1)) return bad;
      return encJ(i.imm, i.rd);
    case Op::Jalr:
      if (!fits(i.imm, 12)) return bad;
      return encI(i.imm, i.rs1, 0, i.rd, kOpcJalr);
    case Op::Beq: case Op::Bne: case Op::Blt: case Op::Bge: case Op::Bltu: case Op::Bgeu: {
      if (!fits(i.imm, 13) || (i.imm & 1)) return bad;
      uint32_t f3 = i.op == Op::Beq ? 0 : i.op == Op::Bne ? 1 : i.op == Op::Blt ? 4
                  : i.op == Op::Bge ? 5 : i.op == Op::Bltu ? 6 : 7;
      return encB(i.imm, i.rs2, i.rs1, f3);
    }
    case Op::Lb: case Op::Lh: case Op::Lw: case Op::Lbu: case Op::Lhu: {
      if (!fits(i.imm, 12)) return bad;
      uint32_t f3 = i.op == Op::Lb ? 0 : i.op == Op::Lh ? 1 : i.op == Op::Lw ? 2
                  : i.op == Op::Lbu ? 4 : 5;
      return encI(i.imm, i.rs1, f3, i.rd, kOpcLoad);
    }
    case Op::Sb: case Op::Sh: case Op::Sw: {
      if (!fits(i.imm, 12)) return bad;
      uint32_t f3 = i.op == Op::Sb ? 0 : i.op == Op::Sh ? 1 : 2;
      return encS(i.imm, i.rs2, i.rs1, f3, kOpcStore);
    }
    case Op::Addi: case Op::Slti: case Op::Sltiu: case Op::Xori: case Op::Ori: case Op::Andi: {
      if (!fits(i.imm, 12)) return bad;
      uint32_t f3 = i.op == Op::Addi ? 0 : i.op == Op::Slti ? 2 : i.op == Op::Sltiu ? 3
                  : i.op == Op::Xori ? 4 : i.op == Op::Ori ? 6 : 7;
      return encI(i.imm, i.rs1, f3, i.rd, kOpcOpImm);
    }
    case Op::Slli: case Op::Srli: case Op::Srai: {
      if (i.imm < 0 || i.imm > 31) return bad;
      uint32_t f3 = i.op == Op::Slli ? 1 : 5;
      uint32_t f7 = i.op == Op::Srai ? 0b0100000u : 0u;
      return f7 << 25 | uint32_t(i.imm) << 20 | uint32_t(i.rs1) << 15 | f3 << 12 |
             uint32_t(i.rd) << 7 | kOpcOpImm;
    }
    case Op::Add: case Op::Sub: case Op::Sll: case Op::Slt: case Op::Sltu:
    case Op::Xor: case Op::Srl: case Op::Sra: case Op::Or: case Op::And: {
      uint32_t f7 = (i.op == Op::Sub || i.op == Op::Sra) ? 0b0100000u : 0u;
      uint32_t f3 = i.op == Op::Add || i.op == Op::Sub ? 0 : i.op == Op::Sll ? 1
                  : i.op == Op::Slt ? 2 : i.op == Op::Sltu ? 3 : i.op == Op::Xor ? 4
                  : i.op == Op::Srl || i.op == Op::Sra ? 5 : i.op == Op::Or ? 6 : 7;
      return encR(f7, i.rs2, i.rs1, f3, i.rd, kOpcOp);
    }
    case Op::Mul: case Op::Mulh: case Op::Mulhsu: case Op::Mulhu:
    case Op::Div: case Op::Divu: case Op::Rem: case Op::Remu: {
      uint32_t f3 = i.op == Op::Mul ? 0 : i.op == Op::Mulh ? 1 : i.op == Op::Mulhsu ? 2
                  : i.op == Op::Mulhu ? 3 : i.op == Op::Div ? 4 : i.op == Op::Divu ? 5
                  : i.op == Op::Rem ? 6 : 7;
      return encR(0b0000001, i.rs2, i.rs1, f3, i.rd, kOpcOp);
    }
    case Op::Ecall: return 0x00000073u;
    case Op::Ebreak: return 0x00100073u;
    case Op::Rdcycle: return kCsrCycle << 20 | 0b010u << 12 | uint32_t(i.rd) << 7 | kOpcSystem;
    case Op::Bb:
      if (i.bbSize == 0) return bad;
      return uint32_t(i.bbSize) << 16 | uint32_t(i.eFlags & 0xF) << 12 |
             uint32_t(i.sFlags & 0xF) << 8 | uint32_t(i.bbSeq ? 1 : 0) << 7 | kOpcBb;
    case Op::Lcnt:
      if (!fits(i.imm, 12) || i.loopSet > 3) return bad;
      return encI(i.imm, i.rs1, 0, i.loopSet, kOpcLcnt);
  }
  return bad;
}

InstrClass classify(const Instruction& i) {
  InstrClass c;
  switch (i.op) {
    case Op::Jal: case Op::Jalr:
      c.isControlFlow = true;
      c.isCall = i.rd != 0;
      break;
    case Op::Beq: case Op::Bne: case Op::Blt: case Op::Bge: case Op::Bltu: case Op::Bgeu:
      c.isControlFlow = true;
      c.isConditionalBranch = true;
      break;
    case Op::Lb: case Op::Lh: case Op::Lw: case Op::Lbu: case Op::Lhu:
      c.isLoad = true;
      break;
    case Op::Sb: case Op::Sh: case Op::Sw:
      c.isStore = true;
      break;
    case Op::Bb: c.isBb = true; break;
    case Op::Lcnt: c.isLcnt = true; break;
    default: break;
  }
  return c;
}

const char* mnemonic(Op op) {
  switch (op) {
    case Op::Lui: return "lui";       case Op::Auipc: return "auipc";
    case Op::Jal: return "jal";       case Op::Jalr: return "jalr";
    case Op::Beq: return "beq";       case Op::Bne: return "bne";
    case Op::Blt: return "blt";       case Op::Bge: return "bge";
    case Op::Bltu: return "bltu";     case Op::Bgeu: return "bgeu";
    case Op::Lb: return "lb";         case Op::Lh: return "lh";
    case Op::Lw: return "lw";         case Op::Lbu: return "lbu";
    case Op::Lhu: return "lhu";       case Op::Sb: return "sb";
    case Op::Sh: return "sh";         case Op::Sw: return "sw";
    case Op::Addi: return "addi";     case Op::Slti: return "slti";
    case Op::Sltiu: return "sltiu";   case Op::Xori: return "xori";
    case Op::Ori: return "ori";       case Op::Andi: return "andi";
    case Op::Slli: return "slli";     case Op::Srli: return "srli";
    case Op::Srai: return "srai";     case Op::Add: return "add";
    case Op::Sub: return "sub";       case Op::Sll: return "sll";
    case Op::Slt: return "slt";       case Op::Sltu: return "sltu";
    case Op::Xor: return "xor";       case Op::Srl: return "srl";
    case Op::Sra: return "sra";       case Op::Or: return "or";
    case Op::And: return "and";       case Op::Mul: return "mul";
    case Op::Mulh: return "mulh";     case Op::Mulhsu: return "mulhsu";
    case Op::Mulhu: return "mulhu";   case Op::Div: return "div";
    case Op::Divu: return "divu";     case Op::Rem: return "rem";
    case Op::Remu: return "remu";     case Op::Ecall: return "ecall";
    case Op::Ebreak: return "ebreak"; case Op::Rdcycle: return "rdcycle";
    case Op::Bb: return "bb";         case Op::Lcnt: return "lcnt";
  }
  return "?";
}

RegUse regUse(const Instruction& ins) {
  RegUse u;
  auto push = [&u](uint8_t r) {
    if (r != 0) u.reads[u.nReads++] = r;
  };
  auto cls = classify(ins);
  if (cls.isConditionalBranch || cls.isStore) {
    push(ins.rs1);
    push(ins.rs2);
    return u;
  }
  if (ins.op >= Op::Add && ins.op <= Op::Remu) {  // R-type range
    push(ins.rs1);
    push(ins.rs2);
    u.def = ins.rd;
    return u;
  }
  switch (ins.op) {
    case Op::Lui:
    case Op::Auipc:
    case Op::Jal:
      u.def = ins.rd;
      return u;
    case Op::Rdcycle:
      u.def = ins.rd;
      return u;
    case Op::Bb:
    case Op::Ebreak:
      return u;
    case Op::Ecall:
      push(17);  // a7 selects the call, a0 carries the argument
      push(10);
      return u;
    case Op::Lcnt:
      push(ins.rs1);
      return u;
    default:  // I-type ALU, loads, jalr
      push(ins.rs1);
      u.def = ins.rd;
      return u;
  }
}

}  // namespace bbrv::isa
