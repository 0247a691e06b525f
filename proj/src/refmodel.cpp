#include "bbrv/refmodel.hpp"

namespace bbrv::refmodel {

using isa::Instruction;
using isa::Op;

const char* stopName(StopKind k) {
  switch (k) {
    case StopKind::None: return "none";
    case StopKind::Halted: return "halted";
    case StopKind::BbRequired: return "bb-required";
    case StopKind::BbSemantics: return "bb-semantics";
    case StopKind::IllegalInstruction: return "illegal-instruction";
    case StopKind::MisalignedAccess: return "misaligned-access";
    case StopKind::OutOfRangeAccess: return "out-of-range-access";
    case StopKind::Break: return "break";
    case StopKind::FuelExhausted: return "fuel-exhausted";
  }
  return "?";
}

namespace {

void setReg(ArchState& s, uint8_t rd, uint32_t v) {
  if (rd != 0) s.regs[rd] = v;
}

// ALU result for non-control, non-memory base instructions.
uint32_t alu(const ArchState& s, const Instruction& i, uint32_t pc) {
  uint32_t a = s.regs[i.rs1];
  uint32_t b = s.regs[i.rs2];
  int32_t sa = static_cast<int32_t>(a);
  int32_t sb = static_cast<int32_t>(b);
  uint32_t immU = static_cast<uint32_t>(i.imm);
  switch (i.op) {
    case Op::Lui: return immU;
    case Op::Auipc: return pc + immU;
    case Op::Addi: return a + immU;
    case Op::Slti: return sa < i.imm ? 1 : 0;
    case Op::Sltiu: return a < immU ? 1 : 0;
    case Op::Xori: return a ^ immU;
    case Op::Ori: return a | immU;
    case Op::Andi: return a & immU;
    case Op::Slli: return a << (i.imm & 31);
    case Op::Srli: return a >> (i.imm & 31);
    case Op::Srai: return static_cast<uint32_t>(sa >> (i.imm & 31));
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Sll: return a << (b & 31);
    case Op::Slt: return sa < sb ? 1 : 0;
    case Op::Sltu: return a < b ? 1 : 0;
    case Op::Xor: return a ^ b;
    case Op::Srl: return a >> (b & 31);
    case Op::Sra: return static_cast<uint32_t>(sa >> (b & 31));
    case Op::Or: return a | b;
    case Op::And: return a & b;
    case Op::Mul: return a * b;
    case Op::Mulh:
      return static_cast<uint32_t>((int64_t(sa) * int64_t(sb)) >> 32);
    case Op::Mulhsu:
      return static_cast<uint32_t>((int64_t(sa) * int64_t(uint64_t(b))) >> 32);
    case Op::Mulhu:
      return static_cast<uint32_t>((uint64_t(a) * uint64_t(b)) >> 32);
    case Op::Div:
      if (b == 0) return 0xFFFFFFFFu;
      if (a == 0x80000000u && b == 0xFFFFFFFFu) return a;
      return static_cast<uint32_t>(sa / sb);
    case Op::Divu: return b == 0 ? 0xFFFFFFFFu : a / b;
    case Op::Rem:
      if (b == 0) return a;
      if (a == 0x80000000u && b == 0xFFFFFFFFu) return 0;
      return static_cast<uint32_t>(sa % sb);
    case Op::Remu: return b == 0 ? a : a % b;
    default: return 0;
  }
}

bool branchTaken(const ArchState& s, const Instruction& i) {
  uint32_t a = s.regs[i.rs1];
  uint32_t b = s.regs[i.rs2];
  switch (i.op) {
    case Op::Beq: return a == b;
    case Op::Bne: return a != b;
    case Op::Blt: return static_cast<int32_t>(a) < static_cast<int32_t>(b);
    case Op::Bge: return static_cast<int32_t>(a) >= static_cast<int32_t>(b);
    case Op::Bltu: return a < b;
    case Op::Bgeu: return a >= b;
    default: return false;
  }
}

}  // namespace

BbControl applyBbLoopFlags(std::array<LoopSet, 4>& loops, const Instruction& bb, uint32_t pc,
                           uint32_t& target) {
  for (int k = 0; k < 4; ++k) {
    if ((bb.sFlags >> k & 1) && loops[k].active) {
      loops[k].start = pc;
      if (loops[k].count > 0) --loops[k].count;
    }
  }
  for (int k = 0; k < 4; ++k) {
    if ((bb.eFlags >> k & 1) && loops[k].active) {
      if (loops[k].count > 0) {
        target = loops[k].start;
        return BbControl::LoopBack;
      }
      // counter exhausted: the loop exits and this block behaves sequentially
      loops[k].active = false;
      target = pc + 4 * (uint32_t(bb.bbSize) + 1);
      return BbControl::Sequential;
    }
  }
  if (bb.bbSeq) {
    target = pc + 4 * (uint32_t(bb.bbSize) + 1);
    return BbControl::Sequential;
  }
  return BbControl::DelayedBranch;
}

StepResult step(ArchState& s) {
  StepResult r;
  r.pc = s.pc;

  if (!s.mem.inRange(s.pc, 4) || (s.pc & 3)) {
    r.stop = (s.pc & 3) ? StopKind::MisalignedAccess : StopKind::OutOfRangeAccess;
    return r;
  }
  auto dec = isa::decode(s.mem.read32(s.pc));
  if (!isa::decodeOk(dec)) {
    r.stop = StopKind::IllegalInstruction;
    return r;
  }
  const Instruction i = std::get<Instruction>(dec);
  const isa::InstrClass cls = isa::classify(i);
  r.ins = i;
  const uint32_t pc = s.pc;
  bool plain = false;  // executing under unmodified base-ISA rules this step

  // (1) legacy escape hatch: outside any announced block, plain base semantics
  if (!cls.isBb && s.ic == 0 && s.mode == Mode::Legacy) {
    plain = true;
    uint32_t nextPc = pc + 4;
    switch (i.op) {
      case Op::Jal:
        setReg(s, i.rd, pc + 4);
        nextPc = pc + static_cast<uint32_t>(i.imm);
        r.branchTaken = true;
        break;
      case Op::Jalr: {
        uint32_t t = (s.regs[i.rs1] + static_cast<uint32_t>(i.imm)) & ~1u;
        setReg(s, i.rd, pc + 4);
        nextPc = t;
        r.branchTaken = true;
        break;
      }
      case Op::Beq: case Op::Bne: case Op::Blt: case Op::Bge: case Op::Bltu: case Op::Bgeu:
        if (branchTaken(s, i)) {
          nextPc = pc + static_cast<uint32_t>(i.imm);
          r.branchTaken = true;
        }
        break;
      default:
        break;
    }
    // data-path ops behave identically in both modes; share the code below
    if (!cls.isControlFlow) goto exec_data;
    s.pc = nextPc;
    r.nextPc = nextPc;
    ++s.retired;
    return r;
  }

  // (1) bb-required check
  if (!cls.isBb && s.ic == 0 && s.mode == Mode::BbRequired) {
    r.stop = StopKind::BbRequired;
    return r;
  }

  // (2) consume one slot of the announced block
  if (!cls.isBb && s.ic > 0) --s.ic;

  if (cls.isBb) {
    // (3)
    if (s.ic != 0) {
      s.ic = 0;
      s.e = 1;
    } else {
      uint32_t target = 0;
      switch (applyBbLoopFlags(s.loops, i, pc, target)) {
        case BbControl::LoopBack:
        case BbControl::Sequential:
          s.t = target;
          s.b = 0;
          break;
        case BbControl::DelayedBranch:
          s.b = 1;
          break;
      }
      s.ic = i.bbSize;
    }
    s.pc = pc + 4;
    r.nextPc = s.pc;
    ++s.retired;
    if (s.ic == 0 && s.e != 0) r.stop = StopKind::BbSemantics;  // (6)
    return r;
  }

  if (cls.isControlFlow) {
    // (4)
    uint32_t blockFallThrough = pc + 4 * (s.ic + 1);
    uint32_t target;
    bool taken;
    if (i.op == Op::Jal) {
      target = pc + static_cast<uint32_t>(i.imm);
      taken = true;
    } else if (i.op == Op::Jalr) {
      target = (s.regs[i.rs1] + static_cast<uint32_t>(i.imm)) & ~1u;
      taken = true;
    } else {
      target = pc + static_cast<uint32_t>(i.imm);
      taken = branchTaken(s, i);
    }
    uint32_t redirect = taken ? target : blockFallThrough;
    r.branchTaken = taken;
    if (s.b > 0) {
      s.t = redirect;
      r.wroteT = true;
    }
    if (cls.isCall) setReg(s, i.rd, blockFallThrough);
    if (s.b == 0)
      s.e = 1;
    else
      --s.b;
    // (5)
    if (s.ic == 0) {
      s.pc = s.t;
      if (s.b > 0) s.e = 1;
    } else {
      s.pc = pc + 4;
    }
    r.nextPc = s.pc;
    ++s.retired;
    if (s.ic == 0 && s.e != 0) r.stop = StopKind::BbSemantics;  // (6)
    return r;
  }

exec_data:
  // non-control instruction body (shared between both modes)
  switch (i.op) {
    case Op::Lb: case Op::Lh: case Op::Lw: case Op::Lbu: case Op::Lhu: {
      uint32_t addr = s.regs[i.rs1] + static_cast<uint32_t>(i.imm);
      uint32_t len = (i.op == Op::Lw) ? 4 : (i.op == Op::Lh || i.op == Op::Lhu) ? 2 : 1;
      if (addr % len) { r.stop = StopKind::MisalignedAccess; return r; }
      if (!s.mem.inRange(addr, len)) { r.stop = StopKind::OutOfRangeAccess; return r; }
      uint32_t v = 0;
      switch (i.op) {
        case Op::Lb: v = static_cast<uint32_t>(int32_t(int8_t(s.mem.read8(addr)))); break;
        case Op::Lbu: v = s.mem.read8(addr); break;
        case Op::Lh: v = static_cast<uint32_t>(int32_t(int16_t(s.mem.read16(addr)))); break;
        case Op::Lhu: v = s.mem.read16(addr); break;
        default: v = s.mem.read32(addr); break;
      }
      setReg(s, i.rd, v);
      r.memAccess = true;
      r.memAddr = addr;
      r.memLen = len;
      break;
    }
    case Op::Sb: case Op::Sh: case Op::Sw: {
      uint32_t addr = s.regs[i.rs1] + static_cast<uint32_t>(i.imm);
      uint32_t len = (i.op == Op::Sw) ? 4 : (i.op == Op::Sh) ? 2 : 1;
      if (addr % len) { r.stop = StopKind::MisalignedAccess; return r; }
      if (!s.mem.inRange(addr, len)) { r.stop = StopKind::OutOfRangeAccess; return r; }
      uint32_t v = s.regs[i.rs2];
      if (i.op == Op::Sb) s.mem.write8(addr, uint8_t(v));
      else if (i.op == Op::Sh) s.mem.write16(addr, uint16_t(v));
      else s.mem.write32(addr, v);
      r.memAccess = true;
      r.memIsStore = true;
      r.memAddr = addr;
      r.memLen = len;
      break;
    }
    case Op::Ecall: {
      uint32_t a7 = s.regs[17], a0 = s.regs[10];
      if (a7 == 93) {
        r.exitCode = static_cast<int>(a0);
        r.stop = StopKind::Halted;
        ++s.retired;
        r.nextPc = pc + 4;
        return r;
      }
      if (a7 == 64) {
        r.outByte = uint8_t(a0);
      } else {
        r.stop = StopKind::Break;
        return r;
      }
      break;
    }
    case Op::Ebreak:
      r.stop = StopKind::Break;
      return r;
    case Op::Rdcycle:
      // deterministic virtual counter: retired instructions so far
      setReg(s, i.rd, static_cast<uint32_t>(s.retired));
      break;
    case Op::Lcnt: {
      int k = i.loopSet;
      s.loops[k].count = static_cast<uint32_t>(i.imm) + s.regs[i.rs1];
      s.loops[k].start = 0;
      s.loops[k].active = true;
      break;
    }
    default:
      setReg(s, i.rd, alu(s, i, pc));
      break;
  }

  if (plain || s.ic != 0) {
    s.pc = pc + 4;
  } else {
    // (5)
    s.pc = s.t;
    if (s.b > 0) s.e = 1;
  }
  r.nextPc = s.pc;
  ++s.retired;
  if (!plain && s.ic == 0 && s.e != 0) r.stop = StopKind::BbSemantics;  // (6)
  return r;
}

void loadInto(ArchState& s, const assembler::ProgramImage& img) {
  for (const auto& seg : img.segments)
    for (size_t i = 0; i < seg.bytes.size(); ++i)
      s.mem.write8(seg.addr + static_cast<uint32_t>(i), seg.bytes[i]);
  s.pc = img.entry;
  s.regs[2] = assembler::kStackTop;  // sp
}

RunResult run(const assembler::ProgramImage& img, Mode mode, uint64_t fuel) {
  RunResult res;
  res.state.mode = mode;
  loadInto(res.state, img);
  ArchState& s = res.state;
  for (uint64_t n = 0; n < fuel; ++n) {
    uint32_t pc = s.pc;
    StepResult r = step(s);
    if (r.stop == StopKind::None || r.stop == StopKind::Halted || r.stop == StopKind::BbSemantics)
      res.log.push_back({res.log.size(), pc, r.ins});
    if (r.outByte) res.output.push_back(static_cast<char>(*r.outByte));
    if (r.stop != StopKind::None) {
      res.stop = r.stop;
      res.exitCode = r.exitCode;
      res.stopPc = pc;
      return res;
    }
  }
  res.stop = StopKind::FuelExhausted;
  res.stopPc = s.pc;
  return res;
}

std::vector<uint32_t> fetchOrderTrace(const assembler::ProgramImage& img, size_t maxEntries) {
  ArchState s;
  s.mode = Mode::BbRequired;
  loadInto(s, img);
  std::vector<uint32_t> trace;
  std::optional<uint32_t> pending;
  while (trace.size() < maxEntries) {
    uint32_t pc = s.pc;
    if (pending == pc)
      pending.reset();  // already fetched early
    else
      trace.push_back(pc);
    StepResult r = step(s);
    if (r.stop != StopKind::None) break;
    // Does the fetch unit now know the next block's address?
    bool known = false;
    if (isa::classify(r.ins).isBb && s.b == 0) known = true;
    if (isa::classify(r.ins).isControlFlow && r.wroteT) known = true;
    if (known && s.mem.inRange(s.t, 4) && !(s.t & 3)) {
      auto d = isa::decode(s.mem.read32(s.t));
      if (isa::decodeOk(d) && isa::classify(std::get<isa::Instruction>(d)).isBb) {
        trace.push_back(s.t);
        pending = s.t;
      }
    }
  }
  return trace;
}

}  // namespace bbrv::refmodel
