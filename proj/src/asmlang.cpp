#include "bbrv/asmlang.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace bbrv::assembler {

using isa::Op;

namespace {

const char* kAbiNames[32] = {
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1", "a0",
    "a1",   "a2", "a3", "a4", "a5", "a6", "a7", "s2", "s3", "s4", "s5",
    "s6",   "s7", "s8", "s9", "s10", "s11", "t3", "t4", "t5", "t6"};

std::string toLower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool parseInt(const std::string& tok, int64_t& out) {
  std::string t = trim(tok);
  if (t.empty()) return false;
  bool neg = false;
  size_t pos = 0;
  if (t[0] == '-') { neg = true; pos = 1; }
  else if (t[0] == '+') { pos = 1; }
  if (pos >= t.size()) return false;
  int base = 10;
  if (t.size() > pos + 1 && t[pos] == '0' && (t[pos + 1] == 'x' || t[pos + 1] == 'X')) {
    base = 16;
    pos += 2;
  } else if (t.size() > pos + 1 && t[pos] == '0' && (t[pos + 1] == 'b' || t[pos + 1] == 'B')) {
    base = 2;
    pos += 2;
  }
  errno = 0;
  char* end = nullptr;
  unsigned long long v = std::strtoull(t.c_str() + pos, &end, base);
  if (end == t.c_str() + pos || *end != '\0' || errno != 0) return false;
  out = neg ? -static_cast<int64_t>(v) : static_cast<int64_t>(v);
  return true;
}

std::vector<std::string> splitOperands(const std::string& s) {
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
  if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
  while (!out.empty() && out.back().empty()) out.pop_back();
  return out;
}

}  // namespace

int parseRegister(const std::string& name) {
  std::string n = toLower(trim(name));
  if (n.size() >= 2 && (n[0] == 'x')) {
    int64_t v;
    if (parseInt(n.substr(1), v) && v >= 0 && v < 32) return static_cast<int>(v);
    return -1;
  }
  for (int i = 0; i < 32; ++i)
    if (n == kAbiNames[i]) return i;
  if (n == "fp") return 8;
  return -1;
}

std::string registerName(uint8_t idx) { return kAbiNames[idx & 31]; }

namespace {

uint8_t regOrThrow(const std::string& tok, int line) {
  int r = parseRegister(tok);
  if (r < 0) throw AsmError("line " + std::to_string(line) + ": bad register '" + tok + "'");
  return static_cast<uint8_t>(r);
}

int64_t intOrThrow(const std::string& tok, int line) {
  int64_t v;
  if (!parseInt(tok, v))
    throw AsmError("line " + std::to_string(line) + ": bad integer '" + tok + "'");
  return v;
}

bool isLabelName(const std::string& t) {
  if (t.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(t[0])) || t[0] == '_' || t[0] == '.')) return false;
  for (char c : t)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '$'))
      return false;
  return parseRegister(t) < 0;
}

// mem operand: "off(reg)" or "(reg)" or "off"
void parseMemOperand(const std::string& tok, int line, int32_t& off, uint8_t& base) {
  size_t lp = tok.find('(');
  if (lp == std::string::npos) {
    off = static_cast<int32_t>(intOrThrow(tok, line));
    base = 0;
    return;
  }
  size_t rp = tok.find(')', lp);
  if (rp == std::string::npos) throw AsmError("line " + std::to_string(line) + ": bad operand");
  std::string offs = trim(tok.substr(0, lp));
  off = offs.empty() ? 0 : static_cast<int32_t>(intOrThrow(offs, line));
  base = regOrThrow(tok.substr(lp + 1, rp - lp - 1), line);
}

Item instrItem(const AsmInstr& ai) {
  Item it;
  it.kind = Item::Kind::Instr;
  it.instr = ai;
  return it;
}

AsmInstr mk(Op op) {
  AsmInstr a;
  a.ins.op = op;
  return a;
}

}  // namespace

SourceUnit parse(const std::string& text) {
  SourceUnit unit;
  std::istringstream ss(text);
  std::string rawLine;
  int lineNo = 0;
  while (std::getline(ss, rawLine)) {
    ++lineNo;
    std::string line = rawLine;
    for (char stop : {'#', ';'}) {
      size_t p = line.find(stop);
      if (p != std::string::npos) line = line.substr(0, p);
    }
    line = trim(line);
    // leading labels
    for (;;) {
      size_t colon = line.find(':');
      if (colon == std::string::npos) break;
      std::string lbl = trim(line.substr(0, colon));
      if (!isLabelName(lbl)) break;
      Item it;
      it.kind = Item::Kind::Label;
      it.label = lbl;
      unit.items.push_back(it);
      line = trim(line.substr(colon + 1));
    }
    if (line.empty()) continue;

    size_t sp = line.find_first_of(" \t");
    std::string mn = toLower(sp == std::string::npos ? line : line.substr(0, sp));
    std::string rest = sp == std::string::npos ? "" : trim(line.substr(sp));
    auto ops = splitOperands(rest);
    auto need = [&](size_t n) {
      if (ops.size() != n)
        throw AsmError("line " + std::to_string(lineNo) + ": '" + mn + "' expects " +
                       std::to_string(n) + " operands");
    };

    if (mn[0] == '.') {
      Item it;
      if (mn == ".org") {
        need(1);
        it.kind = Item::Kind::Org;
        it.value = static_cast<uint32_t>(intOrThrow(ops[0], lineNo));
      } else if (mn == ".word") {
        need(1);
        it.kind = Item::Kind::Word;
        if (isLabelName(ops[0]))
          it.wordTarget = ops[0];
        else
          it.value = static_cast<uint32_t>(intOrThrow(ops[0], lineNo));
      } else if (mn == ".space") {
        need(1);
        it.kind = Item::Kind::Space;
        it.value = static_cast<uint32_t>(intOrThrow(ops[0], lineNo));
      } else if (mn == ".globl" || mn == ".global") {
        need(1);
        it.kind = Item::Kind::Globl;
        it.label = ops[0];
      } else if (mn == ".text" || mn == ".align") {
        continue;  // accepted, no effect (code is 4-aligned by construction)
      } else {
        throw AsmError("line " + std::to_string(lineNo) + ": unknown directive " + mn);
      }
      unit.items.push_back(it);
      continue;
    }

    auto pushBranch = [&](Op op, uint8_t rs1, uint8_t rs2, const std::string& tgt) {
      AsmInstr a = mk(op);
      a.ins.rs1 = rs1;
      a.ins.rs2 = rs2;
      if (isLabelName(tgt)) {
        a.target = tgt;
        a.reloc = AsmInstr::Reloc::BranchOff;
      } else {
        a.ins.imm = static_cast<int32_t>(intOrThrow(tgt, lineNo));
      }
      unit.items.push_back(instrItem(a));
    };

    if (mn == "beq" || mn == "bne" || mn == "blt" || mn == "bge" || mn == "bltu" || mn == "bgeu") {
      need(3);
      Op op = mn == "beq" ? Op::Beq : mn == "bne" ? Op::Bne : mn == "blt" ? Op::Blt
            : mn == "bge" ? Op::Bge : mn == "bltu" ? Op::Bltu : Op::Bgeu;
      pushBranch(op, regOrThrow(ops[0], lineNo), regOrThrow(ops[1], lineNo), ops[2]);
    } else if (mn == "beqz" || mn == "bnez" || mn == "bltz" || mn == "bgez") {
      need(2);
      Op op = mn == "beqz" ? Op::Beq : mn == "bnez" ? Op::Bne : mn == "bltz" ? Op::Blt : Op::Bge;
      pushBranch(op, regOrThrow(ops[0], lineNo), 0, ops[1]);
    } else if (mn == "jal") {
      AsmInstr a = mk(Op::Jal);
      std::string tgt;
      if (ops.size() == 1) {
        a.ins.rd = 1;
        tgt = ops[0];
      } else {
        need(2);
        a.ins.rd = regOrThrow(ops[0], lineNo);
        tgt = ops[1];
      }
      if (isLabelName(tgt)) {
        a.target = tgt;
        a.reloc = AsmInstr::Reloc::JalOff;
      } else {
        a.ins.imm = static_cast<int32_t>(intOrThrow(tgt, lineNo));
      }
      unit.items.push_back(instrItem(a));
    } else if (mn == "j") {
      need(1);
      AsmInstr a = mk(Op::Jal);
      a.ins.rd = 0;
      if (isLabelName(ops[0])) {
        a.target = ops[0];
        a.reloc = AsmInstr::Reloc::JalOff;
      } else {
        a.ins.imm = static_cast<int32_t>(intOrThrow(ops[0], lineNo));
      }
      unit.items.push_back(instrItem(a));
    } else if (mn == "call") {
      need(1);
      AsmInstr a = mk(Op::Jal);
      a.ins.rd = 1;
      a.target = ops[0];
      a.reloc = AsmInstr::Reloc::JalOff;
      unit.items.push_back(instrItem(a));
    } else if (mn == "jalr") {
      AsmInstr a = mk(Op::Jalr);
      if (ops.size() == 1) {
        a.ins.rd = 1;
        a.ins.rs1 = regOrThrow(ops[0], lineNo);
      } else if (ops.size() == 2) {
        a.ins.rd = regOrThrow(ops[0], lineNo);
        parseMemOperand(ops[1], lineNo, a.ins.imm, a.ins.rs1);
      } else {
        need(3);
        a.ins.rd = regOrThrow(ops[0], lineNo);
        a.ins.rs1 = regOrThrow(ops[1], lineNo);
        a.ins.imm = static_cast<int32_t>(intOrThrow(ops[2], lineNo));
      }
      unit.items.push_back(instrItem(a));
    } else if (mn == "jr") {
      need(1);
      AsmInstr a = mk(Op::Jalr);
      a.ins.rd = 0;
      a.ins.rs1 = regOrThrow(ops[0], lineNo);
      unit.items.push_back(instrItem(a));
    } else if (mn == "ret") {
      AsmInstr a = mk(Op::Jalr);
      a.ins.rd = 0;
      a.ins.rs1 = 1;
      unit.items.push_back(instrItem(a));
    } else if (mn == "lb" || mn == "lh" || mn == "lw" || mn == "lbu" || mn == "lhu") {
      need(2);
      Op op = mn == "lb" ? Op::Lb : mn == "lh" ? Op::Lh : mn == "lw" ? Op::Lw
            : mn == "lbu" ? Op::Lbu : Op::Lhu;
      AsmInstr a = mk(op);
      a.ins.rd = regOrThrow(ops[0], lineNo);
      parseMemOperand(ops[1], lineNo, a.ins.imm, a.ins.rs1);
      unit.items.push_back(instrItem(a));
    } else if (mn == "sb" || mn == "sh" || mn == "sw") {
      need(2);
      Op op = mn == "sb" ? Op::Sb : mn == "sh" ? Op::Sh : Op::Sw;
      AsmInstr a = mk(op);
      a.ins.rs2 = regOrThrow(ops[0], lineNo);
      parseMemOperand(ops[1], lineNo, a.ins.imm, a.ins.rs1);
      unit.items.push_back(instrItem(a));
    } else if (mn == "lui" || mn == "auipc") {
      need(2);
      AsmInstr a = mk(mn == "lui" ? Op::Lui : Op::Auipc);
      a.ins.rd = regOrThrow(ops[0], lineNo);
      if (ops[1].compare(0, 4, "%hi(") == 0 && ops[1].back() == ')') {
        a.target = trim(ops[1].substr(4, ops[1].size() - 5));
        a.reloc = AsmInstr::Reloc::Hi20;
      } else {
        int64_t v = intOrThrow(ops[1], lineNo);
        a.ins.imm = static_cast<int32_t>(v << 12);
      }
      unit.items.push_back(instrItem(a));
    } else if (mn == "addi" || mn == "slti" || mn == "sltiu" || mn == "xori" || mn == "ori" ||
               mn == "andi" || mn == "slli" || mn == "srli" || mn == "srai") {
      need(3);
      Op op = mn == "addi" ? Op::Addi : mn == "slti" ? Op::Slti : mn == "sltiu" ? Op::Sltiu
            : mn == "xori" ? Op::Xori : mn == "ori" ? Op::Ori : mn == "andi" ? Op::Andi
            : mn == "slli" ? Op::Slli : mn == "srli" ? Op::Srli : Op::Srai;
      AsmInstr a = mk(op);
      a.ins.rd = regOrThrow(ops[0], lineNo);
      a.ins.rs1 = regOrThrow(ops[1], lineNo);
      if (op == Op::Addi && ops[2].compare(0, 4, "%lo(") == 0 && ops[2].back() == ')') {
        a.target = trim(ops[2].substr(4, ops[2].size() - 5));
        a.reloc = AsmInstr::Reloc::Lo12;
      } else {
        a.ins.imm = static_cast<int32_t>(intOrThrow(ops[2], lineNo));
      }
      unit.items.push_back(instrItem(a));
    } else if (mn == "add" || mn == "sub" || mn == "sll" || mn == "slt" || mn == "sltu" ||
               mn == "xor" || mn == "srl" || mn == "sra" || mn == "or" || mn == "and" ||
               mn == "mul" || mn == "mulh" || mn == "mulhsu" || mn == "mulhu" || mn == "div" ||
               mn == "divu" || mn == "rem" || mn == "remu") {
      need(3);
      Op op = mn == "add" ? Op::Add : mn == "sub" ? Op::Sub : mn == "sll" ? Op::Sll
            : mn == "slt" ? Op::Slt : mn == "sltu" ? Op::Sltu : mn == "xor" ? Op::Xor
            : mn == "srl" ? Op::Srl : mn == "sra" ? Op::Sra : mn == "or" ? Op::Or
            : mn == "and" ? Op::And : mn == "mul" ? Op::Mul : mn == "mulh" ? Op::Mulh
            : mn == "mulhsu" ? Op::Mulhsu : mn == "mulhu" ? Op::Mulhu : mn == "div" ? Op::Div
            : mn == "divu" ? Op::Divu : mn == "rem" ? Op::Rem : Op::Remu;
      AsmInstr a = mk(op);
      a.ins.rd = regOrThrow(ops[0], lineNo);
      a.ins.rs1 = regOrThrow(ops[1], lineNo);
      a.ins.rs2 = regOrThrow(ops[2], lineNo);
      unit.items.push_back(instrItem(a));
    } else if (mn == "mv") {
      need(2);
      AsmInstr a = mk(Op::Addi);
      a.ins.rd = regOrThrow(ops[0], lineNo);
      a.ins.rs1 = regOrThrow(ops[1], lineNo);
      unit.items.push_back(instrItem(a));
    } else if (mn == "nop") {
      unit.items.push_back(instrItem(mk(Op::Addi)));
    } else if (mn == "li") {
      need(2);
      uint8_t rd = regOrThrow(ops[0], lineNo);
      int64_t v = intOrThrow(ops[1], lineNo);
      int32_t v32 = static_cast<int32_t>(v);
      if (v32 >= -2048 && v32 <= 2047) {
        AsmInstr a = mk(Op::Addi);
        a.ins.rd = rd;
        a.ins.imm = v32;
        unit.items.push_back(instrItem(a));
      } else {
        uint32_t u = static_cast<uint32_t>(v32);
        uint32_t hi = (u + 0x800u) & 0xFFFFF000u;
        int32_t lo = static_cast<int32_t>(u - hi);
        AsmInstr a = mk(Op::Lui);
        a.ins.rd = rd;
        a.ins.imm = static_cast<int32_t>(hi);
        unit.items.push_back(instrItem(a));
        AsmInstr b = mk(Op::Addi);
        b.ins.rd = rd;
        b.ins.rs1 = rd;
        b.ins.imm = lo;
        unit.items.push_back(instrItem(b));
      }
    } else if (mn == "la") {
      need(2);
      uint8_t rd = regOrThrow(ops[0], lineNo);
      AsmInstr a = mk(Op::Lui);
      a.ins.rd = rd;
      a.target = ops[1];
      a.reloc = AsmInstr::Reloc::Hi20;
      unit.items.push_back(instrItem(a));
      AsmInstr b = mk(Op::Addi);
      b.ins.rd = rd;
      b.ins.rs1 = rd;
      b.target = ops[1];
      b.reloc = AsmInstr::Reloc::Lo12;
      unit.items.push_back(instrItem(b));
    } else if (mn == "ecall") {
      unit.items.push_back(instrItem(mk(Op::Ecall)));
    } else if (mn == "ebreak") {
      unit.items.push_back(instrItem(mk(Op::Ebreak)));
    } else if (mn == "rdcycle") {
      need(1);
      AsmInstr a = mk(Op::Rdcycle);
      a.ins.rd = regOrThrow(ops[0], lineNo);
      unit.items.push_back(instrItem(a));
    } else if (mn == "bb") {
      if (ops.size() != 2 && ops.size() != 4)
        throw AsmError("line " + std::to_string(lineNo) + ": bb expects 2 or 4 operands");
      AsmInstr a = mk(Op::Bb);
      int64_t n = intOrThrow(ops[0], lineNo);
      if (n < 1 || n > 65535)
        throw AsmError("line " + std::to_string(lineNo) + ": bb size out of range");
      a.ins.bbSize = static_cast<uint16_t>(n);
      a.ins.bbSeq = intOrThrow(ops[1], lineNo) != 0;
      if (ops.size() == 4) {
        a.ins.sFlags = static_cast<uint8_t>(intOrThrow(ops[2], lineNo) & 0xF);
        a.ins.eFlags = static_cast<uint8_t>(intOrThrow(ops[3], lineNo) & 0xF);
      }
      unit.items.push_back(instrItem(a));
    } else if (mn == "lcnt") {
      need(2);
      AsmInstr a = mk(Op::Lcnt);
      parseMemOperand(ops[0], lineNo, a.ins.imm, a.ins.rs1);
      std::string set = toLower(ops[1]);
      if (set.size() == 3 && set.compare(0, 2, "lc") == 0 && set[2] >= '0' && set[2] <= '3')
        a.ins.loopSet = static_cast<uint8_t>(set[2] - '0');
      else
        a.ins.loopSet = static_cast<uint8_t>(intOrThrow(ops[1], lineNo));
      if (a.ins.loopSet > 3)
        throw AsmError("line " + std::to_string(lineNo) + ": loop set out of range");
      unit.items.push_back(instrItem(a));
    } else {
      throw AsmError("line " + std::to_string(lineNo) + ": unknown mnemonic '" + mn + "'");
    }
  }
  return unit;
}

ProgramImage assemble(const SourceUnit& src) {
  std::map<std::string, uint32_t> symbols;
  std::string entrySym;

  // Pass 1: addresses.
  uint32_t lc = kCodeBase;
  for (const auto& it : src.items) {
    switch (it.kind) {
      case Item::Kind::Label:
        if (symbols.count(it.label)) throw AsmError("duplicate label '" + it.label + "'");
        symbols[it.label] = lc;
        break;
      case Item::Kind::Instr:
        if (lc % 4) throw AsmError("misaligned instruction");
        lc += 4;
        break;
      case Item::Kind::Word: lc += 4; break;
      case Item::Kind::Space: lc += it.value; break;
      case Item::Kind::Org: lc = it.value; break;
      case Item::Kind::Globl: entrySym = it.label; break;
    }
  }

  auto resolve = [&](const std::string& name) -> uint32_t {
    auto f = symbols.find(name);
    if (f == symbols.end()) throw AsmError("undefined label '" + name + "'");
    return f->second;
  };

  // Pass 2: emit bytes.
  std::map<uint32_t, std::vector<uint8_t>> chunks;  // addr -> bytes, merged below
  auto emit = [&](uint32_t addr, uint32_t count, auto fill) {
    auto& v = chunks[addr];
    (void)count;
    fill(v);
  };
  lc = kCodeBase;
  for (const auto& it : src.items) {
    switch (it.kind) {
      case Item::Kind::Label:
      case Item::Kind::Globl:
        break;
      case Item::Kind::Org:
        lc = it.value;
        break;
      case Item::Kind::Space: {
        emit(lc, it.value, [&](std::vector<uint8_t>& v) { v.resize(v.size() + it.value, 0); });
        lc += it.value;
        break;
      }
      case Item::Kind::Word: {
        uint32_t val = it.wordTarget.empty() ? it.value : resolve(it.wordTarget);
        emit(lc, 4, [&](std::vector<uint8_t>& v) {
          for (int b = 0; b < 4; ++b) v.push_back(static_cast<uint8_t>(val >> (8 * b)));
        });
        lc += 4;
        break;
      }
      case Item::Kind::Instr: {
        isa::Instruction ins = it.instr.ins;
        if (!it.instr.target.empty()) {
          uint32_t tgt = resolve(it.instr.target);
          switch (it.instr.reloc) {
            case AsmInstr::Reloc::BranchOff:
            case AsmInstr::Reloc::JalOff: {
              if (tgt % 4) throw AsmError("misaligned target '" + it.instr.target + "'");
              int64_t off = static_cast<int64_t>(tgt) - static_cast<int64_t>(lc);
              ins.imm = static_cast<int32_t>(off);
              break;
            }
            case AsmInstr::Reloc::Hi20:
              ins.imm = static_cast<int32_t>((tgt + 0x800u) & 0xFFFFF000u);
              break;
            case AsmInstr::Reloc::Lo12:
              ins.imm = static_cast<int32_t>(tgt - ((tgt + 0x800u) & 0xFFFFF000u));
              break;
            case AsmInstr::Reloc::None:
              break;
          }
        }
        auto enc = isa::encode(ins);
        if (!std::holds_alternative<uint32_t>(enc))
          throw AsmError(std::string("immediate out of range for ") + isa::mnemonic(ins.op) +
                         (it.instr.target.empty() ? "" : " -> " + it.instr.target));
        uint32_t word = std::get<uint32_t>(enc);
        emit(lc, 4, [&](std::vector<uint8_t>& v) {
          for (int b = 0; b < 4; ++b) v.push_back(static_cast<uint8_t>(word >> (8 * b)));
        });
        lc += 4;
        break;
      }
    }
  }

  ProgramImage img;
  img.symbols = symbols;
  for (auto& [addr, bytes] : chunks) {
    if (!img.segments.empty()) {
      auto& last = img.segments.back();
      if (last.addr + last.bytes.size() == addr) {
        last.bytes.insert(last.bytes.end(), bytes.begin(), bytes.end());
        continue;
      }
      if (addr < last.addr + last.bytes.size()) throw AsmError("overlapping segments");
    }
    img.segments.push_back({addr, bytes});
  }
  if (!entrySym.empty())
    img.entry = resolve(entrySym);
  else if (symbols.count("_start"))
    img.entry = symbols["_start"];
  else
    img.entry = img.base;
  const Segment* code = img.codeSegment();
  if (!code) throw AsmError("entry address not inside any segment");
  if (code->bytes.size() % 4) throw AsmError("code length not divisible by 4");
  return img;
}

const Segment* ProgramImage::codeSegment() const {
  for (const auto& s : segments)
    if (entry >= s.addr && entry < s.addr + s.bytes.size()) return &s;
  return nullptr;
}

namespace {

uint32_t readWord(const Segment& s, size_t off) {
  return uint32_t(s.bytes[off]) | uint32_t(s.bytes[off + 1]) << 8 |
         uint32_t(s.bytes[off + 2]) << 16 | uint32_t(s.bytes[off + 3]) << 24;
}

}  // namespace

SourceUnit disassemble(const ProgramImage& img) {
  const Segment* code = img.codeSegment();
  SourceUnit unit;
  if (!code) return unit;

  // collect branch/jump targets so the output uses labels
  std::map<uint32_t, std::string> labels;
  for (const auto& [name, addr] : img.symbols) labels.emplace(addr, name);
  for (size_t off = 0; off < code->bytes.size(); off += 4) {
    uint32_t pc = code->addr + static_cast<uint32_t>(off);
    auto d = isa::decode(readWord(*code, off));
    if (!isa::decodeOk(d)) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "illegal instruction at 0x%08x", pc);
      throw AsmError(buf);
    }
    const auto& ins = std::get<isa::Instruction>(d);
    if (ins.op == Op::Jal || isa::classify(ins).isConditionalBranch) {
      uint32_t tgt = pc + static_cast<uint32_t>(ins.imm);
      if (!labels.count(tgt)) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "L_%08x", tgt);
        labels[tgt] = buf;
      }
    }
  }

  for (size_t off = 0; off < code->bytes.size(); off += 4) {
    uint32_t pc = code->addr + static_cast<uint32_t>(off);
    if (auto f = labels.find(pc); f != labels.end()) {
      Item it;
      it.kind = Item::Kind::Label;
      it.label = f->second;
      unit.items.push_back(it);
    }
    auto ins = std::get<isa::Instruction>(isa::decode(readWord(*code, off)));
    AsmInstr a;
    a.ins = ins;
    if (ins.op == Op::Jal || isa::classify(ins).isConditionalBranch) {
      a.target = labels.at(pc + static_cast<uint32_t>(ins.imm));
      a.reloc = ins.op == Op::Jal ? AsmInstr::Reloc::JalOff : AsmInstr::Reloc::BranchOff;
    }
    unit.items.push_back(instrItem(a));
  }
  for (const auto& s : img.segments) {
    if (&s == code) continue;
    Item org;
    org.kind = Item::Kind::Org;
    org.value = s.addr;
    unit.items.push_back(org);
    for (size_t off = 0; off + 4 <= s.bytes.size(); off += 4) {
      if (auto f = labels.find(s.addr + off); f != labels.end()) {
        Item lab;
        lab.kind = Item::Kind::Label;
        lab.label = f->second;
        unit.items.push_back(lab);
      }
      Item w;
      w.kind = Item::Kind::Word;
      w.value = readWord(s, off);
      unit.items.push_back(w);
    }
  }
  return unit;
}

std::string renderInstr(const AsmInstr& a) {
  const isa::Instruction& i = a.ins;
  std::ostringstream o;
  o << isa::mnemonic(i.op) << " ";
  auto r = [](uint8_t x) { return registerName(x); };
  auto tgtOr = [&](int32_t imm) { return a.target.empty() ? std::to_string(imm) : a.target; };
  switch (i.op) {
    case Op::Lui: case Op::Auipc:
      if (!a.target.empty())
        o << r(i.rd) << ", %hi(" << a.target << ")";
      else
        o << r(i.rd) << ", " << (static_cast<uint32_t>(i.imm) >> 12);
      break;
    case Op::Jal: o << r(i.rd) << ", " << tgtOr(i.imm); break;
    case Op::Jalr: o << r(i.rd) << ", " << r(i.rs1) << ", " << i.imm; break;
    case Op::Beq: case Op::Bne: case Op::Blt: case Op::Bge: case Op::Bltu: case Op::Bgeu:
      o << r(i.rs1) << ", " << r(i.rs2) << ", " << tgtOr(i.imm);
      break;
    case Op::Lb: case Op::Lh: case Op::Lw: case Op::Lbu: case Op::Lhu:
      o << r(i.rd) << ", " << i.imm << "(" << r(i.rs1) << ")";
      break;
    case Op::Sb: case Op::Sh: case Op::Sw:
      o << r(i.rs2) << ", " << i.imm << "(" << r(i.rs1) << ")";
      break;
    case Op::Addi: case Op::Slti: case Op::Sltiu: case Op::Xori: case Op::Ori: case Op::Andi:
    case Op::Slli: case Op::Srli: case Op::Srai:
      o << r(i.rd) << ", " << r(i.rs1) << ", ";
      if (!a.target.empty())
        o << "%lo(" << a.target << ")";
      else
        o << i.imm;
      break;
    case Op::Ecall: case Op::Ebreak: return isa::mnemonic(i.op);
    case Op::Rdcycle: o << r(i.rd); break;
    case Op::Bb:
      o << i.bbSize << ", " << (i.bbSeq ? 1 : 0);
      if (i.sFlags || i.eFlags) o << ", " << unsigned(i.sFlags) << ", " << unsigned(i.eFlags);
      break;
    case Op::Lcnt:
      if (i.rs1)
        o << i.imm << "(" << r(i.rs1) << "), lc" << unsigned(i.loopSet);
      else
        o << i.imm << ", lc" << unsigned(i.loopSet);
      break;
    default:
      o << r(i.rd) << ", " << r(i.rs1) << ", " << r(i.rs2);
      break;
  }
  return o.str();
}

std::string render(const SourceUnit& src) {
  std::ostringstream o;
  for (const auto& it : src.items) {
    switch (it.kind) {
      case Item::Kind::Label: o << it.label << ":\n"; break;
      case Item::Kind::Globl: o << ".globl " << it.label << "\n"; break;
      case Item::Kind::Org: {
        char buf[32];
        std::snprintf(buf, sizeof(buf), ".org 0x%08x", it.value);
        o << buf << "\n";
        break;
      }
      case Item::Kind::Word:
        if (!it.wordTarget.empty())
          o << "    .word " << it.wordTarget << "\n";
        else
          o << "    .word " << it.value << "\n";
        break;
      case Item::Kind::Space: o << "    .space " << it.value << "\n"; break;
      case Item::Kind::Instr: o << "    " << renderInstr(it.instr) << "\n"; break;
    }
  }
  return o.str();
}

void saveImage(const ProgramImage& img, const std::string& path) {
  std::ofstream bin(path, std::ios::binary);
  if (!bin) throw AsmError("cannot write " + path);
  nlohmann::json meta;
  meta["base"] = img.base;
  meta["entry"] = img.entry;
  meta["segments"] = nlohmann::json::array();
  for (const auto& s : img.segments) {
    bin.write(reinterpret_cast<const char*>(s.bytes.data()),
              static_cast<std::streamsize>(s.bytes.size()));
    meta["segments"].push_back({{"addr", s.addr}, {"len", s.bytes.size()}});
  }
  meta["symbols"] = nlohmann::json::object();
  for (const auto& [n, a] : img.symbols) meta["symbols"][n] = a;
  std::ofstream js(path + ".json");
  js << meta.dump(2) << "\n";
}

ProgramImage loadImage(const std::string& path) {
  std::ifstream bin(path, std::ios::binary);
  if (!bin) throw AsmError("cannot read " + path);
  std::vector<uint8_t> all((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  std::ifstream js(path + ".json");
  if (!js) throw AsmError("cannot read " + path + ".json");
  nlohmann::json meta = nlohmann::json::parse(js);
  ProgramImage img;
  img.base = meta["base"].get<uint32_t>();
  img.entry = meta["entry"].get<uint32_t>();
  size_t off = 0;
  for (const auto& s : meta["segments"]) {
    Segment seg;
    seg.addr = s["addr"].get<uint32_t>();
    size_t len = s["len"].get<size_t>();
    if (off + len > all.size()) throw AsmError("image shorter than metadata");
    seg.bytes.assign(all.begin() + static_cast<long>(off), all.begin() + static_cast<long>(off + len));
    off += len;
    img.segments.push_back(std::move(seg));
  }
  for (auto& [k, v] : meta["symbols"].items()) img.symbols[k] = v.get<uint32_t>();
  return img;
}

}  // namespace bbrv::assembler
