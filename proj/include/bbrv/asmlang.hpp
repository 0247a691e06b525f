#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bbrv/isa.hpp"

namespace bbrv::assembler {

constexpr uint32_t kCodeBase = 0x80000000u;
constexpr uint32_t kDataBase = 0x80100000u;
constexpr uint32_t kStackTop = 0x80200000u;
constexpr uint32_t kRamSize = 0x00200000u;  // 2 MiB

struct AsmError : std::runtime_error {
  explicit AsmError(const std::string& msg) : std::runtime_error(msg) {}
};

// One instruction statement. Branch/jump/lui targets may be symbolic; when
// `target` is non-empty `imm` is filled in during address resolution.
struct AsmInstr {
  isa::Instruction ins;
  std::string target;  // label operand, empty if numeric
  enum class Reloc { None, BranchOff, JalOff, Hi20, Lo12 } reloc = Reloc::None;
};

struct Item {
  enum class Kind { Label, Instr, Word, Space, Org, Globl } kind;
  std::string label;       // Label / Globl name
  AsmInstr instr;          // Instr
  uint32_t value = 0;      // Word value / Space size / Org address
  std::string wordTarget;  // .word may reference a label
};

struct SourceUnit {
  std::vector<Item> items;
};

struct Segment {
  uint32_t addr = 0;
  std::vector<uint8_t> bytes;
};

struct ProgramImage {
  uint32_t base = kCodeBase;
  uint32_t entry = kCodeBase;
  std::vector<Segment> segments;
  std::map<std::string, uint32_t> symbols;

  const Segment* codeSegment() const;
};

SourceUnit parse(const std::string& text);
ProgramImage assemble(const SourceUnit& src);
SourceUnit disassemble(const ProgramImage& img);
std::string render(const SourceUnit& src);

void saveImage(const ProgramImage& img, const std::string& path);
ProgramImage loadImage(const std::string& path);

// Register name helpers shared with the disassembler and CLI.
int parseRegister(const std::string& name);  // -1 if not a register
std::string registerName(uint8_t idx);

}  // namespace bbrv::assembler
