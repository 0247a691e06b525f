#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bbrv/asmlang.hpp"
#include "bbrv/isa.hpp"

namespace bbrv::refmodel {

enum class Mode { BbRequired, Legacy };

// Why a run (or a single step) stopped. None means keep going.
enum class StopKind {
  None,
  Halted,              // ecall exit
  BbRequired,          // non-bb instruction outside any announced block
  BbSemantics,         // block-end consistency check failed (E set at IC=0)
  IllegalInstruction,  // undecodable word (includes reserved bb/lcnt forms)
  MisalignedAccess,
  OutOfRangeAccess,
  Break,               // ebreak or unsupported ecall
  FuelExhausted,
};

const char* stopName(StopKind k);

struct LoopSet {
  uint32_t count = 0;
  uint32_t start = 0;
  bool active = false;
};

// Flat little-endian RAM covering [kCodeBase, kCodeBase + kRamSize).
class Memory {
 public:
  Memory() : ram_(assembler::kRamSize, 0) {}

  bool inRange(uint32_t addr, uint32_t len) const {
    uint32_t off = addr - assembler::kCodeBase;
    return addr >= assembler::kCodeBase && off + len <= assembler::kRamSize && off + len >= off;
  }
  uint8_t read8(uint32_t addr) const { return ram_[addr - assembler::kCodeBase]; }
  void write8(uint32_t addr, uint8_t v) { ram_[addr - assembler::kCodeBase] = v; }
  uint32_t read32(uint32_t addr) const {
    uint32_t o = addr - assembler::kCodeBase;
    return uint32_t(ram_[o]) | uint32_t(ram_[o + 1]) << 8 | uint32_t(ram_[o + 2]) << 16 |
           uint32_t(ram_[o + 3]) << 24;
  }
  void write32(uint32_t addr, uint32_t v) {
    uint32_t o = addr - assembler::kCodeBase;
    ram_[o] = uint8_t(v);
    ram_[o + 1] = uint8_t(v >> 8);
    ram_[o + 2] = uint8_t(v >> 16);
    ram_[o + 3] = uint8_t(v >> 24);
  }
  uint16_t read16(uint32_t addr) const {
    uint32_t o = addr - assembler::kCodeBase;
    return uint16_t(ram_[o]) | uint16_t(ram_[o + 1]) << 8;
  }
  void write16(uint32_t addr, uint16_t v) {
    uint32_t o = addr - assembler::kCodeBase;
    ram_[o] = uint8_t(v);
    ram_[o + 1] = uint8_t(v >> 8);
  }

 private:
  std::vector<uint8_t> ram_;
};

struct ArchState {
  uint32_t pc = assembler::kCodeBase;
  std::array<uint32_t, 32> regs{};
  Memory mem;
  // Block bookkeeping: remaining instructions in the announced block (IC),
  // next-block target (T), pending delayed-branch budget (B), error flag (E).
  uint32_t ic = 0;
  uint32_t t = 0;
  uint32_t b = 0;
  uint32_t e = 0;
  std::array<LoopSet, 4> loops{};
  Mode mode = Mode::BbRequired;
  uint64_t retired = 0;
};

struct RetireEntry {
  uint64_t index = 0;
  uint32_t addr = 0;
  isa::Instruction ins;

  bool operator==(const RetireEntry&) const = default;
};

// Everything the pipeline needs to mirror one architectural step.
struct StepResult {
  StopKind stop = StopKind::None;
  int exitCode = 0;
  uint32_t pc = 0;
  isa::Instruction ins;
  uint32_t nextPc = 0;
  bool branchTaken = false;  // control-flow instructions only
  bool wroteT = false;       // control-flow wrote its redirect into T
  bool memAccess = false;
  bool memIsStore = false;
  uint32_t memAddr = 0;
  uint32_t memLen = 0;
  std::optional<uint8_t> outByte;
};

StepResult step(ArchState& s);

// Shared loop bookkeeping for a bb executing at IC=0. Returns the chosen next-
// block target and B through the out-params exactly as the architectural rules
// dictate; used by both the interpreter and the fetch-unit mirror.
enum class BbControl { DelayedBranch, Sequential, LoopBack };
BbControl applyBbLoopFlags(std::array<LoopSet, 4>& loops, const isa::Instruction& bb, uint32_t pc,
                           uint32_t& target);

struct RunResult {
  std::vector<RetireEntry> log;
  StopKind stop = StopKind::FuelExhausted;
  int exitCode = 0;
  uint32_t stopPc = 0;
  std::string output;
  ArchState state;
};

void loadInto(ArchState& s, const assembler::ProgramImage& img);
RunResult run(const assembler::ProgramImage& img, Mode mode, uint64_t fuel = 50'000'000);

// Fetch-order walk: the addresses a non-speculative fetch unit requests, with
// the next block's bb interposed at the point its address becomes known.
std::vector<uint32_t> fetchOrderTrace(const assembler::ProgramImage& img, size_t maxEntries = 4096);

}  // namespace bbrv::refmodel
