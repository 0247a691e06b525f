#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bbrv/asmlang.hpp"

namespace bbrv::cfg {

struct CfgError : std::runtime_error {
  explicit CfgError(const std::string& m) : std::runtime_error(m) {}
};

struct Block {
  std::vector<std::string> labels;  // all labels naming this block's start
  std::vector<assembler::AsmInstr> instrs;
  int termIdx = -1;  // position of the single control-flow instruction, -1 if none
  bool hasBb = false;  // instrs[0] is the announcing bb
  std::vector<std::string> succs;
  bool computedSucc = false;  // jalr: target unknown statically
  int reschedParam = 0;       // instructions executing after the terminator

  const std::string& name() const { return labels.front(); }
  bool seq() const { return termIdx < 0; }
  // announced size: instructions excluding the bb itself
  size_t bodySize() const { return instrs.size() - (hasBb ? 1 : 0); }
};

struct Cfg {
  std::vector<Block> blocks;  // memory order
  std::string entry;
  std::vector<assembler::Item> prologue;  // directives before code (.globl ...)
  std::vector<assembler::Item> trailer;   // data sections (.org onward), verbatim
};

Cfg buildCfg(const assembler::SourceUnit& src);
Cfg splitAtCalls(Cfg g);
Cfg insertBb(Cfg g);
Cfg rescheduleTerminators(Cfg g);
Cfg placeHardwareLoops(Cfg g);

assembler::SourceUnit toSource(const Cfg& g);

struct BlockStat {
  std::string label;
  size_t size = 0;  // announced block size n
  int reschedParam = 0;
};

struct SizeReport {
  size_t originalInstrs = 0;
  size_t transformedInstrs = 0;
  size_t blocks = 0;
  size_t lcnts = 0;
  int64_t addedInstrs = 0;  // negative when loop placement deletes more than it adds
  double overhead = 0.0;  // addedInstrs / originalInstrs
  std::vector<BlockStat> perBlock;
};

SizeReport codeSizeReport(const Cfg& before, const Cfg& after);

struct TransformOptions {
  bool resched = true;
  bool hwloops = false;
};

struct TransformResult {
  assembler::SourceUnit out;
  Cfg graph;
  SizeReport report;
};

TransformResult transform(const assembler::SourceUnit& src, const TransformOptions& opt);

std::string reportJson(const SizeReport& r);

}  // namespace bbrv::cfg
