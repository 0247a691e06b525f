#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "bbrv/asmlang.hpp"
#include "bbrv/cfg.hpp"
#include "bbrv/refmodel.hpp"
#include "bbrv/trace.hpp"

namespace bbrv::pipeline {

enum class Strategy {
  Simplest,         // fetch gated on decode (resolve for control flow)
  Baseline,         // always fetch pc+4, redirect at resolve
  StaticBP,         // backward-taken / forward-not-taken at decode
  DynamicBP,        // 2-bit counters consumed at decode
  DynamicTargetBP,  // BTB consulted at fetch, direction from the 2-bit table
  BasicBlocker,     // block-announcement fetch unit, no speculation
};

const char* strategyName(Strategy s);
bool parseStrategy(const std::string& name, Strategy& out);

enum class ResolveStage { EX, MEM };
enum class BbForward { EX, ID };

struct CacheConfig {
  bool enabled = true;
  uint32_t sizeBytes = 4096;
  uint32_t lineBytes = 32;
  uint32_t missPenalty = 10;
};

struct PipelineConfig {
  Strategy strategy = Strategy::BasicBlocker;
  ResolveStage branchResolveStage = ResolveStage::MEM;
  BbForward bbForwardStage = BbForward::EX;
  bool dualPortBb = false;  // second fetch port dedicated to block announcements
  CacheConfig icache;
  CacheConfig dcache;
  uint32_t bhtEntries = 64;
  uint32_t btbEntries = 64;
  refmodel::Mode mode = refmodel::Mode::BbRequired;
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

struct StallBreakdown {
  uint64_t waitDecode = 0;  // fetch serialized behind decode (incl. cold starts)
  uint64_t waitBranch = 0;  // fetch waiting on control-flow resolution / redirect bubbles
  uint64_t waitBb = 0;      // fetch waiting on block-announcement data
  uint64_t icacheMiss = 0;
  uint64_t dcacheMiss = 0;
  uint64_t loadUse = 0;

  uint64_t total() const {
    return waitDecode + waitBranch + waitBb + icacheMiss + dcacheMiss + loadUse;
  }
};

struct RunStats {
  uint64_t cycles = 0;
  uint64_t retired = 0;
  uint64_t flushes = 0;       // slots killed by redirects
  uint64_t flushEvents = 0;   // redirects that killed at least one slot
  uint64_t issuedSlots = 0;   // fetches that consumed the issue port
  uint64_t freeSlots = 0;     // dual-port bb fetches (no issue slot consumed)
  uint64_t drainCycles = 0;   // cycles after the final fetch while the pipe empties
  StallBreakdown stalls;
  uint64_t predictions = 0;
  uint64_t mispredictions = 0;
  std::map<uint32_t, uint64_t> blockExec;      // bb address -> executions
  std::map<uint32_t, uint64_t> blockSizeHist;  // announced size -> executions
};

struct SimResult {
  RunStats stats;
  refmodel::StopKind stop = refmodel::StopKind::FuelExhausted;
  int exitCode = 0;
  std::vector<refmodel::RetireEntry> log;
  std::string output;
  refmodel::ArchState state;

  trace::TraceEventLog events;
  std::set<uint64_t> retiredFids;
  std::set<uint64_t> flushKilledFids;
  std::set<uint64_t> pendingFids;  // in flight when the run ended
  uint64_t exceptionFid = ~0ull;   // fid of the faulting instruction, if any
  uint64_t runId = 0;

  // final data-cache contents, for cache side-channel probes
  std::vector<uint32_t> dcacheLines;  // line-aligned addresses currently resident
  uint32_t dcacheLineBytes = 32;
  bool dcacheHasLine(uint32_t addr) const;
};

SimResult simulate(const assembler::ProgramImage& img, const PipelineConfig& cfg,
                   uint64_t maxCycles = 10'000'000);

// Execution-weighted shape of the hot blocks: block sizes and terminator
// displacement, weighted by how often each block ran.
struct Hotspot {
  double meanSize = 0.0;
  double medianSize = 0.0;
  double meanResched = 0.0;
  double medianResched = 0.0;
  std::map<uint32_t, uint64_t> sizeHist;
  std::map<uint32_t, uint64_t> reschedHist;
};

Hotspot hotspotAnalysis(const RunStats& stats, const cfg::SizeReport& report,
                        const assembler::ProgramImage& img);

std::string statsJson(const SimResult& r, const PipelineConfig& cfg);

}  // namespace bbrv::pipeline
