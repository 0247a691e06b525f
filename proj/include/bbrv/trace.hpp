#pragma once

#include <cstdint>
#include <vector>

namespace bbrv::trace {

// Every microarchitectural state change a run makes, tagged with the dynamic
// instruction (fetch-sequence id) that caused it. The leakage checker later
// compares causes against the set of instructions that actually retired.
enum class Resource : uint8_t {
  ICacheLine,  // addr = line-aligned address installed
  DCacheLine,
  BhtEntry,  // addr = table index
  BtbEntry,
  RegFile,  // addr = register number
  PcWrite,
  BbState,  // addr = 0:IC 1:T 2:B 3:E 4:P
  LoopSet,  // addr = set index
  FetchBus,  // addr = fetched address; emitted for every fetch, hit or miss
};

const char* resourceName(Resource r);

struct TraceEvent {
  uint64_t cycle = 0;
  Resource res = Resource::FetchBus;
  uint32_t addr = 0;
  uint64_t causeFid = 0;  // fetch-sequence number of the causing instruction
  uint32_t causePc = 0;
};

struct TraceEventLog {
  uint64_t runId = 0;
  std::vector<TraceEvent> events;
};

}  // namespace bbrv::trace
