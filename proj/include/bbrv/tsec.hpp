#pragma once

#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "bbrv/pipeline.hpp"
#include "bbrv/trace.hpp"

namespace bbrv::tsec {

// The retirement side of a run, paired with the trace-event side by run id so
// the two halves of one execution cannot be mixed up across runs.
struct RetireInfo {
  uint64_t runId = 0;
  std::set<uint64_t> retiredFids;
  std::set<uint64_t> pendingFids;  // in flight at termination; would have retired
  uint64_t exceptionFid = ~0ull;
};

RetireInfo retireInfo(const pipeline::SimResult& run);

struct MismatchedRun : std::runtime_error {
  explicit MismatchedRun(const std::string& m) : std::runtime_error(m) {}
};

// A run satisfies the property when every microarchitectural state change was
// caused by an instruction that retired. Instructions still in flight at
// termination are excused; an instruction that raised the exception ending the
// run is excused only under the ordinary (non-strict) reading.
struct TsecVerdict {
  uint64_t eventsChecked = 0;
  std::vector<trace::TraceEvent> violations;
  std::vector<trace::TraceEvent> exceptionExcused;

  bool secure() const { return violations.empty(); }
  bool strongSecure() const { return violations.empty() && exceptionExcused.empty(); }
};

TsecVerdict checkTsec(const trace::TraceEventLog& events, const RetireInfo& retired);

std::string verdictJson(const TsecVerdict& v, bool strict);

// Bounds-check-bypass experiment: a victim branch is trained taken, then run
// with an out-of-bounds index. The guarded load's address depends on a secret;
// if a transient execution of that load reaches the data cache, the secret can
// be recovered by probing which line was installed.
struct SpectreResult {
  bool leaked = false;
  int recovered = -1;
  int secret = 0;
  pipeline::SimResult run;
};

SpectreResult spectreV1Scenario(pipeline::Strategy strategy,
                                pipeline::ResolveStage resolve = pipeline::ResolveStage::MEM);

}  // namespace bbrv::tsec
