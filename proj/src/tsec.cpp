#include "bbrv/tsec.hpp"

#include <json.hpp>

#include "bbrv/asmlang.hpp"

namespace bbrv::tsec {

RetireInfo retireInfo(const pipeline::SimResult& run) {
  RetireInfo info;
  info.runId = run.runId;
  info.retiredFids = run.retiredFids;
  info.pendingFids = run.pendingFids;
  info.exceptionFid = run.exceptionFid;
  return info;
}

TsecVerdict checkTsec(const trace::TraceEventLog& events, const RetireInfo& retired) {
  if (events.runId != retired.runId)
    throw MismatchedRun("trace events from run " + std::to_string(events.runId) +
                        " checked against retirement info from run " +
                        std::to_string(retired.runId));
  TsecVerdict v;
  for (const auto& ev : events.events) {
    v.eventsChecked++;
    if (retired.retiredFids.count(ev.causeFid)) continue;
    if (retired.pendingFids.count(ev.causeFid)) continue;
    if (ev.causeFid == retired.exceptionFid) {
      v.exceptionExcused.push_back(ev);
      continue;
    }
    v.violations.push_back(ev);
  }
  return v;
}

std::string verdictJson(const TsecVerdict& v, bool strict) {
  nlohmann::json j;
  j["events_checked"] = v.eventsChecked;
  j["secure"] = strict ? v.strongSecure() : v.secure();
  j["strict"] = strict;
  j["violations"] = nlohmann::json::array();
  for (const auto& ev : v.violations) {
    j["violations"].push_back({{"cycle", ev.cycle},
                               {"resource", trace::resourceName(ev.res)},
                               {"addr", ev.addr},
                               {"cause_fid", ev.causeFid},
                               {"cause_pc", ev.causePc}});
  }
  j["exception_excused"] = v.exceptionExcused.size();
  return j.dump(2);
}

namespace {

// Victim with a bounds check guarding a load. The caller passes the index in
// a2, the bound in a3 and the load address in a1; out of bounds skips the load.
constexpr const char* kSpectreGadget = R"(
    .globl _start
_start:
    la   s2, probe
    la   s3, secretw
    lw   s4, 0(s3)          # secret value
    slli s4, s4, 6          # one cache line of spacing per value
    add  s4, s2, s4         # address the transient load would touch
    la   s5, safe
    li   s6, 8              # training passes
train:
    mv   a1, s5             # in-bounds load address
    li   a2, 0
    li   a3, 4
    jal  ra, victim         # bounds check taken: load executes
    addi s6, s6, -1
    bne  s6, zero, train
    mv   a1, s4             # now the secret-derived address...
    li   a2, 100            # ...with an out-of-bounds index
    li   a3, 4
    jal  ra, victim         # bounds check fails: load must not execute
    li   a7, 93
    li   a0, 0
    ecall

victim:
    blt  a2, a3, vload
    ret
    nop                     # keep the guarded load out of sequential
    nop                     # fetch range behind the return
    nop
vload:
    lw   t4, 0(a1)
    ret

    .org 0x80100000
secretw:
    .word 7
    .space 60
safe:
    .word 0
    .space 60
probe:
    .space 1024
)";

}  // namespace

SpectreResult spectreV1Scenario(pipeline::Strategy strategy, pipeline::ResolveStage resolve) {
  auto img = assembler::assemble(assembler::parse(kSpectreGadget));

  pipeline::PipelineConfig cfg;
  cfg.strategy = strategy;
  cfg.branchResolveStage = resolve;
  cfg.mode = refmodel::Mode::Legacy;

  SpectreResult res;
  res.secret = 7;
  res.run = pipeline::simulate(img, cfg);

  uint32_t probe = img.symbols.at("probe");
  for (int g = 0; g < 16; ++g) {
    if (res.run.dcacheHasLine(probe + static_cast<uint32_t>(g) * 64)) {
      res.leaked = true;
      if (res.recovered < 0) res.recovered = g;
    }
  }
  return res;
}

}  // namespace bbrv::tsec
