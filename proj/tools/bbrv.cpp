// Command-line front end: assemble, disassemble, transform, execute and
// measure programs for the block-announcing pipeline.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "bbrv/asmlang.hpp"
#include "bbrv/cfg.hpp"
#include "bbrv/harness.hpp"
#include "bbrv/pipeline.hpp"
#include "bbrv/refmodel.hpp"
#include "bbrv/tsec.hpp"

using namespace bbrv;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

refmodel::Mode parseMode(const std::string& m) {
  if (m == "bb") return refmodel::Mode::BbRequired;
  if (m == "legacy") return refmodel::Mode::Legacy;
  throw CLI::ValidationError("--mode", "expected bb or legacy");
}

pipeline::Strategy parseStrategyOrDie(const std::string& name) {
  pipeline::Strategy s;
  if (!pipeline::parseStrategy(name, s))
    throw CLI::ValidationError("--strategy", "unknown strategy " + name);
  return s;
}

// When no mode is given, bb-fetch pipelines get announced-block semantics and
// everything else runs the program as plain code.
refmodel::Mode defaultModeFor(pipeline::Strategy s) {
  return s == pipeline::Strategy::BasicBlocker ? refmodel::Mode::BbRequired
                                               : refmodel::Mode::Legacy;
}

int cmdAsm(const std::string& in, const std::string& out) {
  auto img = assembler::assemble(assembler::parse(slurp(in)));
  assembler::saveImage(img, out);
  return 0;
}

int cmdDis(const std::string& in) {
  auto img = assembler::loadImage(in);
  std::cout << assembler::render(assembler::disassemble(img));
  return 0;
}

int cmdRun(const std::string& in, const std::string& mode, uint64_t fuel,
           const std::string& trace, const std::string& dumpRange) {
  auto img = assembler::loadImage(in);
  if (trace == "fetch") {
    for (uint32_t a : refmodel::fetchOrderTrace(img)) std::printf("%08x\n", a);
    return 0;
  }
  auto r = refmodel::run(img, parseMode(mode), fuel);
  if (trace == "retire")
    for (const auto& e : r.log)
      std::printf("%8llu  %08x  %s\n", static_cast<unsigned long long>(e.index), e.addr,
                  isa::mnemonic(e.ins.op));
  if (!r.output.empty()) std::cout << r.output;
  std::fprintf(stderr, "stop=%s exit=%d retired=%zu pc=%08x\n", refmodel::stopName(r.stop),
               r.exitCode, r.log.size(), r.stopPc);
  if (!dumpRange.empty()) {
    uint32_t addr = 0, len = 0;
    if (std::sscanf(dumpRange.c_str(), "%x:%x", &addr, &len) != 2)
      throw CLI::ValidationError("--dump-range", "expected hexaddr:hexlen");
    for (uint32_t i = 0; i < len; i += 4)
      std::printf("%08x: %08x\n", addr + i, r.state.mem.read32(addr + i));
  }
  return r.stop == refmodel::StopKind::Halted ? r.exitCode : 1;
}

int cmdTransform(const std::string& in, const std::string& out, bool noResched, bool hwloops,
                 const std::string& report) {
  cfg::TransformOptions opt;
  opt.resched = !noResched;
  opt.hwloops = hwloops;
  auto r = cfg::transform(assembler::parse(slurp(in)), opt);
  spill(out, assembler::render(r.out));
  if (!report.empty()) spill(report, cfg::reportJson(r.report));
  return 0;
}

int cmdSim(const std::string& in, const std::string& strategy, const std::string& resolve,
           const std::string& bbForward, bool dualPort, bool noCache, const std::string& mode,
           const std::string& statsOut) {
  auto img = assembler::loadImage(in);
  pipeline::PipelineConfig cfg;
  cfg.strategy = parseStrategyOrDie(strategy);
  cfg.branchResolveStage =
      resolve == "ex" ? pipeline::ResolveStage::EX : pipeline::ResolveStage::MEM;
  if (resolve != "ex" && resolve != "mem")
    throw CLI::ValidationError("--resolve", "expected ex or mem");
  cfg.bbForwardStage = bbForward == "id" ? pipeline::BbForward::ID : pipeline::BbForward::EX;
  if (bbForward != "ex" && bbForward != "id")
    throw CLI::ValidationError("--bb-forward", "expected ex or id");
  cfg.dualPortBb = dualPort;
  if (noCache) cfg.icache.enabled = cfg.dcache.enabled = false;
  cfg.mode = mode.empty() ? defaultModeFor(cfg.strategy) : parseMode(mode);
  auto r = pipeline::simulate(img, cfg);
  if (!r.output.empty()) std::cout << r.output;
  std::fprintf(stderr, "stop=%s exit=%d cycles=%llu retired=%llu\n", refmodel::stopName(r.stop),
               r.exitCode, static_cast<unsigned long long>(r.stats.cycles),
               static_cast<unsigned long long>(r.stats.retired));
  auto json = pipeline::statsJson(r, cfg);
  if (statsOut.empty())
    std::cout << json;
  else
    spill(statsOut, json);
  return r.stop == refmodel::StopKind::Halted ? r.exitCode : 1;
}

int cmdTsec(const std::string& in, const std::string& strategy, bool strong,
            const std::string& mode) {
  auto img = assembler::loadImage(in);
  pipeline::PipelineConfig cfg;
  cfg.strategy = parseStrategyOrDie(strategy);
  cfg.mode = mode.empty() ? defaultModeFor(cfg.strategy) : parseMode(mode);
  auto r = pipeline::simulate(img, cfg);
  auto v = tsec::checkTsec(r.events, tsec::retireInfo(r));
  std::cout << tsec::verdictJson(v, strong);
  bool ok = strong ? v.strongSecure() : v.secure();
  return ok ? 0 : 1;
}

// key=value overrides for the measurement matrix. Documented keys:
//   corpus=DIR  programs=a,b,c  jobs=N
void applyBenchConfig(harness::BenchMatrix& m, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("bad config line: " + line);
    std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "corpus") {
      m.corpusDir = val;
    } else if (key == "jobs") {
      m.jobs = std::stoi(val);
    } else if (key == "programs") {
      m.programs.clear();
      std::istringstream ss(val);
      std::string p;
      while (std::getline(ss, p, ',')) m.programs.push_back(p);
    } else {
      throw std::runtime_error("unknown config key: " + key);
    }
  }
}

int cmdBench(const std::string& matrix, const std::string& corpus, const std::string& out,
             const std::string& csv, int jobs, const std::string& configFile) {
  harness::BenchMatrix m;
  if (matrix == "default")
    m = harness::defaultMatrix(corpus);
  else if (matrix == "full")
    m = harness::fullMatrix(corpus);
  else
    throw CLI::ValidationError("--matrix", "expected default or full");
  m.jobs = jobs;
  if (!configFile.empty()) applyBenchConfig(m, configFile);
  auto r = harness::runMatrix(m);
  auto json = harness::reportJson(r);
  if (out.empty())
    std::cout << json;
  else
    spill(out, json);
  if (!csv.empty()) spill(csv, harness::reportCsv(r));
  std::fprintf(stderr, "%zu cells\n", r.cells.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"toolchain for the block-announcing pipeline"};
  app.require_subcommand(1);

  std::string in, out, report, statsOut;
  std::string mode, runMode = "bb", trace, dumpRange, strategy, resolve = "mem", bbForward = "ex";
  std::string matrix = "default", corpus = "corpus", csv, configFile;
  uint64_t fuel = 50'000'000;
  bool noResched = false, hwloops = false, dualPort = false, noCache = false, strong = false;
  int jobs = 1;

  auto* a = app.add_subcommand("asm", "assemble a source file into an image");
  a->add_option("input", in)->required();
  a->add_option("-o,--output", out)->required();

  auto* d = app.add_subcommand("dis", "disassemble an image");
  d->add_option("input", in)->required();

  auto* r = app.add_subcommand("run", "execute an image on the reference interpreter");
  r->add_option("input", in)->required();
  r->add_option("--mode", runMode, "bb or legacy");
  r->add_option("--fuel", fuel, "instruction budget");
  r->add_option("--trace", trace, "fetch or retire");
  r->add_option("--dump-range", dumpRange, "hexaddr:hexlen memory dump after the run");

  auto* t = app.add_subcommand("transform", "rewrite plain code into announced-block form");
  t->add_option("input", in)->required();
  t->add_option("-o,--output", out)->required();
  t->add_flag("--no-resched", noResched, "keep terminators in place");
  t->add_flag("--hwloops", hwloops, "replace eligible counted loops with loop counters");
  t->add_option("--report", report, "write the size/shape report JSON here");

  auto* s = app.add_subcommand("sim", "run an image on the cycle-accurate pipeline");
  s->add_option("input", in)->required();
  s->add_option("--strategy", strategy)->required();
  s->add_option("--resolve", resolve, "ex or mem");
  s->add_option("--bb-forward", bbForward, "ex or id");
  s->add_flag("--dual-port-bb", dualPort);
  s->add_flag("--no-cache", noCache);
  s->add_option("--mode", mode, "bb or legacy (default follows the strategy)");
  s->add_option("--stats", statsOut, "write the stats JSON here instead of stdout");

  auto* ts = app.add_subcommand("tsec", "check the speculation-security property of a run");
  ts->add_option("input", in)->required();
  ts->add_option("--strategy", strategy)->required();
  ts->add_flag("--strong", strong, "also reject exception-excused effects");
  ts->add_option("--mode", mode, "bb or legacy (default follows the strategy)");

  auto* b = app.add_subcommand("bench", "run the measurement matrix");
  b->add_option("--matrix", matrix, "default or full");
  b->add_option("--corpus", corpus, "directory with the kernel sources");
  b->add_option("--out", out, "report JSON path");
  b->add_option("--csv", csv, "report CSV path");
  b->add_option("--jobs", jobs, "worker count");
  b->add_option("--config", configFile, "key=value overrides (corpus, programs, jobs)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (a->parsed()) return cmdAsm(in, out);
    if (d->parsed()) return cmdDis(in);
    if (r->parsed()) return cmdRun(in, runMode, fuel, trace, dumpRange);
    if (t->parsed()) return cmdTransform(in, out, noResched, hwloops, report);
    if (s->parsed()) return cmdSim(in, strategy, resolve, bbForward, dualPort, noCache, mode, statsOut);
    if (ts->parsed()) return cmdTsec(in, strategy, strong, mode);
    if (b->parsed()) return cmdBench(matrix, corpus, out, csv, jobs, configFile);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
