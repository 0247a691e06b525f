#include "bbrv/harness.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>
#include <thread>

#include "bbrv/refmodel.hpp"

namespace bbrv::harness {

using assembler::ProgramImage;
using pipeline::PipelineConfig;
using pipeline::ResolveStage;
using pipeline::Strategy;

const char* versionName(CodeVersion v) {
  switch (v) {
    case CodeVersion::Baseline: return "baseline";
    case CodeVersion::BBInfo: return "bb-info";
    case CodeVersion::BBResched: return "bb-resched";
    case CodeVersion::BBReschedHW: return "bb-resched-hw";
  }
  return "?";
}

namespace {

PipelineConfig preset(Strategy s, ResolveStage r = ResolveStage::MEM, bool caches = true) {
  PipelineConfig c;
  c.strategy = s;
  c.branchResolveStage = r;
  c.icache.enabled = caches;
  c.dcache.enabled = caches;
  return c;
}

const Strategy kStrategies[] = {Strategy::Simplest,  Strategy::Baseline,
                                Strategy::StaticBP,  Strategy::DynamicBP,
                                Strategy::DynamicTargetBP, Strategy::BasicBlocker};

std::string readFile(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw OracleMismatch("cannot open program source: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// one assembled code version of one program, plus its reference run
struct BuiltVersion {
  ProgramImage img;
  cfg::SizeReport report;
  refmodel::Mode mode = refmodel::Mode::BbRequired;
  refmodel::RunResult ref;
};

BuiltVersion buildVersion(const assembler::SourceUnit& src, CodeVersion v) {
  BuiltVersion b;
  if (v == CodeVersion::Baseline) {
    b.img = assembler::assemble(src);
    b.mode = refmodel::Mode::Legacy;
  } else {
    cfg::TransformOptions opt;
    opt.resched = v != CodeVersion::BBInfo;
    opt.hwloops = v == CodeVersion::BBReschedHW;
    auto tr = cfg::transform(src, opt);
    b.img = assembler::assemble(tr.out);
    b.report = std::move(tr.report);
    b.mode = refmodel::Mode::BbRequired;
  }
  b.ref = refmodel::run(b.img, b.mode);
  return b;
}

void checkOracle(const std::string& cellName, const pipeline::SimResult& sim,
                 const refmodel::RunResult& ref) {
  auto fail = [&](const std::string& what) {
    throw OracleMismatch("oracle mismatch in " + cellName + ": " + what);
  };
  if (sim.stop != ref.stop) fail("stop kind differs");
  if (sim.exitCode != ref.exitCode) fail("exit code differs");
  if (sim.output != ref.output) fail("console output differs");
  if (sim.log.size() != ref.log.size()) fail("retirement log length differs");
  for (size_t i = 0; i < ref.log.size(); ++i)
    if (!(sim.log[i] == ref.log[i])) fail("retirement log entry " + std::to_string(i));
  for (uint32_t a = assembler::kDataBase; a < assembler::kCodeBase + assembler::kRamSize; a += 4)
    if (sim.state.mem.read32(a) != ref.state.mem.read32(a))
      fail("data word at " + std::to_string(a));
}

}  // namespace

BenchMatrix defaultMatrix(const std::string& corpusDir) {
  BenchMatrix m;
  m.corpusDir = corpusDir;
  m.programs = {"matmul8", "crc32", "isort64", "dot256", "fsm"};
  m.versions = {CodeVersion::Baseline, CodeVersion::BBInfo, CodeVersion::BBResched,
                CodeVersion::BBReschedHW};
  m.configs = {
      {"simplest", preset(Strategy::Simplest)},
      {"baseline", preset(Strategy::Baseline)},
      {"static-bp", preset(Strategy::StaticBP)},
      {"dynamic-bp", preset(Strategy::DynamicBP)},
      {"dynamic-target-bp", preset(Strategy::DynamicTargetBP)},
      {"basicblocker", preset(Strategy::BasicBlocker)},
      {"basicblocker-ex", preset(Strategy::BasicBlocker, ResolveStage::EX)},
  };
  auto dual = preset(Strategy::BasicBlocker);
  dual.dualPortBb = true;
  m.configs.push_back({"basicblocker-dual", dual});
  return m;
}

BenchMatrix fullMatrix(const std::string& corpusDir) {
  BenchMatrix m;
  m.corpusDir = corpusDir;
  m.programs = {"matmul8", "crc32", "isort64", "dot256", "fsm"};
  m.versions = {CodeVersion::Baseline, CodeVersion::BBInfo, CodeVersion::BBResched,
                CodeVersion::BBReschedHW};
  for (Strategy s : kStrategies)
    for (ResolveStage r : {ResolveStage::MEM, ResolveStage::EX})
      for (bool caches : {true, false}) {
        std::string name = std::string(strategyName(s)) +
                           (r == ResolveStage::EX ? "-ex" : "-mem") +
                           (caches ? "-cache" : "-nocache");
        m.configs.push_back({name, preset(s, r, caches)});
      }
  return m;
}

double normalize(uint64_t cycles, uint64_t baselineCycles) {
  if (baselineCycles == 0) throw std::domain_error("normalization against zero cycles");
  double r = static_cast<double>(cycles) / static_cast<double>(baselineCycles);
  return std::round(r * 10000.0) / 10000.0;
}

BenchResult runMatrix(const BenchMatrix& m) {
  // assemble + transform + reference-run every (program, version) once
  std::map<std::pair<std::string, CodeVersion>, BuiltVersion> built;
  std::vector<CodeVersion> versions = m.versions;
  if (std::find(versions.begin(), versions.end(), CodeVersion::Baseline) == versions.end())
    versions.push_back(CodeVersion::Baseline);  // normalization needs the baseline code
  for (const auto& p : m.programs) {
    auto src = assembler::parse(readFile(m.corpusDir + "/" + p + ".s"));
    for (CodeVersion v : versions) built.emplace(std::make_pair(p, v), buildVersion(src, v));
  }

  struct Cell {
    std::string program;
    CodeVersion version;
    std::string config;
    const PipelineConfig* cfg;
  };
  std::vector<Cell> cells;
  PipelineConfig baseCfg = preset(Strategy::Baseline);
  for (const auto& p : m.programs) {
    bool haveBase = false;
    for (CodeVersion v : m.versions)
      for (const auto& c : m.configs) {
        cells.push_back({p, v, c.name, &c.cfg});
        haveBase |= v == CodeVersion::Baseline && c.name == kBaselineConfig;
      }
    // keep the normalization source row in the report even for partial matrices
    if (!haveBase) cells.push_back({p, CodeVersion::Baseline, kBaselineConfig, &baseCfg});
  }

  std::vector<CellResult> results(cells.size());
  std::atomic<size_t> next{0};
  std::exception_ptr firstError;
  std::mutex errMutex;

  auto worker = [&] {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        const Cell& c = cells[i];
        const BuiltVersion& b = built.at({c.program, c.version});
        PipelineConfig cfg = *c.cfg;
        cfg.mode = b.mode;
        auto sim = pipeline::simulate(b.img, cfg);
        checkOracle(c.program + "/" + versionName(c.version) + "/" + c.config, sim, b.ref);
        CellResult& r = results[i];
        r.program = c.program;
        r.version = c.version;
        r.config = c.config;
        r.stats = sim.stats;
        r.exitCode = sim.exitCode;
        r.sizeReport = b.report;
        if (c.version != CodeVersion::Baseline)
          r.hotspot = pipeline::hotspotAnalysis(sim.stats, b.report, b.img);
      } catch (...) {
        std::lock_guard<std::mutex> lk(errMutex);
        if (!firstError) firstError = std::current_exception();
        return;
      }
    }
  };

  int jobs = std::max(1, m.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (firstError) std::rethrow_exception(firstError);

  // normalization pass: denominator is the plain run of the untransformed code
  std::map<std::string, uint64_t> baseCycles;
  for (const auto& r : results)
    if (r.version == CodeVersion::Baseline && r.config == kBaselineConfig)
      baseCycles[r.program] = r.stats.cycles;
  for (auto& r : results) r.ratio = normalize(r.stats.cycles, baseCycles.at(r.program));

  BenchResult out;
  out.cells = std::move(results);
  return out;
}

namespace {

std::string fmt4(double v) {
  char buf[32];
  snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::string reportJson(const BenchResult& r) {
  nlohmann::json j;
  j["cells"] = nlohmann::json::array();
  for (const auto& c : r.cells) {
    nlohmann::json cell;
    cell["program"] = c.program;
    cell["version"] = versionName(c.version);
    cell["config"] = c.config;
    cell["cycles"] = c.stats.cycles;
    cell["retired"] = c.stats.retired;
    cell["exit_code"] = c.exitCode;
    cell["ratio"] = fmt4(c.ratio);
    cell["flushes"] = c.stats.flushes;
    cell["stalls"] = {{"wait_decode", c.stats.stalls.waitDecode},
                      {"wait_branch", c.stats.stalls.waitBranch},
                      {"wait_bb", c.stats.stalls.waitBb},
                      {"icache_miss", c.stats.stalls.icacheMiss},
                      {"dcache_miss", c.stats.stalls.dcacheMiss},
                      {"load_use", c.stats.stalls.loadUse}};
    cell["block_size_mean"] = c.hotspot.meanSize;
    cell["block_size_median"] = c.hotspot.medianSize;
    cell["resched_mean"] = c.hotspot.meanResched;
    cell["code_size"] = {{"blocks", c.sizeReport.blocks},
                         {"lcnts", c.sizeReport.lcnts},
                         {"added_instructions", c.sizeReport.addedInstrs},
                         {"overhead", c.sizeReport.overhead}};
    j["cells"].push_back(std::move(cell));
  }
  return j.dump(2) + "\n";
}

std::string reportCsv(const BenchResult& r) {
  std::ostringstream os;
  os << "program,version,config,cycles,ratio,wait_decode,wait_branch,wait_bb,"
        "icache_miss,dcache_miss,load_use,flushes,block_size_mean,block_size_median,"
        "resched_mean,code_overhead\n";
  for (const auto& c : r.cells) {
    os << c.program << ',' << versionName(c.version) << ',' << c.config << ','
       << c.stats.cycles << ',' << fmt4(c.ratio) << ',' << c.stats.stalls.waitDecode << ','
       << c.stats.stalls.waitBranch << ',' << c.stats.stalls.waitBb << ','
       << c.stats.stalls.icacheMiss << ',' << c.stats.stalls.dcacheMiss << ','
       << c.stats.stalls.loadUse << ',' << c.stats.flushes << ',' << fmt4(c.hotspot.meanSize)
       << ',' << fmt4(c.hotspot.medianSize) << ',' << fmt4(c.hotspot.meanResched) << ','
       << fmt4(c.sizeReport.overhead) << '\n';
  }
  return os.str();
}

}  // namespace bbrv::harness
