#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bbrv/harness.hpp"

using namespace bbrv;
using namespace bbrv::harness;

namespace {
const std::string kCorpus = std::string(BBRV_SOURCE_DIR) + "/corpus";
}

TEST_CASE("normalization is exact division reported to four decimals") {
  CHECK(normalize(15708006, 6153312) == doctest::Approx(2.5528).epsilon(1e-12));
  // 5175286/6153312 = 0.841057, exactly 0.8411 at four decimals
  CHECK(normalize(5175286, 6153312) == doctest::Approx(0.8411).epsilon(1e-12));
  CHECK(normalize(12345, 12345) == 1.0);
  CHECK_THROWS_AS(normalize(1, 0), std::domain_error);
}

TEST_CASE("a small matrix runs, normalizes against the plain run, and reports") {
  BenchMatrix m;
  m.corpusDir = kCorpus;
  m.programs = {"dot256"};
  m.versions = {CodeVersion::Baseline, CodeVersion::BBResched};
  m.configs = {{"baseline", [] {
                  pipeline::PipelineConfig c;
                  c.strategy = pipeline::Strategy::Baseline;
                  return c;
                }()},
               {"basicblocker", [] {
                  pipeline::PipelineConfig c;
                  c.strategy = pipeline::Strategy::BasicBlocker;
                  return c;
                }()}};
  auto r = runMatrix(m);
  REQUIRE(r.cells.size() == 4);
  for (const auto& c : r.cells) {
    CHECK(c.stats.cycles > 0);
    CHECK(c.ratio > 0.0);
    if (c.version == CodeVersion::Baseline && c.config == "baseline") CHECK(c.ratio == 1.0);
    if (c.version == CodeVersion::BBResched) {
      CHECK(c.hotspot.meanSize > 0.0);
      CHECK(c.sizeReport.blocks > 0);
    }
  }
  auto csv = reportCsv(r);
  CHECK(csv.find("dot256,bb-resched,basicblocker,") != std::string::npos);
  auto json = reportJson(r);
  CHECK(json.find("\"wait_bb\"") != std::string::npos);
}

TEST_CASE("the normalization row is kept even when the matrix omits it") {
  BenchMatrix m;
  m.corpusDir = kCorpus;
  m.programs = {"crc32"};
  m.versions = {CodeVersion::BBInfo};
  m.configs = {{"basicblocker", [] {
                  pipeline::PipelineConfig c;
                  c.strategy = pipeline::Strategy::BasicBlocker;
                  return c;
                }()}};
  auto r = runMatrix(m);
  REQUIRE(r.cells.size() == 2);
  bool sawBase = false;
  for (const auto& c : r.cells)
    if (c.version == CodeVersion::Baseline && c.config == kBaselineConfig) {
      sawBase = true;
      CHECK(c.ratio == 1.0);
    }
  CHECK(sawBase);
}

TEST_CASE("reports are byte-identical across invocations and worker counts") {
  auto m = defaultMatrix(kCorpus);
  m.programs = {"crc32", "fsm"};
  auto a = runMatrix(m);
  m.jobs = 4;
  auto b = runMatrix(m);
  CHECK(reportJson(a) == reportJson(b));
  CHECK(reportCsv(a) == reportCsv(b));
}

TEST_CASE("an empty matrix yields a header-only table") {
  BenchMatrix m;
  auto r = runMatrix(m);
  CHECK(r.cells.empty());
  auto csv = reportCsv(r);
  CHECK(csv.find("program,version,config") == 0);
  CHECK(csv.find('\n') == csv.size() - 1);
}

TEST_CASE("a missing program source aborts with a named cell") {
  BenchMatrix m = defaultMatrix(kCorpus);
  m.programs = {"no-such-kernel"};
  CHECK_THROWS_AS(runMatrix(m), OracleMismatch);
}
