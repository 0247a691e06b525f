#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "bbrv/cfg.hpp"
#include "bbrv/pipeline.hpp"

namespace bbrv::harness {

enum class CodeVersion { Baseline, BBInfo, BBResched, BBReschedHW };
const char* versionName(CodeVersion v);

struct ConfigPreset {
  std::string name;
  pipeline::PipelineConfig cfg;  // mode is overridden per code version
};

struct BenchMatrix {
  std::string corpusDir = "corpus";
  std::vector<std::string> programs;
  std::vector<CodeVersion> versions;
  std::vector<ConfigPreset> configs;
  int jobs = 1;
};

// the bundled five-kernel corpus across the standard hardware presets
BenchMatrix defaultMatrix(const std::string& corpusDir = "corpus");
// every strategy x resolve stage x cache on/off, for exhaustive checking
BenchMatrix fullMatrix(const std::string& corpusDir = "corpus");

// name of the run every ratio is normalized against
inline constexpr const char* kBaselineConfig = "baseline";

struct CellResult {
  std::string program;
  CodeVersion version = CodeVersion::Baseline;
  std::string config;
  pipeline::RunStats stats;
  int exitCode = 0;
  double ratio = 0.0;  // cycles / cycles(program, Baseline code, baseline config)
  pipeline::Hotspot hotspot;
  cfg::SizeReport sizeReport;  // of the transform that produced this code
};

struct BenchResult {
  std::vector<CellResult> cells;  // ordered by (program, version, config)
};

struct OracleMismatch : std::runtime_error {
  explicit OracleMismatch(const std::string& m) : std::runtime_error(m) {}
};

BenchResult runMatrix(const BenchMatrix& m);

double normalize(uint64_t cycles, uint64_t baselineCycles);  // 4 decimal places

std::string reportJson(const BenchResult& r);
std::string reportCsv(const BenchResult& r);

}  // namespace bbrv::harness
