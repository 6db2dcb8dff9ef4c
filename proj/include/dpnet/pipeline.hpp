#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpnet/config.hpp"

namespace dpnet {

struct ReproduceOptions {
  uint64_t seed = 20260801;
  std::filesystem::path out_dir = "reproduction";
  size_t sensitivity_seeds = 10;
  size_t injection_seeds = 50;
  size_t mc_trials = 200;
  int n_workers = 0;
};

struct StageResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ReproduceReport {
  std::vector<StageResult> stages;
  bool all_pass = false;

  nlohmann::ordered_json to_json() const;
  std::string to_text() const;  // one PASS/FAIL line per stage
};

// Runs the full desk-scale reproduction: coefficient and band checks,
// correlator counts, sensitivity scaling with the power-law fit, common-mode
// asymmetry statistics, Monte-Carlo threshold consistency, the
// injection/recovery grid with the veto battery, and the exclusion-limit
// sanity checks.  Writes plot-ready artifacts (all byte-deterministic in the
// options) into out_dir.
ReproduceReport reproduce_paper(const ReproduceOptions& options);

// Deterministic float formatting shared by all artifact writers.
std::string format_double(double v);

void write_text_file(const std::filesystem::path& path, const std::string& text);

// CSV with a "# tool_version=... config_hash=..." provenance comment line;
// rows are preformatted data lines.
void write_csv(const std::filesystem::path& path, uint64_t config_hash,
               const std::string& header,
               const std::vector<std::string>& lines);

}  // namespace dpnet
