#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpnet/correlator.hpp"
#include "dpnet/simnet.hpp"

namespace dpnet {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DetectionConfig {
  double cl = 0.95;
  size_t window_bins = 256;
  size_t mc_trials = 200;
  size_t mc_bins_per_trial = 2048;
  std::vector<double> known_lines_hz;
  double line_match_tol_hz = 0.02;
  double cross_amplitude_factor = 3.0;
  double uniformity_nsigma = 5.0;
  // Off by default: per-bin thresholds mirror the ~5% candidate convention.
  bool global_threshold = false;

  void validate() const;
};

struct PipelineConfig {
  RunSpec run;
  SpectralConfig spectral;
  DetectionConfig detection;
  std::string output_dir = "out";

  void validate() const;
};

nlohmann::ordered_json run_spec_to_json(const RunSpec& spec);
RunSpec run_spec_from_json(const nlohmann::json& j);

nlohmann::ordered_json spectral_to_json(const SpectralConfig& cfg);
SpectralConfig spectral_from_json(const nlohmann::json& j);

nlohmann::ordered_json detection_to_json(const DetectionConfig& cfg);
DetectionConfig detection_from_json(const nlohmann::json& j);

nlohmann::ordered_json pipeline_config_to_json(const PipelineConfig& cfg);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j,
                                         const std::filesystem::path& base_dir);

// Parses a config file; parse errors carry line:column diagnostics.  A "run"
// entry may be an inline object or a path to a run-spec JSON file (resolved
// against the config's directory; missing files are load-time errors).
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

// FNV-1a over the canonical JSON dump; embedded in every output artifact.
uint64_t config_hash(const PipelineConfig& cfg);
uint64_t run_spec_hash(const RunSpec& spec);

PipelineConfig default_pipeline_config(uint64_t seed);

}  // namespace dpnet
