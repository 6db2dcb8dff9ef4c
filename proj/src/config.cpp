#include "dpnet/config.hpp"

#include <fstream>
#include <sstream>

#include "dpnet/rng.hpp"

namespace dpnet {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& what) { throw ConfigError(what); }

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

template <typename T>
T get_required(const json& j, const char* key) {
  if (!j.contains(key)) fail(std::string("config: missing required key '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

std::pair<size_t, size_t> line_col_of(const std::string& text, size_t byte) {
  size_t line = 1, col = 1;
  for (size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

void DetectionConfig::validate() const {
  if (cl <= 0.0 || cl >= 1.0) fail("detection: cl must be in (0, 1)");
  if (window_bins < 16) fail("detection: window_bins must be >= 16");
  if (mc_trials < 100) fail("detection: mc_trials must be >= 100");
  if (line_match_tol_hz < 0) fail("detection: line_match_tol_hz must be >= 0");
  if (cross_amplitude_factor < 1) fail("detection: cross_amplitude_factor must be >= 1");
  if (uniformity_nsigma <= 0) fail("detection: uniformity_nsigma must be > 0");
}

void PipelineConfig::validate() const {
  run.validate();
  detection.validate();
  spectral.validate(run.samples_per_record() > 0 ? run.samples_per_record()
                                                 : spectral.segment_samples,
                    run.sample_rate_hz);
}

ordered_json run_spec_to_json(const RunSpec& spec) {
  ordered_json j;
  j["duration_s"] = spec.duration_s;
  j["sample_rate_hz"] = spec.sample_rate_hz;
  j["seed"] = spec.seed;
  j["stations"] = ordered_json::array();
  for (const auto& st : spec.stations) {
    ordered_json js;
    js["station_id"] = st.station_id;
    js["location_label"] = st.location_label;
    js["common_mode_asd_t"] = st.common_mode_asd;
    js["common_mode_one_over_f"] = st.common_mode_one_over_f;
    js["one_over_f_knee_hz"] = st.one_over_f_knee_hz;
    js["shield_edge_m"] = st.shield.edge_length_m;
    js["clock_offset_s"] = st.clock_offset_s;
    js["clock_jitter_rms_s"] = st.clock_jitter_rms_s;
    j["stations"].push_back(std::move(js));
  }
  j["sensors"] = ordered_json::array();
  for (const auto& s : spec.sensors) {
    ordered_json js;
    js["sensor_id"] = s.sensor_id;
    js["station_id"] = s.station_id;
    js["noise_asd_t"] = s.noise_asd;
    js["coupling_factor"] = s.coupling_factor;
    if (!s.technical_lines.empty()) {
      js["technical_lines"] = ordered_json::array();
      for (const auto& line : s.technical_lines)
        js["technical_lines"].push_back({{"frequency_hz", line.frequency_hz},
                                         {"amplitude_t", line.amplitude_t},
                                         {"phase_rad", line.phase_rad}});
    }
    j["sensors"].push_back(std::move(js));
  }
  if (spec.dpdm) {
    j["dpdm"] = {{"frequency_hz", spec.dpdm->frequency_hz},
                 {"epsilon", spec.dpdm->epsilon},
                 {"phase_rad", spec.dpdm->phase_rad},
                 {"amplitude_scale", spec.dpdm->amplitude_scale}};
  }
  return j;
}

RunSpec run_spec_from_json(const json& j) {
  RunSpec spec;
  spec.duration_s = get_or(j, "duration_s", spec.duration_s);
  spec.sample_rate_hz = get_or(j, "sample_rate_hz", spec.sample_rate_hz);
  spec.seed = get_or(j, "seed", spec.seed);
  if (!j.contains("stations") || !j.contains("sensors"))
    fail("config: run spec needs 'stations' and 'sensors'");
  for (const auto& js : j.at("stations")) {
    StationConfig st;
    st.station_id = get_required<std::string>(js, "station_id");
    st.location_label = get_or<std::string>(js, "location_label", "");
    st.common_mode_asd = get_or(js, "common_mode_asd_t", st.common_mode_asd);
    st.common_mode_one_over_f =
        get_or(js, "common_mode_one_over_f", st.common_mode_one_over_f);
    st.one_over_f_knee_hz = get_or(js, "one_over_f_knee_hz", st.one_over_f_knee_hz);
    st.shield.edge_length_m = get_or(js, "shield_edge_m", st.shield.edge_length_m);
    st.clock_offset_s = get_or(js, "clock_offset_s", st.clock_offset_s);
    st.clock_jitter_rms_s = get_or(js, "clock_jitter_rms_s", st.clock_jitter_rms_s);
    spec.stations.push_back(std::move(st));
  }
  for (const auto& js : j.at("sensors")) {
    SensorConfig s;
    s.sensor_id = get_required<std::string>(js, "sensor_id");
    s.station_id = get_required<std::string>(js, "station_id");
    s.noise_asd = get_or(js, "noise_asd_t", s.noise_asd);
    s.coupling_factor = get_or(js, "coupling_factor", s.coupling_factor);
    if (js.contains("technical_lines")) {
      for (const auto& jl : js.at("technical_lines")) {
        TechnicalLine line;
        line.frequency_hz = get_required<double>(jl, "frequency_hz");
        line.amplitude_t = get_required<double>(jl, "amplitude_t");
        line.phase_rad = get_or(jl, "phase_rad", 0.0);
        s.technical_lines.push_back(line);
      }
    }
    spec.sensors.push_back(std::move(s));
  }
  if (j.contains("dpdm") && !j.at("dpdm").is_null()) {
    const auto& jd = j.at("dpdm");
    spec.dpdm = DpdmParams::from_frequency(
        get_required<double>(jd, "frequency_hz"),
        get_required<double>(jd, "epsilon"), get_or(jd, "phase_rad", 0.0),
        get_or(jd, "amplitude_scale", 1.0));
  }
  return spec;
}

ordered_json spectral_to_json(const SpectralConfig& cfg) {
  ordered_json j;
  j["segment_samples"] = cfg.segment_samples;
  j["overlap_fraction"] = cfg.overlap_fraction;
  j["window"] = cfg.window == WindowKind::hann ? "hann" : "rectangular";
  j["band_hz"] = {cfg.band_lo_hz, cfg.band_hi_hz};
  return j;
}

SpectralConfig spectral_from_json(const json& j) {
  SpectralConfig cfg;
  cfg.segment_samples = get_or(j, "segment_samples", cfg.segment_samples);
  cfg.overlap_fraction = get_or(j, "overlap_fraction", cfg.overlap_fraction);
  const std::string window = get_or<std::string>(j, "window", "hann");
  if (window == "hann")
    cfg.window = WindowKind::hann;
  else if (window == "rectangular")
    cfg.window = WindowKind::rectangular;
  else
    fail("config: window must be 'hann' or 'rectangular'");
  if (j.contains("band_hz")) {
    const auto& b = j.at("band_hz");
    if (!b.is_array() || b.size() != 2) fail("config: band_hz must be [lo, hi]");
    cfg.band_lo_hz = b[0].get<double>();
    cfg.band_hi_hz = b[1].get<double>();
  }
  return cfg;
}

ordered_json detection_to_json(const DetectionConfig& cfg) {
  ordered_json j;
  j["cl"] = cfg.cl;
  j["window_bins"] = cfg.window_bins;
  j["mc_trials"] = cfg.mc_trials;
  j["mc_bins_per_trial"] = cfg.mc_bins_per_trial;
  j["known_lines_hz"] = cfg.known_lines_hz;
  j["line_match_tol_hz"] = cfg.line_match_tol_hz;
  j["cross_amplitude_factor"] = cfg.cross_amplitude_factor;
  j["uniformity_nsigma"] = cfg.uniformity_nsigma;
  j["global_threshold"] = cfg.global_threshold;
  return j;
}

DetectionConfig detection_from_json(const json& j) {
  DetectionConfig cfg;
  cfg.cl = get_or(j, "cl", cfg.cl);
  cfg.window_bins = get_or(j, "window_bins", cfg.window_bins);
  cfg.mc_trials = get_or(j, "mc_trials", cfg.mc_trials);
  cfg.mc_bins_per_trial = get_or(j, "mc_bins_per_trial", cfg.mc_bins_per_trial);
  cfg.known_lines_hz =
      get_or(j, "known_lines_hz", std::vector<double>{});
  cfg.line_match_tol_hz = get_or(j, "line_match_tol_hz", cfg.line_match_tol_hz);
  cfg.cross_amplitude_factor =
      get_or(j, "cross_amplitude_factor", cfg.cross_amplitude_factor);
  cfg.uniformity_nsigma = get_or(j, "uniformity_nsigma", cfg.uniformity_nsigma);
  cfg.global_threshold = get_or(j, "global_threshold", cfg.global_threshold);
  return cfg;
}

ordered_json pipeline_config_to_json(const PipelineConfig& cfg) {
  ordered_json j;
  j["run"] = run_spec_to_json(cfg.run);
  j["spectral"] = spectral_to_json(cfg.spectral);
  j["detection"] = detection_to_json(cfg.detection);
  j["output_dir"] = cfg.output_dir;
  return j;
}

PipelineConfig pipeline_config_from_json(const json& j,
                                         const std::filesystem::path& base_dir) {
  PipelineConfig cfg;
  if (!j.contains("run")) fail("config: missing 'run'");
  if (j.at("run").is_string()) {
    const auto ref = base_dir / j.at("run").get<std::string>();
    if (!std::filesystem::exists(ref))
      fail("config: referenced run spec does not exist: " + ref.string());
    std::ifstream in(ref);
    json jr;
    try {
      jr = json::parse(in);
    } catch (const json::parse_error& e) {
      fail("config: failed to parse " + ref.string() + ": " + e.what());
    }
    cfg.run = run_spec_from_json(jr);
  } else {
    cfg.run = run_spec_from_json(j.at("run"));
  }
  if (j.contains("spectral")) cfg.spectral = spectral_from_json(j.at("spectral"));
  if (j.contains("detection"))
    cfg.detection = detection_from_json(j.at("detection"));
  cfg.output_dir = get_or<std::string>(j, "output_dir", cfg.output_dir);
  cfg.validate();
  return cfg;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_col_of(text, e.byte > 0 ? e.byte - 1 : 0);
    fail("config: " + path.string() + ":" + std::to_string(line) + ":" +
         std::to_string(col) + ": " + e.what());
  }
  return pipeline_config_from_json(j, path.parent_path());
}

uint64_t config_hash(const PipelineConfig& cfg) {
  return fnv1a64(pipeline_config_to_json(cfg).dump());
}

uint64_t run_spec_hash(const RunSpec& spec) {
  return fnv1a64(run_spec_to_json(spec).dump());
}

PipelineConfig default_pipeline_config(uint64_t seed) {
  PipelineConfig cfg;
  cfg.run = RunSpec::default_network(seed);
  return cfg;
}

}  // namespace dpnet
