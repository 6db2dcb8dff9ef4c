#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dpnet/physics.hpp"

namespace dpnet {

struct TechnicalLine {
  double frequency_hz = 0.0;
  double amplitude_t = 0.0;
  double phase_rad = 0.0;
};

struct SensorConfig {
  std::string sensor_id;
  std::string station_id;
  double noise_asd = 15e-15;  // T/sqrt(Hz)
  double coupling_factor = 1.0;
  std::vector<TechnicalLine> technical_lines;
};

struct StationConfig {
  std::string station_id;
  std::string location_label;
  double common_mode_asd = 5e-15;  // T/sqrt(Hz), white floor
  // Optional 1/f component on top of the white floor: the PSD gains a factor
  // (1 + knee/f).  Off by default; the published room spectrum is not known.
  bool common_mode_one_over_f = false;
  double one_over_f_knee_hz = 10.0;
  ShieldGeometry shield;
  double clock_offset_s = 0.0;
  double clock_jitter_rms_s = 0.0;
};

struct RunSpec {
  double duration_s = 2000.0;
  double sample_rate_hz = 1000.0;
  uint64_t seed = 1;
  std::vector<StationConfig> stations;
  std::vector<SensorConfig> sensors;
  std::optional<DpdmParams> dpdm;

  size_t samples_per_record() const;
  void validate() const;

  // 13 sensors in station "SZ" plus 2 in station "HB", sensor noise
  // 15 fT/rtHz, 2 m shields; the reference network topology.
  static RunSpec default_network(uint64_t seed, double common_mode_asd = 0.0,
                                 double duration_s = 2000.0);
};

struct TimeSeriesRecord {
  std::string sensor_id;
  std::string station_id;
  uint64_t start_time_gps_ns = 0;
  double sample_rate_hz = 0.0;
  std::vector<double> samples;

  bool operator==(const TimeSeriesRecord&) const = default;
};

struct RunData {
  std::vector<TimeSeriesRecord> records;
  uint64_t seed = 0;
  uint64_t spec_hash = 0;

  bool operator==(const RunData&) const = default;
  const TimeSeriesRecord* find(const std::string& station_id,
                               const std::string& sensor_id) const;
};

// Default GPS start time for simulated runs (fixed so runs are reproducible).
inline constexpr uint64_t kDefaultRunStartGpsNs = 1300000000000000000ull;

// Synthesize one run: independent white sensor noise, one shared common-mode
// stream per station, per-sensor technical lines, and (when configured) the
// dark-photon tone added coherently to every sensor.  Deterministic in the
// seed; records can be generated in any order.
RunData generate_run(const RunSpec& spec);

// Geometry needed to scale the tone into one sensor's record.
struct SensorGeometry {
  std::string station_id;
  std::string sensor_id;
  ShieldGeometry shield;  // edge from the station, coupling from the sensor
};

std::vector<SensorGeometry> sensor_geometries(const RunSpec& spec);

// Add a coherent tone to every record, phase-aligned across stations
// (coherence length far exceeds any baseline in scope).
void add_dpdm_tone(RunData& run, const DpdmParams& params,
                   const std::vector<SensorGeometry>& geometry);

// Clock imperfection: shifts the GPS start stamp and applies first-order
// phase noise for per-sample jitter.  offset = jitter = 0 is the identity.
TimeSeriesRecord apply_clock_error(const TimeSeriesRecord& record,
                                   double offset_s, double jitter_rms_s,
                                   uint64_t seed);

// Welch-estimated white-noise ASD of a record, averaged over the usable band.
// Requires at least 1e4 samples.
double estimate_white_noise_asd(const TimeSeriesRecord& record);

}  // namespace dpnet
