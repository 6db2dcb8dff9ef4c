#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dpnet/correlator.hpp"
#include "dpnet/simnet.hpp"

namespace dpnet {

struct SnrSpectrum {
  double f0_hz = 0.0;
  double df_hz = 0.0;
  std::vector<double> snr;
  size_t sigma_window_bins = 0;

  double frequency(size_t i) const { return f0_hz + df_hz * static_cast<double>(i); }
  size_t bin_of(double f_hz) const;
};

// Per-bin SNR = mean_real / robust local sigma, sigma from the median
// absolute deviation over the surrounding window excluding the bin itself
// (shrinks at band edges).  window_bins >= 16.
SnrSpectrum snr_spectrum(const AveragedSpectrum& avg, size_t window_bins = 256,
                         int n_workers = 0);

struct AsymmetryStats {
  size_t n_above = 0;
  size_t n_below = 0;
  double skewness = 0.0;
};

AsymmetryStats snr_asymmetry_stats(const SnrSpectrum& snr, double bound);

// Flat-spectrum noise model for Monte-Carlo thresholds, taken from measured
// per-sensor auto spectra.
struct NoiseModel {
  std::vector<double> sensor_asd;  // T/sqrt(Hz), band-median
  size_t n_segments = 0;
  WindowKind window = WindowKind::hann;
};

NoiseModel measured_noise_model(const RunData& run, const SpectralConfig& cfg);

// Pooled noise-only SNR samples from MC realizations of the network-averaged
// spectrum (shared-sensor covariance and adjacent-bin window leakage are
// reproduced).  Deterministic in the seed; parallel over trials.
std::vector<double> mc_snr_samples(const NoiseModel& model, size_t n_trials,
                                   uint64_t seed, size_t window_bins,
                                   size_t bins_per_trial = 2048,
                                   int n_workers = 0);

// SNR threshold exceeded by a noise-only bin with probability 1 - cl.
double mc_threshold(const NoiseModel& model, size_t n_trials, double cl,
                    uint64_t seed, size_t window_bins = 256,
                    size_t bins_per_trial = 2048, int n_workers = 0);

// Two-sided |SNR| band covering `coverage` of noise-only bins.
double mc_symmetric_band(const NoiseModel& model, size_t n_trials,
                         double coverage, uint64_t seed,
                         size_t window_bins = 256,
                         size_t bins_per_trial = 2048, int n_workers = 0);

// Measured peak power per tesla^2 of tone amplitude, from a unit tone pushed
// through the exact spectral pipeline.  center: tone on a bin center;
// edge: tone halfway between bins (worst-case scalloping).
struct BinResponse {
  double center_factor = 0.0;  // s (= 1/Hz)
  double edge_factor = 0.0;
};

BinResponse calibrate_bin_response(const SpectralConfig& cfg, double f_hz,
                                   double sample_rate_hz);

// Mean over sensor pairs of the per-sensor field scale factors
// (edge * coupling); converts pair power to epsilon for a whole network.
double pair_geometry_factor(const std::vector<SensorGeometry>& geometry);

// epsilon implied by an excess power P at frequency f.
double epsilon_from_pair_power(double power, double f_hz,
                               const BinResponse& response,
                               double geometry_factor);

enum class VetoReason {
  half_run_inconsistent,
  cross_station_absent,
  pair_amplitude_nonuniform,
  known_technical_line,
};

enum class VetoStatus { pending, passed, rejected };

const char* veto_reason_name(VetoReason r);
const char* veto_status_name(VetoStatus s);

struct Candidate {
  double frequency_hz = 0.0;
  double snr = 0.0;
  double implied_epsilon = 0.0;
  VetoStatus status = VetoStatus::pending;
  std::vector<VetoReason> reasons;
};

std::vector<Candidate> find_candidates(const SnrSpectrum& snr,
                                       const AveragedSpectrum& avg,
                                       double threshold,
                                       const BinResponse& response,
                                       double geometry_factor);

struct VetoPolicy {
  double snr_threshold = 1.645;     // full-run threshold; halves use /sqrt(2)
  double cross_amplitude_factor = 3.0;
  double uniformity_nsigma = 5.0;
  std::vector<double> known_lines_hz;
  double line_match_tol_hz = 0.02;
  size_t window_bins = 256;
};

// Runs the veto battery in place: (a) half-run persistence, (b) presence in
// the cross-station average with a compatible amplitude, (c) per-pair
// amplitude uniformity, (d) known technical lines.
void veto_candidates(std::vector<Candidate>& candidates, const RunData& run,
                     const std::vector<CrossSpectrum>& spectra,
                     const SpectralConfig& cfg,
                     const std::vector<SensorGeometry>& geometry,
                     const VetoPolicy& policy, int n_workers = 0);

struct ExclusionProvenance {
  std::string threshold_method;     // e.g. "one-sided gaussian q95"
  std::string amplitude_convention; // deterministic rms (scale = 1)
  double response_center = 0.0;
  double response_edge = 0.0;
  double cl = 0.0;
  uint64_t config_hash = 0;
  uint64_t run_seed = 0;
};

struct ExclusionCurve {
  std::vector<double> mass_ev;
  std::vector<double> epsilon_95;
  ExclusionProvenance provenance;
};

// One-sided upper limit per bin: P = max(mean, 0) + q(cl) * sigma, converted
// to field amplitude through the bin response and then to epsilon.
ExclusionCurve exclusion_curve(const AveragedSpectrum& avg,
                               const BinResponse& response,
                               const std::vector<SensorGeometry>& geometry,
                               double cl);

struct InjectionResult {
  double injected_epsilon = 0.0;
  double recovered_epsilon = 0.0;
  double snr = 0.0;
  bool detected = false;
};

// Adds the tone to a copy of the run, reruns the spectral pipeline, and reads
// the implied epsilon back off the tone bin.  A sub-threshold injection is a
// non-detection, not an error.
InjectionResult inject_and_recover(const RunData& run,
                                   const DpdmParams& params,
                                   const std::vector<SensorGeometry>& geometry,
                                   const SpectralConfig& cfg,
                                   double detection_threshold,
                                   size_t window_bins = 256, int n_workers = 0);

}  // namespace dpnet
