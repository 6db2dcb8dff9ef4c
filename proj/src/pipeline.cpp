#include "dpnet/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>

#include "dpnet/constants.hpp"
#include "dpnet/detect.hpp"
#include "dpnet/physics.hpp"
#include "dpnet/rng.hpp"
#include "dpnet/stats.hpp"
#include "dpnet/version.hpp"

namespace dpnet {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string fmt(const char* format, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

struct Context {
  ReproduceOptions opts;
  PipelineConfig base;
  uint64_t artifact_hash = 0;
  std::vector<SensorGeometry> geometry;
  double geometry_factor = 0.0;

  // Products shared between the threshold and limit stages.
  std::optional<AveragedSpectrum> noise_avg;
  std::optional<NoiseModel> noise_model;
  double threshold = 0.0;
};

class StageTimer {
 public:
  explicit StageTimer(const std::string& name)
      : name_(name), start_(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    const auto dt = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - start_)
                        .count();
    std::cout << "[stage] " << name_ << " finished in " << fmt("%.1f", dt)
              << " s" << std::endl;
  }

 private:
  std::string name_;
  std::chrono::steady_clock::time_point start_;
};

StageResult run_stage(const std::string& name,
                      const std::function<StageResult()>& body) {
  StageTimer timer(name);
  try {
    return body();
  } catch (const std::exception& e) {
    return {name, false, std::string("exception: ") + e.what()};
  }
}

// ---------------------------------------------------------------------------
// Stage 1: wall-field coefficient, linearity, first-principles cross-check.

StageResult stage_wall_field(const Context& ctx) {
  ShieldGeometry unit{1.0, 1.0};
  const double b0 = wall_field_amplitude_t(1.0, 10.0, unit);
  const bool coeff_ok = std::abs(b0 - 1.63e-12) < 0.005e-12;

  bool linear_ok = true;
  const ShieldGeometry doubled_edge{2.0, 1.0};
  const ShieldGeometry halved_coupling{1.0, 0.5};
  linear_ok &= wall_field_amplitude_t(2.0, 10.0, unit) == 2.0 * b0;
  linear_ok &= wall_field_amplitude_t(1.0, 20.0, unit) == 2.0 * b0;
  linear_ok &= wall_field_amplitude_t(1.0, 10.0, doubled_edge) == 2.0 * b0;
  linear_ok &= wall_field_amplitude_t(1.0, 10.0, halved_coupling) == 0.5 * b0;

  const double derived = wall_field_from_first_principles_t(1.0, 10.0, unit);
  const double agreement = std::abs(derived - b0) / b0;
  const bool derived_ok = agreement < 0.05;

  write_text_file(ctx.opts.out_dir / "constants.json",
                  constants::constants_json() + "\n");
  StageResult r;
  r.name = "wall-field-coefficient";
  r.pass = coeff_ok && linear_ok && derived_ok;
  r.detail = fmt("B(1,10Hz,1m)=%.4g T, first-principles %.4g T (dev %.2f%%)",
                 b0, derived, 100.0 * agreement);
  return r;
}

StageResult stage_band_endpoints(const Context&) {
  const double m_lo = freq_to_mass_ev(1.0);
  const double m_hi = freq_to_mass_ev(500.0);
  const bool lo_ok = std::abs(m_lo * 1e15 - 4.1) < 0.05;   // 4.1 feV
  const bool hi_ok = std::abs(m_hi * 1e12 - 2.1) < 0.05;   // 2.1 peV
  StageResult r;
  r.name = "band-endpoints";
  r.pass = lo_ok && hi_ok;
  r.detail = fmt("1 Hz -> %.4g eV, 500 Hz -> %.4g eV", m_lo, m_hi);
  return r;
}

StageResult stage_correlator_count(const Context& ctx) {
  RunSpec spec = RunSpec::default_network(ctx.opts.seed + 100, 0.0, 200.0);
  const RunData run = generate_run(spec);
  const auto spectra =
      all_pair_spectra(run, ctx.base.spectral, ctx.opts.n_workers);
  size_t cross = 0, same = 0;
  for (const auto& cs : spectra) (cs.same_station ? same : cross) += 1;
  StageResult r;
  r.name = "correlator-count";
  r.pass = spectra.size() == 105 && cross == 26 && same == 79;
  r.detail = fmt("pairs=%zu cross=%zu same=%zu", spectra.size(), cross, same);
  return r;
}

// ---------------------------------------------------------------------------
// Stage 4: sensitivity scaling and the N^-a fit at 10.1 Hz.

StageResult stage_sensitivity(const Context& ctx) {
  SpectralConfig cfg = ctx.base.spectral;
  cfg.band_lo_hz = 8.6;  // narrow band around the reference frequency
  cfg.band_hi_hz = 11.6;
  const double ref_hz = 10.1;

  std::vector<double> mean_asd;  // per N, averaged over seeds
  std::vector<double> exponents;
  for (size_t s = 0; s < ctx.opts.sensitivity_seeds; ++s) {
    RunSpec spec = RunSpec::default_network(ctx.opts.seed + 1000 + s);
    const RunData run = generate_run(spec);
    const auto spectra = all_pair_spectra(run, cfg, ctx.opts.n_workers);
    const auto curve = sensitivity_curve(spectra, ref_hz);
    if (mean_asd.empty()) mean_asd.assign(curve.size(), 0.0);
    for (size_t i = 0; i < curve.size(); ++i)
      mean_asd[i] += curve[i].field_asd_t / static_cast<double>(
                                                ctx.opts.sensitivity_seeds);
    exponents.push_back(fit_power_law(curve).exponent);
  }

  std::vector<SensitivityPoint> mean_curve(mean_asd.size());
  for (size_t i = 0; i < mean_asd.size(); ++i)
    mean_curve[i] = {i + 1, mean_asd[i]};
  const auto fit = fit_power_law(mean_curve);
  const double n1 = mean_asd.front();
  const double n105 = mean_asd.back();

  std::vector<std::string> lines;
  for (const auto& pt : mean_curve)
    lines.push_back(std::to_string(pt.n_correlators) + "," +
                    format_double(pt.field_asd_t * 1e15));
  write_csv(ctx.opts.out_dir / "sensitivity_curve.csv", ctx.artifact_hash,
            "N,fT_per_sqrtHz", lines);

  ordered_json jfit;
  jfit["reference_hz"] = ref_hz;
  jfit["exponent"] = fit.exponent;
  jfit["prefactor_ft"] = fit.prefactor * 1e15;
  jfit["residual_rms_log"] = fit.residual_rms;
  jfit["per_seed_exponents"] = exponents;
  jfit["n1_ft_sqrthz"] = n1 * 1e15;
  jfit["n105_ft_sqrthz"] = n105 * 1e15;
  jfit["config_hash"] = fmt("%016llx", static_cast<unsigned long long>(
                                           ctx.artifact_hash));
  jfit["tool_version"] = kToolVersion;
  write_text_file(ctx.opts.out_dir / "power_law_fit.json", jfit.dump(2) + "\n");

  const bool a_ok = fit.exponent >= 0.20 && fit.exponent <= 0.30;
  const bool n105_ok = n105 >= 3.8e-15 && n105 <= 5.0e-15;
  const bool n1_ok = std::abs(n1 - 15e-15) / 15e-15 < 0.10;
  StageResult r;
  r.name = "sensitivity-scaling";
  r.pass = a_ok && n105_ok && n1_ok;
  r.detail = fmt("a=%.3f N1=%.2f fT N105=%.2f fT (seeds=%zu)", fit.exponent,
                 n1 * 1e15, n105 * 1e15, ctx.opts.sensitivity_seeds);
  return r;
}

// ---------------------------------------------------------------------------
// Stage 5: common-mode SNR asymmetry, same-station vs cross-station.

StageResult stage_asymmetry(Context& ctx) {
  RunSpec spec = RunSpec::default_network(ctx.opts.seed + 2000, 5e-15);
  const RunData run = generate_run(spec);
  const auto spectra =
      all_pair_spectra(run, ctx.base.spectral, ctx.opts.n_workers);
  const auto avg_same = network_average(spectra, SubsetLabel::same_station_only);
  const auto avg_cross = network_average(spectra, SubsetLabel::cross_station_only);
  const auto avg_all = network_average(spectra, SubsetLabel::all);
  const size_t wbins = ctx.base.detection.window_bins;
  const auto snr_same = snr_spectrum(avg_same, wbins, ctx.opts.n_workers);
  const auto snr_cross = snr_spectrum(avg_cross, wbins, ctx.opts.n_workers);
  const auto snr_all = snr_spectrum(avg_all, wbins, ctx.opts.n_workers);

  const auto model = measured_noise_model(run, ctx.base.spectral);
  const double bound = mc_symmetric_band(
      model, ctx.opts.mc_trials, 0.99, ctx.opts.seed + 2100, wbins,
      ctx.base.detection.mc_bins_per_trial, ctx.opts.n_workers);

  const auto st_same = snr_asymmetry_stats(snr_same, bound);
  const auto st_cross = snr_asymmetry_stats(snr_cross, bound);
  const double above_below =
      static_cast<double>(st_same.n_above) /
      static_cast<double>(std::max<size_t>(st_same.n_below, 1));
  const double suppression =
      static_cast<double>(st_same.n_above + st_same.n_below) /
      static_cast<double>(std::max<size_t>(st_cross.n_above + st_cross.n_below, 1));

  // SNR histograms for plotting.
  std::vector<std::string> lines;
  auto histogram = [&](const SnrSpectrum& snr, const std::string& label) {
    std::map<int, size_t> bins;
    for (double v : snr.snr) {
      const double clipped = std::clamp(v, -12.0, 20.0);
      bins[static_cast<int>(std::floor(clipped / 0.25))] += 1;
    }
    for (const auto& [b, count] : bins)
      lines.push_back(format_double((b + 0.5) * 0.25) + "," +
                      std::to_string(count) + "," + label);
  };
  histogram(snr_same, "same_station_only");
  histogram(snr_cross, "cross_station_only");
  histogram(snr_all, "all");
  write_csv(ctx.opts.out_dir / "snr_histogram.csv", ctx.artifact_hash,
            "snr_bin,count,subset_label", lines);

  ordered_json j;
  j["bound_99"] = bound;
  j["same_station"] = {{"n_above", st_same.n_above},
                       {"n_below", st_same.n_below},
                       {"skewness", st_same.skewness}};
  j["cross_station"] = {{"n_above", st_cross.n_above},
                        {"n_below", st_cross.n_below},
                        {"skewness", st_cross.skewness}};
  j["suppression_ratio"] = suppression;
  j["config_hash"] =
      fmt("%016llx", static_cast<unsigned long long>(ctx.artifact_hash));
  j["tool_version"] = kToolVersion;
  write_text_file(ctx.opts.out_dir / "asymmetry.json", j.dump(2) + "\n");

  const bool pass = st_same.skewness > 0.0 && above_below > 5.0 &&
                    std::abs(st_cross.skewness) < 0.05 && suppression > 10.0;
  StageResult r;
  r.name = "common-mode-asymmetry";
  r.pass = pass;
  r.detail = fmt(
      "same skew=%.3f above/below=%.1f cross skew=%.3f suppression=%.1f "
      "bound=%.2f",
      st_same.skewness, above_below, st_cross.skewness, suppression, bound);
  return r;
}

// ---------------------------------------------------------------------------
// Stage 6: MC threshold and the noise-only candidate fraction.

StageResult stage_threshold(Context& ctx) {
  RunSpec spec = RunSpec::default_network(ctx.opts.seed + 3000);
  const RunData run = generate_run(spec);
  const auto spectra =
      all_pair_spectra(run, ctx.base.spectral, ctx.opts.n_workers);
  const auto avg = network_average(spectra, SubsetLabel::all);
  const size_t wbins = ctx.base.detection.window_bins;
  const auto snr = snr_spectrum(avg, wbins, ctx.opts.n_workers);

  const auto model = measured_noise_model(run, ctx.base.spectral);
  const double threshold = mc_threshold(
      model, ctx.opts.mc_trials, ctx.base.detection.cl, ctx.opts.seed + 3100,
      wbins, ctx.base.detection.mc_bins_per_trial, ctx.opts.n_workers);

  size_t flagged = 0;
  for (double v : snr.snr)
    if (v > threshold) ++flagged;
  const double fraction = static_cast<double>(flagged) /
                          static_cast<double>(snr.snr.size());

  const double fs = spec.sample_rate_hz;
  const auto response = calibrate_bin_response(ctx.base.spectral, 250.0, fs);
  auto candidates =
      find_candidates(snr, avg, threshold, response, ctx.geometry_factor);
  VetoPolicy policy;
  policy.snr_threshold = threshold;
  policy.known_lines_hz = ctx.base.detection.known_lines_hz;
  policy.line_match_tol_hz = ctx.base.detection.line_match_tol_hz;
  policy.cross_amplitude_factor = ctx.base.detection.cross_amplitude_factor;
  policy.uniformity_nsigma = ctx.base.detection.uniformity_nsigma;
  policy.window_bins = wbins;
  veto_candidates(candidates, run, spectra, ctx.base.spectral, ctx.geometry,
                  policy, ctx.opts.n_workers);
  size_t vetoed = 0;
  for (const auto& c : candidates)
    if (c.status == VetoStatus::rejected) ++vetoed;

  std::ostringstream jsonl;
  for (const auto& c : candidates) {
    ordered_json jc;
    jc["frequency_hz"] = c.frequency_hz;
    jc["snr"] = c.snr;
    jc["implied_epsilon"] = c.implied_epsilon;
    jc["veto_status"] = veto_status_name(c.status);
    jc["reasons"] = ordered_json::array();
    for (auto reason : c.reasons) jc["reasons"].push_back(veto_reason_name(reason));
    jsonl << jc.dump() << "\n";
  }
  write_text_file(ctx.opts.out_dir / "candidates.jsonl", jsonl.str());

  ordered_json j;
  j["mc_threshold"] = threshold;
  j["cl"] = ctx.base.detection.cl;
  j["flagged_fraction"] = fraction;
  j["n_bins"] = snr.snr.size();
  j["n_candidates"] = candidates.size();
  j["n_rejected_by_veto"] = vetoed;
  j["config_hash"] =
      fmt("%016llx", static_cast<unsigned long long>(ctx.artifact_hash));
  j["tool_version"] = kToolVersion;
  write_text_file(ctx.opts.out_dir / "threshold.json", j.dump(2) + "\n");

  ctx.noise_avg = avg;
  ctx.noise_model = model;
  ctx.threshold = threshold;

  const bool threshold_ok = threshold >= 1.595 && threshold <= 1.695;
  const bool fraction_ok = fraction >= 0.04 && fraction <= 0.06;
  StageResult r;
  r.name = "threshold-consistency";
  r.pass = threshold_ok && fraction_ok;
  r.detail = fmt("threshold=%.3f flagged=%.2f%% candidates=%zu vetoed=%zu",
                 threshold, 100.0 * fraction, candidates.size(), vetoed);
  return r;
}

// ---------------------------------------------------------------------------
// Stage 7: injection/recovery grid plus the veto battery.

StageResult stage_injection(Context& ctx) {
  const SpectralConfig& cfg = ctx.base.spectral;
  const size_t wbins = ctx.base.detection.window_bins;
  const double fs = 1000.0;
  const double threshold = ctx.threshold > 0.0 ? ctx.threshold : 1.645;

  const std::vector<double> freqs{25.0, 85.05, 170.1, 250.25, 420.0};
  const double fixed_eps_freq = 250.25;
  const double fixed_eps = 1e-5;
  const double null_freq = 333.33;
  const double target_snr = 12.0;

  // Expected per-bin sigma of the 105-pair average, used only to size the
  // injected mixings; the recovery itself is calibration-based.
  RunSpec ref_spec = RunSpec::default_network(ctx.opts.seed);
  const double S = ref_spec.sensors[0].noise_asd * ref_spec.sensors[0].noise_asd;
  const size_t K = cfg.n_segments(ref_spec.samples_per_record());
  const size_t n_pairs = 105;
  const double sigma_avg =
      S / (std::sqrt(2.0 * static_cast<double>(K)) *
           std::sqrt(static_cast<double>(n_pairs)));

  std::map<double, BinResponse> responses;
  for (double f : freqs) responses[f] = calibrate_bin_response(cfg, f, fs);

  std::map<double, double> inject_eps;
  for (double f : freqs) {
    if (f == fixed_eps_freq) {
      inject_eps[f] = fixed_eps;
    } else {
      inject_eps[f] = epsilon_from_pair_power(target_snr * sigma_avg, f,
                                              responses[f], ctx.geometry_factor);
    }
  }

  struct Trial {
    double freq, injected, recovered, snr;
    bool detected;
  };
  std::vector<Trial> trials;
  size_t null_detections = 0;
  bool all_within = true;
  double worst_dev = 0.0;
  double min_snr = 1e9;

  for (size_t s = 0; s < ctx.opts.injection_seeds; ++s) {
    RunSpec spec = RunSpec::default_network(ctx.opts.seed + 4000 + s);
    RunData run = generate_run(spec);
    for (double f : freqs) {
      const auto params = DpdmParams::from_frequency(f, inject_eps[f], 0.7);
      add_dpdm_tone(run, params, ctx.geometry);
    }
    const auto spectra = all_pair_spectra(run, cfg, ctx.opts.n_workers);
    const auto avg = network_average(spectra, SubsetLabel::all);
    const auto snr = snr_spectrum(avg, wbins, ctx.opts.n_workers);

    for (double f : freqs) {
      const size_t k = avg.bin_of(f);
      Trial t;
      t.freq = f;
      t.injected = inject_eps[f];
      t.recovered =
          epsilon_from_pair_power(std::max(avg.mean_real[k], 0.0), f,
                                  responses[f], ctx.geometry_factor);
      t.snr = snr.snr[k];
      t.detected = t.snr > threshold;
      trials.push_back(t);
      const double dev = std::abs(t.recovered / t.injected - 1.0);
      worst_dev = std::max(worst_dev, dev);
      min_snr = std::min(min_snr, t.snr);
      if (dev > 0.25 || !t.detected) all_within = false;
    }
    if (snr.snr[avg.bin_of(null_freq)] > threshold) ++null_detections;
  }

  // Per-frequency mean recovery bias.
  std::map<double, double> bias;
  for (double f : freqs) {
    double acc = 0.0;
    size_t n = 0;
    for (const auto& t : trials)
      if (t.freq == f) {
        acc += t.recovered / t.injected - 1.0;
        ++n;
      }
    bias[f] = acc / static_cast<double>(n);
  }
  double worst_bias = 0.0;
  for (const auto& [f, b] : bias) worst_bias = std::max(worst_bias, std::abs(b));

  const double null_nondet_frac =
      1.0 - static_cast<double>(null_detections) /
                static_cast<double>(ctx.opts.injection_seeds);

  // Veto battery: an injected common tone must pass, a single-sensor
  // technical line must be rejected.
  bool tone_passes = false, line_rejected = false, line_nonuniform = false;
  {
    const double tone_freq = 123.45;
    const auto tone_response = calibrate_bin_response(cfg, tone_freq, fs);
    const double tone_eps = epsilon_from_pair_power(
        target_snr * sigma_avg, tone_freq, tone_response, ctx.geometry_factor);
    RunSpec spec = RunSpec::default_network(ctx.opts.seed + 5000);
    spec.dpdm = DpdmParams::from_frequency(tone_freq, tone_eps, 1.1);
    const RunData run = generate_run(spec);
    const auto spectra = all_pair_spectra(run, cfg, ctx.opts.n_workers);
    const auto avg = network_average(spectra, SubsetLabel::all);
    const auto snr = snr_spectrum(avg, wbins, ctx.opts.n_workers);
    auto cands = find_candidates(snr, avg, threshold, tone_response,
                                 ctx.geometry_factor);
    VetoPolicy policy;
    policy.snr_threshold = threshold;
    policy.window_bins = wbins;
    std::vector<Candidate> at_tone;
    for (const auto& c : cands)
      if (std::abs(c.frequency_hz - tone_freq) < 1e-6) at_tone.push_back(c);
    if (!at_tone.empty()) {
      veto_candidates(at_tone, run, spectra, cfg, ctx.geometry, policy,
                      ctx.opts.n_workers);
      tone_passes = at_tone[0].status == VetoStatus::passed;
    }
  }
  {
    const double line_freq = 50.0;
    RunSpec spec = RunSpec::default_network(ctx.opts.seed + 5001);
    spec.sensors[0].technical_lines.push_back({line_freq, 1e-12, 0.3});
    const RunData run = generate_run(spec);
    const auto spectra = all_pair_spectra(run, cfg, ctx.opts.n_workers);
    const auto avg = network_average(spectra, SubsetLabel::all);
    const auto snr = snr_spectrum(avg, wbins, ctx.opts.n_workers);
    Candidate c;
    c.frequency_hz = line_freq;
    c.snr = snr.snr[avg.bin_of(line_freq)];
    std::vector<Candidate> cands{c};
    VetoPolicy policy;
    policy.snr_threshold = threshold;
    policy.window_bins = wbins;
    veto_candidates(cands, run, spectra, cfg, ctx.geometry, policy,
                    ctx.opts.n_workers);
    line_rejected = cands[0].status == VetoStatus::rejected;
    for (auto reason : cands[0].reasons)
      if (reason == VetoReason::pair_amplitude_nonuniform) line_nonuniform = true;
  }

  std::vector<std::string> lines;
  size_t idx = 0;
  for (const auto& t : trials) {
    lines.push_back(format_double(t.freq) + "," +
                    std::to_string(idx++ / freqs.size()) + "," +
                    format_double(t.injected) + "," +
                    format_double(t.recovered) + "," + format_double(t.snr) +
                    "," + (t.detected ? "1" : "0"));
  }
  write_csv(ctx.opts.out_dir / "injection_grid.csv", ctx.artifact_hash,
            "frequency_hz,seed_index,injected_epsilon,recovered_epsilon,snr,"
            "detected",
            lines);

  ordered_json j;
  j["n_seeds"] = ctx.opts.injection_seeds;
  j["frequencies_hz"] = freqs;
  j["worst_recovery_dev"] = worst_dev;
  j["min_snr"] = min_snr;
  j["per_frequency_bias"] = ordered_json::object();
  for (const auto& [f, b] : bias) j["per_frequency_bias"][format_double(f)] = b;
  j["null_nondetection_fraction"] = null_nondet_frac;
  j["veto_tone_passes"] = tone_passes;
  j["veto_line_rejected"] = line_rejected;
  j["veto_line_nonuniform_reason"] = line_nonuniform;
  j["config_hash"] =
      fmt("%016llx", static_cast<unsigned long long>(ctx.artifact_hash));
  j["tool_version"] = kToolVersion;
  write_text_file(ctx.opts.out_dir / "injection_summary.json", j.dump(2) + "\n");

  const bool pass = all_within && worst_bias < 0.10 && min_snr >= 5.0 &&
                    null_nondet_frac >= 0.84 && tone_passes && line_rejected &&
                    line_nonuniform;
  StageResult r;
  r.name = "injection-recovery";
  r.pass = pass;
  r.detail =
      fmt("worst dev=%.1f%% worst bias=%.1f%% min SNR=%.1f null-clean=%.0f%% "
          "tone-pass=%d line-reject=%d",
          100.0 * worst_dev, 100.0 * worst_bias, min_snr,
          100.0 * null_nondet_frac, tone_passes ? 1 : 0, line_rejected ? 1 : 0);
  return r;
}

// ---------------------------------------------------------------------------
// Stage 8: exclusion-curve slope and magnitude sanity.

StageResult stage_limits(Context& ctx) {
  if (!ctx.noise_avg)
    return {"limit-sanity", false, "no noise spectrum (threshold stage failed)"};
  const auto& avg = *ctx.noise_avg;
  const auto response = calibrate_bin_response(ctx.base.spectral, 250.0, 1000.0);
  auto curve = exclusion_curve(avg, response, ctx.geometry, 0.95);
  curve.provenance.config_hash = ctx.artifact_hash;
  curve.provenance.run_seed = ctx.opts.seed + 3000;

  // Log-log slope from band medians of epsilon vs frequency.
  const size_t n_bands = 24;
  std::vector<double> lx, ly;
  const double f_lo = avg.frequency(0);
  const double f_hi = avg.frequency(avg.mean_real.size() - 1);
  for (size_t b = 0; b < n_bands; ++b) {
    const double g0 = f_lo * std::pow(f_hi / f_lo,
                                      static_cast<double>(b) / n_bands);
    const double g1 = f_lo * std::pow(f_hi / f_lo,
                                      static_cast<double>(b + 1) / n_bands);
    std::vector<double> eps;
    for (size_t k = 0; k < curve.epsilon_95.size(); ++k) {
      const double f = avg.frequency(k);
      if (f >= g0 && f < g1 && curve.epsilon_95[k] > 0.0)
        eps.push_back(curve.epsilon_95[k]);
    }
    if (eps.empty()) continue;
    lx.push_back(std::log(std::sqrt(g0 * g1)));
    ly.push_back(std::log(stats::median(std::move(eps))));
  }
  const auto fit = stats::linear_fit(lx, ly);

  std::vector<double> top;
  for (size_t k = 0; k < curve.epsilon_95.size(); ++k)
    if (avg.frequency(k) >= 480.0) top.push_back(curve.epsilon_95[k]);
  const double eps_at_500 = stats::median(std::move(top));

  std::vector<std::string> lines;
  lines.reserve(curve.mass_ev.size());
  for (size_t k = 0; k < curve.mass_ev.size(); ++k)
    lines.push_back(format_double(curve.mass_ev[k]) + "," +
                    format_double(curve.epsilon_95[k]));
  write_csv(ctx.opts.out_dir / "exclusion_curve.csv", ctx.artifact_hash,
            "mass_eV,epsilon_95", lines);

  ordered_json j;
  j["threshold_method"] = curve.provenance.threshold_method;
  j["amplitude_convention"] = curve.provenance.amplitude_convention;
  j["cl"] = curve.provenance.cl;
  j["response_center_s"] = curve.provenance.response_center;
  j["response_edge_s"] = curve.provenance.response_edge;
  j["run_seed"] = curve.provenance.run_seed;
  j["loglog_slope"] = fit.slope;
  j["epsilon95_at_500hz"] = eps_at_500;
  j["config_hash"] =
      fmt("%016llx", static_cast<unsigned long long>(ctx.artifact_hash));
  j["tool_version"] = kToolVersion;
  write_text_file(ctx.opts.out_dir / "exclusion_provenance.json",
                  j.dump(2) + "\n");

  const bool slope_ok = fit.slope >= -1.1 && fit.slope <= -0.9;
  const bool mag_ok = eps_at_500 >= 5e-7 && eps_at_500 <= 5e-5;
  StageResult r;
  r.name = "limit-sanity";
  r.pass = slope_ok && mag_ok;
  r.detail = fmt("slope=%.3f epsilon95(500Hz)=%.3g (target 5e-6 within 10x)",
                 fit.slope, eps_at_500);
  return r;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::runtime_error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

void write_csv(const fs::path& path, uint64_t config_hash,
               const std::string& header,
               const std::vector<std::string>& lines) {
  std::ostringstream out;
  out << "# tool_version=" << kToolVersion << " config_hash="
      << fmt("%016llx", static_cast<unsigned long long>(config_hash)) << "\n";
  out << header << "\n";
  for (const auto& line : lines) out << line << "\n";
  write_text_file(path, out.str());
}

ordered_json ReproduceReport::to_json() const {
  ordered_json j;
  j["tool_version"] = kToolVersion;
  j["stages"] = ordered_json::array();
  for (const auto& s : stages)
    j["stages"].push_back(
        {{"name", s.name}, {"pass", s.pass}, {"detail", s.detail}});
  j["all_pass"] = all_pass;
  return j;
}

std::string ReproduceReport::to_text() const {
  std::ostringstream out;
  for (const auto& s : stages)
    out << (s.pass ? "PASS" : "FAIL") << "  " << s.name << ": " << s.detail
        << "\n";
  out << (all_pass ? "ALL CRITERIA PASSED" : "CRITERIA FAILED") << "\n";
  return out.str();
}

ReproduceReport reproduce_paper(const ReproduceOptions& options) {
  Context ctx;
  ctx.opts = options;
  ctx.base = default_pipeline_config(options.seed);
  ctx.geometry = sensor_geometries(ctx.base.run);
  ctx.geometry_factor = pair_geometry_factor(ctx.geometry);

  ordered_json hashed;
  hashed["config"] = pipeline_config_to_json(ctx.base);
  hashed["sensitivity_seeds"] = options.sensitivity_seeds;
  hashed["injection_seeds"] = options.injection_seeds;
  hashed["mc_trials"] = options.mc_trials;
  ctx.artifact_hash = fnv1a64(hashed.dump());

  fs::create_directories(options.out_dir);
  write_text_file(options.out_dir / "reference_run_spec.json",
                  run_spec_to_json(ctx.base.run).dump(2) + "\n");

  ReproduceReport report;
  report.stages.push_back(
      run_stage("wall-field-coefficient", [&] { return stage_wall_field(ctx); }));
  report.stages.push_back(
      run_stage("band-endpoints", [&] { return stage_band_endpoints(ctx); }));
  report.stages.push_back(run_stage("correlator-count",
                                    [&] { return stage_correlator_count(ctx); }));
  report.stages.push_back(
      run_stage("sensitivity-scaling", [&] { return stage_sensitivity(ctx); }));
  report.stages.push_back(
      run_stage("common-mode-asymmetry", [&] { return stage_asymmetry(ctx); }));
  report.stages.push_back(
      run_stage("threshold-consistency", [&] { return stage_threshold(ctx); }));
  report.stages.push_back(
      run_stage("injection-recovery", [&] { return stage_injection(ctx); }));
  report.stages.push_back(
      run_stage("limit-sanity", [&] { return stage_limits(ctx); }));

  report.all_pass = true;
  for (const auto& s : report.stages) report.all_pass &= s.pass;

  write_text_file(options.out_dir / "report.json",
                  report.to_json().dump(2) + "\n");
  write_text_file(options.out_dir / "report.txt", report.to_text());
  return report;
}

}  // namespace dpnet
