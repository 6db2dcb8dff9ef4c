#include "dpnet/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "dpnet/parallel.hpp"
#include "dpnet/physics.hpp"
#include "dpnet/rng.hpp"
#include "dpnet/stats.hpp"
#include "dpnet/wire.hpp"

namespace dpnet {

namespace {

// Robust sigma over values[lo, hi) excluding index `center`.
double local_mad_sigma(const std::vector<double>& values, size_t center,
                       size_t half_window) {
  const size_t lo = center > half_window ? center - half_window : 0;
  const size_t hi = std::min(values.size(), center + half_window + 1);
  std::vector<double> window;
  window.reserve(hi - lo);
  for (size_t i = lo; i < hi; ++i)
    if (i != center) window.push_back(values[i]);
  if (window.size() < 2) return 0.0;
  return stats::mad_sigma(window);
}

}  // namespace

size_t SnrSpectrum::bin_of(double f_hz) const {
  const long k = std::lround((f_hz - f0_hz) / df_hz);
  if (k < 0 || static_cast<size_t>(k) >= snr.size())
    throw std::out_of_range("snr spectrum: frequency outside band");
  return static_cast<size_t>(k);
}

SnrSpectrum snr_spectrum(const AveragedSpectrum& avg, size_t window_bins,
                         int n_workers) {
  if (window_bins < 16)
    throw std::invalid_argument("snr: window_bins must be >= 16");
  SnrSpectrum out;
  out.f0_hz = avg.f0_hz;
  out.df_hz = avg.df_hz;
  out.sigma_window_bins = window_bins;
  out.snr.assign(avg.mean_real.size(), 0.0);
  const size_t half = window_bins / 2;
  parallel_for(avg.mean_real.size(), n_workers, [&](size_t i) {
    const double sigma = local_mad_sigma(avg.mean_real, i, half);
    out.snr[i] = sigma > 0.0 ? avg.mean_real[i] / sigma : 0.0;
  });
  return out;
}

AsymmetryStats snr_asymmetry_stats(const SnrSpectrum& snr, double bound) {
  if (bound <= 0.0) throw std::invalid_argument("asymmetry: bound must be > 0");
  AsymmetryStats st;
  for (double v : snr.snr) {
    if (v > bound) ++st.n_above;
    if (v < -bound) ++st.n_below;
  }
  st.skewness = stats::skewness(snr.snr);
  return st;
}

NoiseModel measured_noise_model(const RunData& run, const SpectralConfig& cfg) {
  if (run.records.empty())
    throw std::invalid_argument("noise model: empty run");
  NoiseModel model;
  model.n_segments = cfg.n_segments(run.records[0].samples.size());
  model.window = cfg.window;
  for (const auto& rec : run.records) {
    const auto auto_psd = welch_cross_spectrum(rec, rec, cfg);
    std::vector<double> re(auto_psd.n_bins());
    for (size_t k = 0; k < re.size(); ++k) re[k] = auto_psd.values[k].real();
    model.sensor_asd.push_back(std::sqrt(stats::median(std::move(re))));
  }
  return model;
}

std::vector<double> mc_snr_samples(const NoiseModel& model, size_t n_trials,
                                   uint64_t seed, size_t window_bins,
                                   size_t bins_per_trial, int n_workers) {
  if (n_trials < 100)
    throw std::invalid_argument("mc: need n_trials >= 100");
  if (model.sensor_asd.size() < 2)
    throw std::invalid_argument("mc: need >= 2 sensors");
  const size_t n_sensors = model.sensor_asd.size();
  const size_t n_pairs = n_sensors * (n_sensors - 1) / 2;
  const size_t B = bins_per_trial;
  const size_t K = std::max<size_t>(model.n_segments, 1);

  std::vector<double> pooled(n_trials * B, 0.0);
  parallel_for(n_trials, n_workers, [&](size_t trial) {
    KeyedStream rng(derive_key(seed, 0x6D63, trial, 0, 0));
    std::vector<double> mean_real(B, 0.0);
    // Rectangular-window coefficients with two guard bins; the hann window
    // mixes neighbours as X_k = 0.5 R_k - 0.25 R_{k-1} - 0.25 R_{k+1}, which
    // reproduces the adjacent-bin correlation of the real estimator.
    std::vector<std::complex<double>> rect(B + 2);
    std::vector<std::complex<double>> coeff(B);
    std::vector<std::complex<double>> sum(B);
    std::vector<double> power(B);
    for (size_t s = 0; s < K; ++s) {
      std::fill(sum.begin(), sum.end(), std::complex<double>{0.0, 0.0});
      std::fill(power.begin(), power.end(), 0.0);
      for (size_t i = 0; i < n_sensors; ++i) {
        const double sigma = model.sensor_asd[i];
        for (auto& r : rect)
          r = {sigma * rng.next_gaussian(), sigma * rng.next_gaussian()};
        if (model.window == WindowKind::hann) {
          for (size_t k = 0; k < B; ++k)
            coeff[k] = 0.5 * rect[k + 1] - 0.25 * rect[k] - 0.25 * rect[k + 2];
        } else {
          for (size_t k = 0; k < B; ++k) coeff[k] = rect[k + 1];
        }
        for (size_t k = 0; k < B; ++k) {
          sum[k] += coeff[k];
          power[k] += std::norm(coeff[k]);
        }
      }
      // Mean over pairs of Re(X_i conj(X_j)) = (|sum|^2 - sum |X_i|^2) / 2.
      for (size_t k = 0; k < B; ++k)
        mean_real[k] +=
            (std::norm(sum[k]) - power[k]) / (2.0 * static_cast<double>(n_pairs));
    }
    for (auto& v : mean_real) v /= static_cast<double>(K);

    AveragedSpectrum fake;
    fake.f0_hz = 1.0;
    fake.df_hz = 1.0;
    fake.mean_real = std::move(mean_real);
    fake.bin_sigma.assign(B, 1.0);
    fake.n_correlators = n_pairs;
    fake.n_segments = K;
    const auto snr = snr_spectrum(fake, window_bins, 1);
    std::copy(snr.snr.begin(), snr.snr.end(), pooled.begin() + trial * B);
  });
  return pooled;
}

double mc_threshold(const NoiseModel& model, size_t n_trials, double cl,
                    uint64_t seed, size_t window_bins, size_t bins_per_trial,
                    int n_workers) {
  if (cl <= 0.0 || cl >= 1.0)
    throw std::invalid_argument("mc: cl must be in (0, 1)");
  const double tail = (1.0 - cl) * static_cast<double>(n_trials * bins_per_trial);
  if (tail < 50.0)
    throw std::invalid_argument("mc: insufficient trials for requested cl");
  auto samples =
      mc_snr_samples(model, n_trials, seed, window_bins, bins_per_trial, n_workers);
  return stats::quantile(std::move(samples), cl);
}

double mc_symmetric_band(const NoiseModel& model, size_t n_trials,
                         double coverage, uint64_t seed, size_t window_bins,
                         size_t bins_per_trial, int n_workers) {
  if (coverage <= 0.0 || coverage >= 1.0)
    throw std::invalid_argument("mc: coverage must be in (0, 1)");
  auto samples =
      mc_snr_samples(model, n_trials, seed, window_bins, bins_per_trial, n_workers);
  for (auto& v : samples) v = std::abs(v);
  return stats::quantile(std::move(samples), coverage);
}

BinResponse calibrate_bin_response(const SpectralConfig& cfg, double f_hz,
                                   double sample_rate_hz) {
  if (f_hz < cfg.band_lo_hz || f_hz > cfg.band_hi_hz)
    throw std::invalid_argument("bin response: frequency outside band");
  const double df = sample_rate_hz / static_cast<double>(cfg.segment_samples);
  const double f_center = std::round(f_hz / df) * df;
  const size_t n = cfg.segment_samples + cfg.step_samples();  // two segments

  auto measure = [&](double tone_hz) {
    TimeSeriesRecord rec;
    rec.station_id = "CAL";
    rec.sensor_id = "cal";
    rec.start_time_gps_ns = 0;
    rec.sample_rate_hz = sample_rate_hz;
    rec.samples.resize(n);
    for (size_t i = 0; i < n; ++i)
      rec.samples[i] = std::cos(2.0 * std::numbers::pi * tone_hz *
                                static_cast<double>(i) / sample_rate_hz);
    const auto spec = welch_cross_spectrum(rec, rec, cfg);
    const long k = std::lround((tone_hz - spec.f0_hz) / spec.df_hz);
    const size_t kk = static_cast<size_t>(std::clamp<long>(
        k, 0, static_cast<long>(spec.n_bins()) - 1));
    return spec.values[kk].real();
  };

  BinResponse r;
  r.center_factor = measure(f_center);
  r.edge_factor = measure(f_center + df / 2.0);
  return r;
}

double pair_geometry_factor(const std::vector<SensorGeometry>& geometry) {
  if (geometry.size() < 2)
    throw std::invalid_argument("geometry factor: need >= 2 sensors");
  std::vector<double> scale;
  scale.reserve(geometry.size());
  for (const auto& g : geometry)
    scale.push_back(g.shield.edge_length_m * g.shield.coupling_factor);
  double acc = 0.0;
  size_t count = 0;
  for (size_t i = 0; i < scale.size(); ++i)
    for (size_t j = i + 1; j < scale.size(); ++j) {
      acc += scale[i] * scale[j];
      ++count;
    }
  return acc / static_cast<double>(count);
}

double epsilon_from_pair_power(double power, double f_hz,
                               const BinResponse& response,
                               double geometry_factor) {
  if (power <= 0.0) return 0.0;
  const double field_sq = power / response.center_factor / geometry_factor;
  // field_sq is the squared wall field for a unit edge/coupling product.
  ShieldGeometry unit;
  unit.edge_length_m = 1.0;
  unit.coupling_factor = 1.0;
  return epsilon_from_field(std::sqrt(field_sq), f_hz, unit);
}

const char* veto_reason_name(VetoReason r) {
  switch (r) {
    case VetoReason::half_run_inconsistent: return "half_run_inconsistent";
    case VetoReason::cross_station_absent: return "cross_station_absent";
    case VetoReason::pair_amplitude_nonuniform: return "pair_amplitude_nonuniform";
    case VetoReason::known_technical_line: return "known_technical_line";
  }
  return "unknown";
}

const char* veto_status_name(VetoStatus s) {
  switch (s) {
    case VetoStatus::pending: return "pending";
    case VetoStatus::passed: return "passed";
    case VetoStatus::rejected: return "rejected";
  }
  return "unknown";
}

std::vector<Candidate> find_candidates(const SnrSpectrum& snr,
                                       const AveragedSpectrum& avg,
                                       double threshold,
                                       const BinResponse& response,
                                       double geometry_factor) {
  if (snr.snr.size() != avg.mean_real.size())
    throw std::invalid_argument("candidates: SNR/average size mismatch");
  std::vector<Candidate> out;
  for (size_t k = 0; k < snr.snr.size(); ++k) {
    if (!(snr.snr[k] > threshold)) continue;
    Candidate c;
    c.frequency_hz = snr.frequency(k);
    c.snr = snr.snr[k];
    c.implied_epsilon = epsilon_from_pair_power(
        std::max(avg.mean_real[k], 0.0), c.frequency_hz, response,
        geometry_factor);
    out.push_back(std::move(c));
  }
  return out;
}

namespace {

RunData half_run(const RunData& run, bool second) {
  RunData half;
  half.seed = run.seed;
  half.spec_hash = run.spec_hash;
  for (const auto& rec : run.records) {
    const size_t n = rec.samples.size() / 2;
    TimeSeriesRecord r;
    r.station_id = rec.station_id;
    r.sensor_id = rec.sensor_id;
    r.sample_rate_hz = rec.sample_rate_hz;
    r.start_time_gps_ns =
        second ? frame_start_ns(rec.start_time_gps_ns, n, rec.sample_rate_hz)
               : rec.start_time_gps_ns;
    const size_t lo = second ? n : 0;
    r.samples.assign(rec.samples.begin() + static_cast<long>(lo),
                     rec.samples.begin() + static_cast<long>(lo + n));
    half.records.push_back(std::move(r));
  }
  return half;
}

}  // namespace

void veto_candidates(std::vector<Candidate>& candidates, const RunData& run,
                     const std::vector<CrossSpectrum>& spectra,
                     const SpectralConfig& cfg,
                     const std::vector<SensorGeometry>& geometry,
                     const VetoPolicy& policy, int n_workers) {
  if (candidates.empty()) return;
  if (run.records.empty())
    throw std::invalid_argument("veto: empty run");
  if (run.records[0].samples.size() / 2 < cfg.segment_samples)
    throw std::invalid_argument("veto: run too short to split in halves");

  const auto avg_all = network_average(spectra, SubsetLabel::all);
  const bool have_cross =
      std::any_of(spectra.begin(), spectra.end(),
                  [](const CrossSpectrum& s) { return !s.same_station; });
  std::optional<AveragedSpectrum> avg_cross;
  std::optional<SnrSpectrum> snr_cross;
  if (have_cross) {
    avg_cross = network_average(spectra, SubsetLabel::cross_station_only);
    snr_cross = snr_spectrum(*avg_cross, policy.window_bins, n_workers);
  }

  const auto first_half = half_run(run, false);
  const auto second_half = half_run(run, true);
  const auto snr_h1 = snr_spectrum(
      network_average(all_pair_spectra(first_half, cfg, n_workers),
                      SubsetLabel::all),
      policy.window_bins, n_workers);
  const auto snr_h2 = snr_spectrum(
      network_average(all_pair_spectra(second_half, cfg, n_workers),
                      SubsetLabel::all),
      policy.window_bins, n_workers);

  // Per-pair scale factors for the uniformity test.
  auto scale_of = [&](const std::string& station,
                      const std::string& sensor) -> double {
    for (const auto& g : geometry)
      if (g.station_id == station && g.sensor_id == sensor)
        return g.shield.edge_length_m * g.shield.coupling_factor;
    throw std::invalid_argument("veto: no geometry for " + station + "/" + sensor);
  };
  std::vector<double> pair_scale;
  pair_scale.reserve(spectra.size());
  for (const auto& cs : spectra)
    pair_scale.push_back(scale_of(cs.station_a, cs.sensor_a) *
                         scale_of(cs.station_b, cs.sensor_b));

  // Per-pair real parts, extracted once for the uniformity test.
  std::vector<std::vector<double>> pair_re(spectra.size());
  parallel_for(spectra.size(), n_workers, [&](size_t p) {
    pair_re[p].resize(spectra[p].n_bins());
    for (size_t i = 0; i < pair_re[p].size(); ++i)
      pair_re[p][i] = spectra[p].values[i].real();
  });

  const double half_threshold = policy.snr_threshold / std::numbers::sqrt2;
  const size_t half_window = policy.window_bins / 2;

  parallel_for(candidates.size(), n_workers, [&](size_t ci) {
    auto& cand = candidates[ci];
    cand.reasons.clear();
    const size_t k = avg_all.bin_of(cand.frequency_hz);

    // (d) known technical lines
    for (double line : policy.known_lines_hz)
      if (std::abs(cand.frequency_hz - line) <= policy.line_match_tol_hz) {
        cand.reasons.push_back(VetoReason::known_technical_line);
        break;
      }

    // (a) half-run persistence
    {
      const size_t kh = snr_h1.bin_of(cand.frequency_hz);
      if (!(snr_h1.snr[kh] > half_threshold && snr_h2.snr[kh] > half_threshold))
        cand.reasons.push_back(VetoReason::half_run_inconsistent);
    }

    // (b) cross-station presence with compatible amplitude
    if (have_cross) {
      const size_t kc = snr_cross->bin_of(cand.frequency_hz);
      bool present = snr_cross->snr[kc] > 0.0;
      if (present) {
        const double amp_cross = std::sqrt(std::max(avg_cross->mean_real[kc], 0.0));
        const double amp_all = std::sqrt(std::max(avg_all.mean_real[k], 0.0));
        present = amp_all > 0.0 && amp_cross > 0.0 &&
                  amp_cross <= policy.cross_amplitude_factor * amp_all &&
                  amp_all <= policy.cross_amplitude_factor * amp_cross;
      }
      if (!present) cand.reasons.push_back(VetoReason::cross_station_absent);
    }

    // (c) per-pair amplitude uniformity against a common field
    {
      std::vector<double> value(spectra.size());
      std::vector<double> sigma(spectra.size());
      bool degenerate = false;
      for (size_t p = 0; p < spectra.size(); ++p) {
        value[p] = pair_re[p][k] / pair_scale[p];
        const double s = local_mad_sigma(pair_re[p], k, half_window) / pair_scale[p];
        sigma[p] = s;
        if (s <= 0.0) degenerate = true;
      }
      if (!degenerate) {
        double wsum = 0.0, acc = 0.0;
        for (size_t p = 0; p < value.size(); ++p) {
          const double w = 1.0 / (sigma[p] * sigma[p]);
          wsum += w;
          acc += w * value[p];
        }
        const double common = acc / wsum;
        for (size_t p = 0; p < value.size(); ++p) {
          if (std::abs(value[p] - common) > policy.uniformity_nsigma * sigma[p]) {
            cand.reasons.push_back(VetoReason::pair_amplitude_nonuniform);
            break;
          }
        }
      }
    }

    cand.status = cand.reasons.empty() ? VetoStatus::passed : VetoStatus::rejected;
  });
}

ExclusionCurve exclusion_curve(const AveragedSpectrum& avg,
                               const BinResponse& response,
                               const std::vector<SensorGeometry>& geometry,
                               double cl) {
  if (cl <= 0.0 || cl >= 1.0)
    throw std::invalid_argument("exclusion: cl must be in (0, 1)");
  if (response.center_factor <= 0.0)
    throw std::invalid_argument("exclusion: bin response not calibrated");
  const double q = stats::inverse_normal_cdf(cl);
  const double geom_factor = pair_geometry_factor(geometry);

  ExclusionCurve curve;
  curve.mass_ev.reserve(avg.mean_real.size());
  curve.epsilon_95.reserve(avg.mean_real.size());
  for (size_t k = 0; k < avg.mean_real.size(); ++k) {
    const double f = avg.frequency(k);
    const double p_up = std::max(avg.mean_real[k], 0.0) + q * avg.bin_sigma[k];
    curve.mass_ev.push_back(freq_to_mass_ev(f));
    curve.epsilon_95.push_back(
        epsilon_from_pair_power(p_up, f, response, geom_factor));
  }
  curve.provenance.threshold_method = "one-sided gaussian quantile";
  curve.provenance.amplitude_convention = "deterministic rms (amplitude_scale=1)";
  curve.provenance.response_center = response.center_factor;
  curve.provenance.response_edge = response.edge_factor;
  curve.provenance.cl = cl;
  return curve;
}

InjectionResult inject_and_recover(const RunData& run, const DpdmParams& params,
                                   const std::vector<SensorGeometry>& geometry,
                                   const SpectralConfig& cfg,
                                   double detection_threshold,
                                   size_t window_bins, int n_workers) {
  RunData injected = run;
  add_dpdm_tone(injected, params, geometry);

  // The analysis only needs a window around the tone; narrow the band so the
  // pair-product stage stays cheap.
  SpectralConfig narrow = cfg;
  const double fs = run.records.at(0).sample_rate_hz;
  const double df = fs / static_cast<double>(cfg.segment_samples);
  const double margin =
      (static_cast<double>(window_bins) + 16.0) * df;
  narrow.band_lo_hz = std::max(cfg.band_lo_hz, params.frequency_hz - margin);
  narrow.band_hi_hz = std::min(cfg.band_hi_hz, params.frequency_hz + margin);

  const auto spectra = all_pair_spectra(injected, narrow, n_workers);
  const auto avg = network_average(spectra, SubsetLabel::all);
  const auto snr = snr_spectrum(avg, window_bins, n_workers);
  const size_t k = avg.bin_of(params.frequency_hz);

  const auto response =
      calibrate_bin_response(narrow, params.frequency_hz, fs);
  InjectionResult res;
  res.injected_epsilon = params.epsilon;
  res.snr = snr.snr[k];
  res.detected = res.snr > detection_threshold;
  res.recovered_epsilon = epsilon_from_pair_power(
      std::max(avg.mean_real[k], 0.0), params.frequency_hz, response,
      pair_geometry_factor(geometry));
  return res;
}

}  // namespace dpnet
