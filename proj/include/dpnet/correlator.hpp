#pragma once

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "dpnet/simnet.hpp"

namespace dpnet {

enum class WindowKind { rectangular, hann };

// Welch segmentation.  The band is realized as the bins with
// band_lo <= f < Nyquist and f <= band_hi; the Nyquist bin itself is dropped
// (its one-sided normalization differs).
struct SpectralConfig {
  size_t segment_samples = 100000;
  double overlap_fraction = 0.5;
  WindowKind window = WindowKind::hann;
  double band_lo_hz = 1.0;
  double band_hi_hz = 500.0;

  size_t step_samples() const;
  size_t n_segments(size_t record_samples) const;
  void validate(size_t record_samples, double sample_rate_hz) const;
};

struct CrossSpectrum {
  std::string station_a, sensor_a;
  std::string station_b, sensor_b;
  bool same_station = false;
  size_t n_segments = 0;
  double f0_hz = 0.0;  // frequency of values[0]
  double df_hz = 0.0;
  std::vector<std::complex<double>> values;  // T^2/Hz, one-sided

  size_t n_bins() const { return values.size(); }
  double frequency(size_t i) const { return f0_hz + df_hz * static_cast<double>(i); }
  std::string pair_label() const;
};

enum class SubsetLabel { all, cross_station_only, same_station_only };
enum class Weighting { uniform, inverse_variance };

struct AveragedSpectrum {
  double f0_hz = 0.0;
  double df_hz = 0.0;
  std::vector<double> mean_real;  // T^2/Hz
  std::vector<double> bin_sigma;  // standard error of mean_real per bin
  size_t n_correlators = 0;
  size_t n_segments = 0;
  SubsetLabel subset = SubsetLabel::all;

  double frequency(size_t i) const { return f0_hz + df_hz * static_cast<double>(i); }
  size_t bin_of(double f_hz) const;
};

// Windowed, overlapped, segment-averaged one-sided cross-spectral density
// with window power normalization; welch(x, x) is the real auto-PSD.
CrossSpectrum welch_cross_spectrum(const TimeSeriesRecord& x,
                                   const TimeSeriesRecord& y,
                                   const SpectralConfig& cfg);

// All C(n,2) pair spectra in lexicographic (station, sensor) order.
// Deterministic for any worker count.
std::vector<CrossSpectrum> all_pair_spectra(const RunData& run,
                                            const SpectralConfig& cfg,
                                            int n_workers = 0);

AveragedSpectrum network_average(const std::vector<CrossSpectrum>& spectra,
                                 SubsetLabel subset,
                                 Weighting weighting = Weighting::uniform);

struct SensitivityPoint {
  size_t n_correlators = 0;
  double field_asd_t = 0.0;  // T/sqrt(Hz)
};

// Field amplitude sensitivity at the reference bin as correlators are added
// one at a time in the deterministic order.  Converts the standard error of
// the averaged spectrum to an equivalent single-pair amplitude spectral
// density: asd = sqrt(sqrt(2 K) * sigma).
std::vector<SensitivityPoint> sensitivity_curve(
    const std::vector<CrossSpectrum>& spectra, double reference_hz);

struct PowerLawFit {
  double prefactor = 0.0;
  double exponent = 0.0;  // a in c * N^-a
  double residual_rms = 0.0;
};

PowerLawFit fit_power_law(const std::vector<SensitivityPoint>& curve);

// Window amplitude sum and power sum for the configured window.
struct WindowSums {
  double coherent_sum = 0.0;  // sum w[n]
  double power_sum = 0.0;     // sum w[n]^2
};
WindowSums window_sums(WindowKind kind, size_t n);

}  // namespace dpnet
