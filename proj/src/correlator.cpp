#include "dpnet/correlator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "dpnet/fft.hpp"
#include "dpnet/parallel.hpp"
#include "dpnet/stats.hpp"

namespace dpnet {

namespace {

struct BandLayout {
  size_t k_lo = 0;
  size_t k_hi = 0;  // inclusive, strictly below Nyquist
  size_t n_bins() const { return k_hi - k_lo + 1; }
};

BandLayout band_layout(const SpectralConfig& cfg, double fs) {
  const double df = fs / static_cast<double>(cfg.segment_samples);
  const size_t nyquist = cfg.segment_samples / 2;
  BandLayout b;
  b.k_lo = static_cast<size_t>(std::ceil(cfg.band_lo_hz / df - 1e-9));
  b.k_lo = std::max<size_t>(b.k_lo, 1);
  size_t hi = static_cast<size_t>(std::floor(cfg.band_hi_hz / df + 1e-9));
  b.k_hi = std::min(hi, nyquist - 1);
  if (b.k_hi < b.k_lo)
    throw std::invalid_argument("spectral: empty analysis band");
  return b;
}

std::vector<double> make_window(WindowKind kind, size_t n) {
  std::vector<double> w(n, 1.0);
  if (kind == WindowKind::hann) {
    for (size_t i = 0; i < n; ++i)
      w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi *
                                  static_cast<double>(i) /
                                  static_cast<double>(n));
  }
  return w;
}

void check_aligned(const TimeSeriesRecord& x, const TimeSeriesRecord& y) {
  if (x.start_time_gps_ns != y.start_time_gps_ns ||
      x.sample_rate_hz != y.sample_rate_hz ||
      x.samples.size() != y.samples.size())
    throw std::invalid_argument("welch: records are not aligned");
}

// Product x * conj(y), written out so that swapping the arguments yields the
// exact bitwise conjugate.
inline std::complex<double> cross_term(const std::complex<double>& x,
                                       const std::complex<double>& y) {
  return {x.real() * y.real() + x.imag() * y.imag(),
          x.imag() * y.real() - x.real() * y.imag()};
}

// Standard error of the mean with the small-sample c4 unbias factor.
double standard_error(double sum, double sum_sq, size_t n) {
  if (n < 2) throw std::invalid_argument("standard_error: need n >= 2");
  const double nn = static_cast<double>(n);
  double var = (sum_sq - sum * sum / nn) / (nn - 1.0);
  if (var < 0.0) var = 0.0;
  return std::sqrt(var / nn) / stats::c4_correction(n);
}

}  // namespace

size_t SpectralConfig::step_samples() const {
  const double step = static_cast<double>(segment_samples) * (1.0 - overlap_fraction);
  return std::max<size_t>(1, static_cast<size_t>(std::llround(step)));
}

size_t SpectralConfig::n_segments(size_t record_samples) const {
  if (record_samples < segment_samples) return 0;
  return (record_samples - segment_samples) / step_samples() + 1;
}

void SpectralConfig::validate(size_t record_samples, double sample_rate_hz) const {
  if (segment_samples < 16)
    throw std::invalid_argument("spectral: segment too short");
  if (overlap_fraction < 0.0 || overlap_fraction >= 1.0)
    throw std::invalid_argument("spectral: overlap must be in [0, 1)");
  if (segment_samples > record_samples)
    throw std::invalid_argument("spectral: segment longer than record");
  if (band_lo_hz <= 0.0 || band_hi_hz <= band_lo_hz)
    throw std::invalid_argument("spectral: bad band");
  if (band_lo_hz >= sample_rate_hz / 2.0)
    throw std::invalid_argument("spectral: band beyond Nyquist");
  band_layout(*this, sample_rate_hz);
}

std::string CrossSpectrum::pair_label() const {
  return station_a + "/" + sensor_a + "-" + station_b + "/" + sensor_b;
}

size_t AveragedSpectrum::bin_of(double f_hz) const {
  const double pos = (f_hz - f0_hz) / df_hz;
  const long k = std::lround(pos);
  if (k < 0 || static_cast<size_t>(k) >= mean_real.size())
    throw std::out_of_range("averaged spectrum: frequency outside band");
  return static_cast<size_t>(k);
}

WindowSums window_sums(WindowKind kind, size_t n) {
  const auto w = make_window(kind, n);
  WindowSums s;
  for (double v : w) {
    s.coherent_sum += v;
    s.power_sum += v * v;
  }
  return s;
}

CrossSpectrum welch_cross_spectrum(const TimeSeriesRecord& x,
                                   const TimeSeriesRecord& y,
                                   const SpectralConfig& cfg) {
  check_aligned(x, y);
  cfg.validate(x.samples.size(), x.sample_rate_hz);
  const double fs = x.sample_rate_hz;
  const size_t L = cfg.segment_samples;
  const auto band = band_layout(cfg, fs);
  const auto window = make_window(cfg.window, L);
  const double wpow =
      std::inner_product(window.begin(), window.end(), window.begin(), 0.0);
  const size_t n_seg = cfg.n_segments(x.samples.size());
  const size_t step = cfg.step_samples();

  RealFft fft(L);
  std::vector<double> buf(L);
  std::vector<std::complex<double>> fx(fft.n_bins()), fy(fft.n_bins());
  std::vector<std::complex<double>> acc(band.n_bins(), {0.0, 0.0});

  const bool same_record = (&x == &y) || x.samples == y.samples;
  for (size_t s = 0; s < n_seg; ++s) {
    const size_t start = s * step;
    for (size_t i = 0; i < L; ++i) buf[i] = x.samples[start + i] * window[i];
    fft.forward(buf, fx);
    if (same_record) {
      fy = fx;
    } else {
      for (size_t i = 0; i < L; ++i) buf[i] = y.samples[start + i] * window[i];
      fft.forward(buf, fy);
    }
    for (size_t k = band.k_lo; k <= band.k_hi; ++k)
      acc[k - band.k_lo] += cross_term(fx[k], fy[k]);
  }

  const double scale = 2.0 / (fs * wpow * static_cast<double>(n_seg));
  for (auto& v : acc) v *= scale;

  CrossSpectrum out;
  out.station_a = x.station_id;
  out.sensor_a = x.sensor_id;
  out.station_b = y.station_id;
  out.sensor_b = y.sensor_id;
  out.same_station = x.station_id == y.station_id;
  out.n_segments = n_seg;
  const double df = fs / static_cast<double>(L);
  out.f0_hz = static_cast<double>(band.k_lo) * df;
  out.df_hz = df;
  out.values = std::move(acc);
  return out;
}

std::vector<CrossSpectrum> all_pair_spectra(const RunData& run,
                                            const SpectralConfig& cfg,
                                            int n_workers) {
  if (run.records.size() < 2)
    throw std::invalid_argument("all_pair_spectra: need >= 2 sensors");
  for (size_t i = 1; i < run.records.size(); ++i)
    check_aligned(run.records[0], run.records[i]);
  cfg.validate(run.records[0].samples.size(), run.records[0].sample_rate_hz);

  // Lexicographic ordering of sensors defines the pair order.
  std::vector<size_t> order(run.records.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    const auto& ra = run.records[a];
    const auto& rb = run.records[b];
    return std::tie(ra.station_id, ra.sensor_id) <
           std::tie(rb.station_id, rb.sensor_id);
  });

  const double fs = run.records[0].sample_rate_hz;
  const size_t L = cfg.segment_samples;
  const auto band = band_layout(cfg, fs);
  const auto window = make_window(cfg.window, L);
  const double wpow =
      std::inner_product(window.begin(), window.end(), window.begin(), 0.0);
  const size_t n_seg = cfg.n_segments(run.records[0].samples.size());
  const size_t step = cfg.step_samples();
  const size_t n_sensors = order.size();

  struct Pair {
    size_t a, b;
  };
  std::vector<Pair> pairs;
  pairs.reserve(n_sensors * (n_sensors - 1) / 2);
  for (size_t i = 0; i < n_sensors; ++i)
    for (size_t j = i + 1; j < n_sensors; ++j) pairs.push_back({i, j});

  std::vector<std::vector<std::complex<double>>> acc(
      pairs.size(),
      std::vector<std::complex<double>>(band.n_bins(), {0.0, 0.0}));

  RealFft fft(L);
  std::vector<std::vector<std::complex<double>>> coeffs(
      n_sensors, std::vector<std::complex<double>>(fft.n_bins()));

  // Segments run sequentially; FFTs and pair accumulations are parallel with
  // per-slot writes, so results do not depend on the worker count.
  for (size_t s = 0; s < n_seg; ++s) {
    const size_t start = s * step;
    parallel_for(n_sensors, n_workers, [&](size_t si) {
      std::vector<double> buf(L);
      const auto& rec = run.records[order[si]];
      for (size_t i = 0; i < L; ++i) buf[i] = rec.samples[start + i] * window[i];
      fft.forward(buf, coeffs[si]);
    });
    parallel_for(pairs.size(), n_workers, [&](size_t pi) {
      const auto& fx = coeffs[pairs[pi].a];
      const auto& fy = coeffs[pairs[pi].b];
      auto& a = acc[pi];
      for (size_t k = band.k_lo; k <= band.k_hi; ++k)
        a[k - band.k_lo] += cross_term(fx[k], fy[k]);
    });
  }

  const double scale = 2.0 / (fs * wpow * static_cast<double>(n_seg));
  const double df = fs / static_cast<double>(L);
  std::vector<CrossSpectrum> out(pairs.size());
  for (size_t pi = 0; pi < pairs.size(); ++pi) {
    const auto& ra = run.records[order[pairs[pi].a]];
    const auto& rb = run.records[order[pairs[pi].b]];
    CrossSpectrum cs;
    cs.station_a = ra.station_id;
    cs.sensor_a = ra.sensor_id;
    cs.station_b = rb.station_id;
    cs.sensor_b = rb.sensor_id;
    cs.same_station = ra.station_id == rb.station_id;
    cs.n_segments = n_seg;
    cs.f0_hz = static_cast<double>(band.k_lo) * df;
    cs.df_hz = df;
    cs.values = std::move(acc[pi]);
    for (auto& v : cs.values) v *= scale;
    out[pi] = std::move(cs);
  }
  return out;
}

namespace {

bool in_subset(const CrossSpectrum& cs, SubsetLabel subset) {
  switch (subset) {
    case SubsetLabel::all:
      return true;
    case SubsetLabel::cross_station_only:
      return !cs.same_station;
    case SubsetLabel::same_station_only:
      return cs.same_station;
  }
  return false;
}

}  // namespace

AveragedSpectrum network_average(const std::vector<CrossSpectrum>& spectra,
                                 SubsetLabel subset, Weighting weighting) {
  std::vector<const CrossSpectrum*> sel;
  for (const auto& cs : spectra)
    if (in_subset(cs, subset)) sel.push_back(&cs);
  if (sel.empty())
    throw std::invalid_argument("network_average: empty subset");
  const size_t n_bins = sel[0]->n_bins();
  for (const auto* cs : sel)
    if (cs->n_bins() != n_bins || cs->f0_hz != sel[0]->f0_hz ||
        cs->df_hz != sel[0]->df_hz)
      throw std::invalid_argument("network_average: mismatched grids");

  AveragedSpectrum avg;
  avg.f0_hz = sel[0]->f0_hz;
  avg.df_hz = sel[0]->df_hz;
  avg.n_correlators = sel.size();
  avg.n_segments = sel[0]->n_segments;
  avg.subset = subset;
  avg.mean_real.assign(n_bins, 0.0);
  avg.bin_sigma.assign(n_bins, 0.0);

  const size_t n = sel.size();
  if (weighting == Weighting::uniform) {
    for (size_t k = 0; k < n_bins; ++k) {
      double sum = 0.0, sum_sq = 0.0;
      for (const auto* cs : sel) {
        const double v = cs->values[k].real();
        sum += v;
        sum_sq += v * v;
      }
      avg.mean_real[k] = sum / static_cast<double>(n);
      if (n >= 2) avg.bin_sigma[k] = standard_error(sum, sum_sq, n);
    }
    if (n == 1) {
      // A single correlator has no cross-spectrum scatter; fall back to the
      // robust in-band sigma of its real part.
      const double sigma = stats::mad_sigma(avg.mean_real);
      std::fill(avg.bin_sigma.begin(), avg.bin_sigma.end(), sigma);
    }
  } else {
    // Inverse-variance weights from each spectrum's in-band robust variance.
    std::vector<double> weights(n);
    std::vector<double> re(n_bins);
    for (size_t p = 0; p < n; ++p) {
      for (size_t k = 0; k < n_bins; ++k) re[k] = sel[p]->values[k].real();
      const double sigma = stats::mad_sigma(re);
      if (sigma <= 0.0)
        throw std::invalid_argument("network_average: zero-variance spectrum");
      weights[p] = 1.0 / (sigma * sigma);
    }
    const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
    for (size_t k = 0; k < n_bins; ++k) {
      double acc = 0.0;
      for (size_t p = 0; p < n; ++p) acc += weights[p] * sel[p]->values[k].real();
      avg.mean_real[k] = acc / wsum;
      avg.bin_sigma[k] = std::sqrt(1.0 / wsum);
    }
  }
  return avg;
}

std::vector<SensitivityPoint> sensitivity_curve(
    const std::vector<CrossSpectrum>& spectra, double reference_hz) {
  if (spectra.empty())
    throw std::invalid_argument("sensitivity_curve: no spectra");
  const auto& first = *spectra.begin();
  const double pos = (reference_hz - first.f0_hz) / first.df_hz;
  const long k_ref = std::lround(pos);
  if (k_ref < 0 || static_cast<size_t>(k_ref) >= first.n_bins())
    throw std::invalid_argument("sensitivity_curve: reference outside band");

  const double k2 = std::sqrt(2.0 * static_cast<double>(first.n_segments));
  std::vector<SensitivityPoint> curve;
  curve.reserve(spectra.size());
  double sum = 0.0, sum_sq = 0.0;
  for (size_t p = 0; p < spectra.size(); ++p) {
    const double v = spectra[p].values[static_cast<size_t>(k_ref)].real();
    sum += v;
    sum_sq += v * v;
    double sigma;
    if (p == 0) {
      // Local robust noise level of the single pair around the reference bin.
      const size_t half = 128;
      const size_t lo = static_cast<size_t>(k_ref) > half
                            ? static_cast<size_t>(k_ref) - half
                            : 0;
      const size_t hi =
          std::min(spectra[0].n_bins(), static_cast<size_t>(k_ref) + half + 1);
      std::vector<double> local;
      local.reserve(hi - lo);
      for (size_t k = lo; k < hi; ++k)
        local.push_back(spectra[0].values[k].real());
      sigma = stats::mad_sigma(local);
    } else {
      sigma = standard_error(sum, sum_sq, p + 1);
    }
    SensitivityPoint pt;
    pt.n_correlators = p + 1;
    pt.field_asd_t = std::sqrt(k2 * sigma);
    curve.push_back(pt);
  }
  return curve;
}

PowerLawFit fit_power_law(const std::vector<SensitivityPoint>& curve) {
  if (curve.size() < 5)
    throw std::invalid_argument("fit_power_law: need >= 5 points");
  std::vector<double> lx, ly;
  lx.reserve(curve.size());
  ly.reserve(curve.size());
  for (const auto& pt : curve) {
    if (pt.field_asd_t <= 0.0)
      throw std::invalid_argument("fit_power_law: non-positive sensitivity");
    lx.push_back(std::log(static_cast<double>(pt.n_correlators)));
    ly.push_back(std::log(pt.field_asd_t));
  }
  const auto fit = stats::linear_fit(lx, ly);
  PowerLawFit out;
  out.prefactor = std::exp(fit.intercept);
  out.exponent = -fit.slope;
  out.residual_rms = fit.residual_rms;
  return out;
}

}  // namespace dpnet
