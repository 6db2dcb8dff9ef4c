#include "dpnet/simnet.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <set>
#include <stdexcept>

#include "dpnet/fft.hpp"
#include "dpnet/rng.hpp"

namespace dpnet {

namespace {

constexpr size_t kNoiseBlockSamples = 1 << 16;

// Stream tags for key derivation.
constexpr uint64_t kTagSensorNoise = 0x01;
constexpr uint64_t kTagCommonMode = 0x02;
constexpr uint64_t kTagCommonMode1F = 0x03;
constexpr uint64_t kTagClockJitter = 0x04;

void add_block_noise(std::vector<double>& samples, double sigma, uint64_t seed,
                     uint64_t id_a, uint64_t id_b, uint64_t tag) {
  if (sigma <= 0.0) return;
  for (size_t block = 0, start = 0; start < samples.size();
       ++block, start += kNoiseBlockSamples) {
    KeyedStream rng(derive_key(seed, id_a, id_b, tag, block));
    const size_t n = std::min(kNoiseBlockSamples, samples.size() - start);
    for (size_t i = 0; i < n; ++i) samples[start + i] += sigma * rng.next_gaussian();
  }
}

// Deterministic frequency-domain synthesis of a zero-mean stream with
// one-sided PSD psd(f).  Used for the optional 1/f common-mode component.
template <typename PsdFn>
std::vector<double> synthesize_colored(size_t n, double fs, uint64_t key,
                                       PsdFn psd) {
  std::vector<std::complex<double>> spec(n / 2 + 1, {0.0, 0.0});
  KeyedStream rng(key);
  const double df = fs / static_cast<double>(n);
  // E|X_k|^2 = n * fs * S(f_k) / 2 for an unnormalized DFT.
  for (size_t k = 1; k < n / 2; ++k) {
    const double s = psd(static_cast<double>(k) * df);
    const double scale = std::sqrt(static_cast<double>(n) * fs * s / 4.0);
    spec[k] = {scale * rng.next_gaussian(), scale * rng.next_gaussian()};
  }
  std::vector<double> out(n);
  RealIfft ifft(n);
  ifft.inverse(spec, out);
  return out;
}

void add_tone(std::vector<double>& samples, double fs, double freq_hz,
              double amplitude, double phase_rad) {
  if (amplitude == 0.0) return;
  const double two_pi = 2.0 * std::numbers::pi;
  const double dphi = two_pi * freq_hz / fs;
  const std::complex<double> step{std::cos(dphi), std::sin(dphi)};
  constexpr size_t kResyncInterval = 4096;
  std::complex<double> z{0.0, 0.0};
  for (size_t i = 0; i < samples.size(); ++i) {
    if (i % kResyncInterval == 0) {
      // Re-anchor the rotating phasor to the exact phase to stop drift.
      const double cycles = freq_hz * static_cast<double>(i) / fs;
      const double phi =
          two_pi * (cycles - std::floor(cycles)) + phase_rad;
      z = {std::cos(phi), std::sin(phi)};
    }
    samples[i] += amplitude * z.real();
    z *= step;
  }
}

}  // namespace

size_t RunSpec::samples_per_record() const {
  const double n = duration_s * sample_rate_hz;
  return static_cast<size_t>(std::llround(n));
}

void RunSpec::validate() const {
  if (duration_s < 0) throw std::invalid_argument("run: duration must be >= 0");
  if (sample_rate_hz <= 0)
    throw std::invalid_argument("run: sample_rate must be > 0");
  const double n = duration_s * sample_rate_hz;
  if (std::abs(n - std::llround(n)) > 1e-9)
    throw std::invalid_argument("run: duration * sample_rate must be integer");
  if (sensors.empty()) throw std::invalid_argument("run: no sensors");
  std::set<std::pair<std::string, std::string>> seen;
  std::set<std::string> station_ids;
  for (const auto& st : stations) {
    if (!station_ids.insert(st.station_id).second)
      throw std::invalid_argument("run: duplicate station id " + st.station_id);
    if (st.common_mode_asd < 0)
      throw std::invalid_argument("run: common_mode_asd must be >= 0");
    if (st.clock_jitter_rms_s < 0)
      throw std::invalid_argument("run: clock_jitter_rms must be >= 0");
    st.shield.validate();
  }
  for (const auto& s : sensors) {
    if (s.noise_asd <= 0)
      throw std::invalid_argument("run: noise_asd must be > 0");
    if (!station_ids.count(s.station_id))
      throw std::invalid_argument("run: sensor " + s.sensor_id +
                                  " references unknown station " + s.station_id);
    if (!seen.insert({s.station_id, s.sensor_id}).second)
      throw std::invalid_argument("run: duplicate sensor id " + s.station_id +
                                  "/" + s.sensor_id);
  }
  if (dpdm) {
    dpdm->validate();
    // Nyquist for the analysis band; the tone itself must also be resolvable.
    if (dpdm->frequency_hz * 2.0 > sample_rate_hz)
      throw std::invalid_argument("run: dpdm tone above Nyquist");
  }
}

RunSpec RunSpec::default_network(uint64_t seed, double common_mode_asd,
                                 double duration_s) {
  RunSpec spec;
  spec.duration_s = duration_s;
  spec.sample_rate_hz = 1000.0;
  spec.seed = seed;

  StationConfig sz;
  sz.station_id = "SZ";
  sz.location_label = "station-A";
  sz.common_mode_asd = common_mode_asd;
  StationConfig hb = sz;
  hb.station_id = "HB";
  hb.location_label = "station-B";
  spec.stations = {sz, hb};

  auto add_sensor = [&spec](const std::string& station, int index) {
    SensorConfig s;
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%02d", index);
    s.sensor_id = station + buf;
    s.station_id = station;
    spec.sensors.push_back(std::move(s));
  };
  for (int i = 1; i <= 13; ++i) add_sensor("SZ", i);
  for (int i = 1; i <= 2; ++i) add_sensor("HB", i);
  return spec;
}

const TimeSeriesRecord* RunData::find(const std::string& station_id,
                                      const std::string& sensor_id) const {
  for (const auto& r : records)
    if (r.station_id == station_id && r.sensor_id == sensor_id) return &r;
  return nullptr;
}

std::vector<SensorGeometry> sensor_geometries(const RunSpec& spec) {
  std::vector<SensorGeometry> out;
  out.reserve(spec.sensors.size());
  for (const auto& s : spec.sensors) {
    const StationConfig* st = nullptr;
    for (const auto& candidate : spec.stations)
      if (candidate.station_id == s.station_id) st = &candidate;
    if (!st) throw std::invalid_argument("geometry: unknown station");
    SensorGeometry g;
    g.station_id = s.station_id;
    g.sensor_id = s.sensor_id;
    g.shield = st->shield;
    g.shield.coupling_factor = s.coupling_factor;
    out.push_back(std::move(g));
  }
  return out;
}

void add_dpdm_tone(RunData& run, const DpdmParams& params,
                   const std::vector<SensorGeometry>& geometry) {
  params.validate();
  if (params.epsilon == 0.0 || params.amplitude_scale == 0.0) return;
  for (auto& rec : run.records) {
    const SensorGeometry* geo = nullptr;
    for (const auto& g : geometry)
      if (g.station_id == rec.station_id && g.sensor_id == rec.sensor_id)
        geo = &g;
    if (!geo)
      throw std::invalid_argument("tone: no geometry for " + rec.station_id +
                                  "/" + rec.sensor_id);
    const double amp =
        wall_field_amplitude_t(params.epsilon, params.frequency_hz, geo->shield) *
        params.amplitude_scale;
    add_tone(rec.samples, rec.sample_rate_hz, params.frequency_hz, amp,
             params.phase_rad);
  }
}

RunData generate_run(const RunSpec& spec) {
  spec.validate();
  const size_t n = spec.samples_per_record();
  const double fs = spec.sample_rate_hz;
  // Per-sample sigma for white noise of one-sided ASD a: var = a^2 * fs / 2.
  const auto sigma_of = [fs](double asd) { return asd * std::sqrt(fs / 2.0); };

  RunData run;
  run.seed = spec.seed;

  // One shared stream per station, added identically to all its sensors.
  struct StationNoise {
    std::vector<double> common;
  };
  std::vector<StationNoise> station_noise(spec.stations.size());
  for (size_t si = 0; si < spec.stations.size(); ++si) {
    const auto& st = spec.stations[si];
    if (st.common_mode_asd <= 0.0 || n == 0) continue;
    auto& buf = station_noise[si].common;
    buf.assign(n, 0.0);
    const uint64_t sta = fnv1a64(st.station_id);
    add_block_noise(buf, sigma_of(st.common_mode_asd), spec.seed, sta, 0,
                    kTagCommonMode);
    if (st.common_mode_one_over_f && st.one_over_f_knee_hz > 0.0) {
      const double s0 = st.common_mode_asd * st.common_mode_asd;
      const double knee = st.one_over_f_knee_hz;
      auto extra = synthesize_colored(
          n, fs, derive_key(spec.seed, sta, 0, kTagCommonMode1F, 0),
          [s0, knee](double f) { return s0 * knee / f; });
      for (size_t i = 0; i < n; ++i) buf[i] += extra[i];
    }
  }

  run.records.reserve(spec.sensors.size());
  for (const auto& sensor : spec.sensors) {
    TimeSeriesRecord rec;
    rec.sensor_id = sensor.sensor_id;
    rec.station_id = sensor.station_id;
    rec.start_time_gps_ns = kDefaultRunStartGpsNs;
    rec.sample_rate_hz = fs;
    rec.samples.assign(n, 0.0);

    add_block_noise(rec.samples, sigma_of(sensor.noise_asd), spec.seed,
                    fnv1a64(sensor.station_id), fnv1a64(sensor.sensor_id),
                    kTagSensorNoise);

    for (size_t si = 0; si < spec.stations.size(); ++si) {
      if (spec.stations[si].station_id != sensor.station_id) continue;
      const auto& cm = station_noise[si].common;
      for (size_t i = 0; i < cm.size(); ++i) rec.samples[i] += cm[i];
    }

    for (const auto& line : sensor.technical_lines)
      add_tone(rec.samples, fs, line.frequency_hz, line.amplitude_t,
               line.phase_rad);

    run.records.push_back(std::move(rec));
  }

  if (spec.dpdm) add_dpdm_tone(run, *spec.dpdm, sensor_geometries(spec));
  return run;
}

TimeSeriesRecord apply_clock_error(const TimeSeriesRecord& record,
                                   double offset_s, double jitter_rms_s,
                                   uint64_t seed) {
  if (std::abs(offset_s) >= 1.0)
    throw std::domain_error("clock: |offset| must be < 1 s");
  if (jitter_rms_s < 0)
    throw std::domain_error("clock: jitter_rms must be >= 0");
  TimeSeriesRecord out = record;
  if (offset_s == 0.0 && jitter_rms_s == 0.0) return out;

  const int64_t offset_ns = std::llround(offset_s * 1e9);
  out.start_time_gps_ns =
      static_cast<uint64_t>(static_cast<int64_t>(out.start_time_gps_ns) + offset_ns);

  if (jitter_rms_s > 0.0 && out.samples.size() >= 2) {
    // First-order resampling: x(t + dt) ~ x(t) + dt * x'(t).
    const auto& x = record.samples;
    const double fs = record.sample_rate_hz;
    const size_t n = x.size();
    KeyedStream rng(derive_key(seed, fnv1a64(record.station_id),
                               fnv1a64(record.sensor_id), kTagClockJitter, 0));
    for (size_t i = 0; i < n; ++i) {
      const double dt = jitter_rms_s * rng.next_gaussian();
      double deriv;
      if (i == 0)
        deriv = (x[1] - x[0]) * fs;
      else if (i + 1 == n)
        deriv = (x[n - 1] - x[n - 2]) * fs;
      else
        deriv = (x[i + 1] - x[i - 1]) * fs / 2.0;
      out.samples[i] = x[i] + dt * deriv;
    }
  }
  return out;
}

double estimate_white_noise_asd(const TimeSeriesRecord& record) {
  if (record.samples.size() < 10000)
    throw std::invalid_argument("asd estimate: record too short (< 1e4 samples)");
  const size_t seg = 4096;
  const size_t step = seg / 2;
  const double fs = record.sample_rate_hz;
  RealFft fft(seg);
  std::vector<double> window(seg);
  double wpow = 0.0;
  for (size_t i = 0; i < seg; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi *
                                     static_cast<double>(i) /
                                     static_cast<double>(seg));
    wpow += window[i] * window[i];
  }
  std::vector<double> buf(seg);
  std::vector<std::complex<double>> spec(fft.n_bins());
  std::vector<double> psd(fft.n_bins(), 0.0);
  size_t n_seg = 0;
  for (size_t start = 0; start + seg <= record.samples.size(); start += step) {
    for (size_t i = 0; i < seg; ++i) buf[i] = record.samples[start + i] * window[i];
    fft.forward(buf, spec);
    for (size_t k = 0; k < spec.size(); ++k) psd[k] += std::norm(spec[k]);
    ++n_seg;
  }
  const double scale = 2.0 / (fs * wpow * static_cast<double>(n_seg));
  // Average over the flat part of the band, away from DC and Nyquist.
  const size_t k_lo = std::max<size_t>(4, psd.size() / 32);
  const size_t k_hi = psd.size() * 4 / 5;
  double acc = 0.0;
  for (size_t k = k_lo; k < k_hi; ++k) acc += psd[k] * scale;
  const double mean_psd = acc / static_cast<double>(k_hi - k_lo);
  return std::sqrt(mean_psd);
}

}  // namespace dpnet
