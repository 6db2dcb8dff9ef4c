#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dpnet/bundle.hpp"
#include "dpnet/config.hpp"
#include "dpnet/constants.hpp"
#include "dpnet/detect.hpp"
#include "dpnet/pipeline.hpp"
#include "dpnet/version.hpp"
#include "dpnet/wire.hpp"

namespace py = pybind11;
using namespace dpnet;

namespace {

py::array_t<double> to_numpy(const std::vector<double>& v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

RunSpec spec_from_json_str(const std::string& text) {
  return run_spec_from_json(nlohmann::json::parse(text));
}

SpectralConfig spectral_from_json_str(const std::string& text) {
  return spectral_from_json(nlohmann::json::parse(text));
}

}  // namespace

PYBIND11_MODULE(_dpnet, m) {
  m.doc() = "Magnetometer-network dark-photon search pipeline";
  m.attr("__version__") = kToolVersion;

  // physics
  m.def("freq_to_mass_ev", &freq_to_mass_ev, py::arg("frequency_hz"));
  m.def("mass_to_freq_hz", &mass_to_freq_hz, py::arg("mass_ev"));
  m.def("constants_json", &constants::constants_json);

  py::class_<HaloModel>(m, "HaloModel")
      .def(py::init<>())
      .def_readwrite("local_density_gev_cm3", &HaloModel::local_density_gev_cm3)
      .def_readwrite("velocity_dispersion", &HaloModel::velocity_dispersion)
      .def_readwrite("quality_factor", &HaloModel::quality_factor);

  py::class_<ShieldGeometry>(m, "ShieldGeometry")
      .def(py::init<>())
      .def(py::init([](double edge, double coupling) {
             return ShieldGeometry{edge, coupling};
           }),
           py::arg("edge_length_m"), py::arg("coupling_factor") = 1.0)
      .def_readwrite("edge_length_m", &ShieldGeometry::edge_length_m)
      .def_readwrite("coupling_factor", &ShieldGeometry::coupling_factor);

  py::class_<CoherenceProperties>(m, "CoherenceProperties")
      .def_readonly("time_s", &CoherenceProperties::time_s)
      .def_readonly("length_m", &CoherenceProperties::length_m);

  m.def(
      "coherence_properties",
      [](double f, const HaloModel& halo) { return coherence_properties(f, halo); },
      py::arg("frequency_hz"), py::arg("halo") = HaloModel{});
  m.def("wall_field_amplitude_t", &wall_field_amplitude_t, py::arg("epsilon"),
        py::arg("frequency_hz"), py::arg("geometry"));
  m.def("epsilon_from_field", &epsilon_from_field, py::arg("field_t"),
        py::arg("frequency_hz"), py::arg("geometry"));
  m.def(
      "rms_potential_ev",
      [](double m_ev, const HaloModel& halo) { return rms_potential_ev(m_ev, halo); },
      py::arg("mass_ev"), py::arg("halo") = HaloModel{});

  py::class_<DpdmParams>(m, "DpdmParams")
      .def_static("from_frequency", &DpdmParams::from_frequency,
                  py::arg("frequency_hz"), py::arg("epsilon"),
                  py::arg("phase_rad") = 0.0, py::arg("amplitude_scale") = 1.0)
      .def_readwrite("frequency_hz", &DpdmParams::frequency_hz)
      .def_readwrite("mass_ev", &DpdmParams::mass_ev)
      .def_readwrite("epsilon", &DpdmParams::epsilon)
      .def_readwrite("phase_rad", &DpdmParams::phase_rad)
      .def_readwrite("amplitude_scale", &DpdmParams::amplitude_scale);

  // simnet
  py::class_<TimeSeriesRecord>(m, "TimeSeriesRecord")
      .def_readonly("sensor_id", &TimeSeriesRecord::sensor_id)
      .def_readonly("station_id", &TimeSeriesRecord::station_id)
      .def_readonly("start_time_gps_ns", &TimeSeriesRecord::start_time_gps_ns)
      .def_readonly("sample_rate_hz", &TimeSeriesRecord::sample_rate_hz)
      .def_property_readonly(
          "samples",
          [](const TimeSeriesRecord& r) { return to_numpy(r.samples); });

  py::class_<RunData>(m, "RunData")
      .def_readonly("records", &RunData::records)
      .def_readonly("seed", &RunData::seed)
      .def("find",
           [](const RunData& run, const std::string& station,
              const std::string& sensor) -> const TimeSeriesRecord* {
             return run.find(station, sensor);
           },
           py::arg("station_id"), py::arg("sensor_id"),
           py::return_value_policy::reference_internal);

  py::class_<RunSpec>(m, "RunSpec")
      .def_static("default_network", &RunSpec::default_network, py::arg("seed"),
                  py::arg("common_mode_asd") = 0.0,
                  py::arg("duration_s") = 2000.0)
      .def_static("from_json", &spec_from_json_str, py::arg("json_text"))
      .def("to_json",
           [](const RunSpec& spec) { return run_spec_to_json(spec).dump(2); })
      .def_readwrite("duration_s", &RunSpec::duration_s)
      .def_readwrite("sample_rate_hz", &RunSpec::sample_rate_hz)
      .def_readwrite("seed", &RunSpec::seed)
      .def_readwrite("dpdm", &RunSpec::dpdm);

  m.def("generate_run", &generate_run, py::arg("spec"),
        py::call_guard<py::gil_scoped_release>());
  m.def("sensor_geometries", &sensor_geometries, py::arg("spec"));
  m.def("apply_clock_error", &apply_clock_error, py::arg("record"),
        py::arg("offset_s"), py::arg("jitter_rms_s"), py::arg("seed"));
  m.def("estimate_white_noise_asd", &estimate_white_noise_asd, py::arg("record"));

  // wire
  m.def(
      "write_run",
      [](const RunData& run, const std::filesystem::path& path,
         uint64_t spec_hash) {
        RunFileInfo info;
        info.spec_hash = spec_hash;
        write_run(run, path, info);
      },
      py::arg("run"), py::arg("path"), py::arg("spec_hash") = 0);
  m.def(
      "read_run",
      [](const std::filesystem::path& path) { return read_run(path); },
      py::arg("path"));

  // correlator
  py::enum_<WindowKind>(m, "WindowKind")
      .value("rectangular", WindowKind::rectangular)
      .value("hann", WindowKind::hann);

  py::class_<SpectralConfig>(m, "SpectralConfig")
      .def(py::init<>())
      .def_static("from_json", &spectral_from_json_str, py::arg("json_text"))
      .def_readwrite("segment_samples", &SpectralConfig::segment_samples)
      .def_readwrite("overlap_fraction", &SpectralConfig::overlap_fraction)
      .def_readwrite("window", &SpectralConfig::window)
      .def_readwrite("band_lo_hz", &SpectralConfig::band_lo_hz)
      .def_readwrite("band_hi_hz", &SpectralConfig::band_hi_hz);

  py::class_<CrossSpectrum>(m, "CrossSpectrum")
      .def_readonly("station_a", &CrossSpectrum::station_a)
      .def_readonly("sensor_a", &CrossSpectrum::sensor_a)
      .def_readonly("station_b", &CrossSpectrum::station_b)
      .def_readonly("sensor_b", &CrossSpectrum::sensor_b)
      .def_readonly("same_station", &CrossSpectrum::same_station)
      .def_readonly("n_segments", &CrossSpectrum::n_segments)
      .def_readonly("f0_hz", &CrossSpectrum::f0_hz)
      .def_readonly("df_hz", &CrossSpectrum::df_hz)
      .def_property_readonly("values", [](const CrossSpectrum& cs) {
        py::array_t<std::complex<double>> out(
            static_cast<py::ssize_t>(cs.values.size()));
        std::copy(cs.values.begin(), cs.values.end(), out.mutable_data());
        return out;
      });

  py::enum_<SubsetLabel>(m, "SubsetLabel")
      .value("all", SubsetLabel::all)
      .value("cross_station_only", SubsetLabel::cross_station_only)
      .value("same_station_only", SubsetLabel::same_station_only);

  py::enum_<Weighting>(m, "Weighting")
      .value("uniform", Weighting::uniform)
      .value("inverse_variance", Weighting::inverse_variance);

  py::class_<AveragedSpectrum>(m, "AveragedSpectrum")
      .def_readonly("f0_hz", &AveragedSpectrum::f0_hz)
      .def_readonly("df_hz", &AveragedSpectrum::df_hz)
      .def_readonly("n_correlators", &AveragedSpectrum::n_correlators)
      .def_readonly("n_segments", &AveragedSpectrum::n_segments)
      .def_readonly("subset", &AveragedSpectrum::subset)
      .def("bin_of", &AveragedSpectrum::bin_of, py::arg("frequency_hz"))
      .def_property_readonly(
          "mean_real",
          [](const AveragedSpectrum& a) { return to_numpy(a.mean_real); })
      .def_property_readonly(
          "bin_sigma",
          [](const AveragedSpectrum& a) { return to_numpy(a.bin_sigma); });

  m.def("welch_cross_spectrum", &welch_cross_spectrum, py::arg("x"), py::arg("y"),
        py::arg("config"), py::call_guard<py::gil_scoped_release>());
  m.def("all_pair_spectra", &all_pair_spectra, py::arg("run"), py::arg("config"),
        py::arg("n_workers") = 0, py::call_guard<py::gil_scoped_release>());
  m.def("network_average", &network_average, py::arg("spectra"), py::arg("subset"),
        py::arg("weighting") = Weighting::uniform);

  py::class_<SensitivityPoint>(m, "SensitivityPoint")
      .def_readonly("n_correlators", &SensitivityPoint::n_correlators)
      .def_readonly("field_asd_t", &SensitivityPoint::field_asd_t);

  py::class_<PowerLawFit>(m, "PowerLawFit")
      .def_readonly("prefactor", &PowerLawFit::prefactor)
      .def_readonly("exponent", &PowerLawFit::exponent)
      .def_readonly("residual_rms", &PowerLawFit::residual_rms);

  m.def("sensitivity_curve", &sensitivity_curve, py::arg("spectra"),
        py::arg("reference_hz"));
  m.def("fit_power_law", &fit_power_law, py::arg("curve"));

  // detect
  py::class_<SnrSpectrum>(m, "SnrSpectrum")
      .def_readonly("f0_hz", &SnrSpectrum::f0_hz)
      .def_readonly("df_hz", &SnrSpectrum::df_hz)
      .def_readonly("sigma_window_bins", &SnrSpectrum::sigma_window_bins)
      .def("bin_of", &SnrSpectrum::bin_of, py::arg("frequency_hz"))
      .def_property_readonly(
          "snr", [](const SnrSpectrum& s) { return to_numpy(s.snr); });

  m.def("snr_spectrum", &snr_spectrum, py::arg("avg"),
        py::arg("window_bins") = 256, py::arg("n_workers") = 0,
        py::call_guard<py::gil_scoped_release>());

  py::class_<AsymmetryStats>(m, "AsymmetryStats")
      .def_readonly("n_above", &AsymmetryStats::n_above)
      .def_readonly("n_below", &AsymmetryStats::n_below)
      .def_readonly("skewness", &AsymmetryStats::skewness);

  m.def("snr_asymmetry_stats", &snr_asymmetry_stats, py::arg("snr"),
        py::arg("bound"));

  py::class_<NoiseModel>(m, "NoiseModel")
      .def_readonly("sensor_asd", &NoiseModel::sensor_asd)
      .def_readonly("n_segments", &NoiseModel::n_segments);

  m.def("measured_noise_model", &measured_noise_model, py::arg("run"),
        py::arg("config"));
  m.def("mc_threshold", &mc_threshold, py::arg("model"), py::arg("n_trials"),
        py::arg("cl"), py::arg("seed"), py::arg("window_bins") = 256,
        py::arg("bins_per_trial") = 2048, py::arg("n_workers") = 0,
        py::call_guard<py::gil_scoped_release>());
  m.def("mc_symmetric_band", &mc_symmetric_band, py::arg("model"),
        py::arg("n_trials"), py::arg("coverage"), py::arg("seed"),
        py::arg("window_bins") = 256, py::arg("bins_per_trial") = 2048,
        py::arg("n_workers") = 0, py::call_guard<py::gil_scoped_release>());

  py::class_<BinResponse>(m, "BinResponse")
      .def_readonly("center_factor", &BinResponse::center_factor)
      .def_readonly("edge_factor", &BinResponse::edge_factor);

  m.def("calibrate_bin_response", &calibrate_bin_response, py::arg("config"),
        py::arg("frequency_hz"), py::arg("sample_rate_hz"));
  m.def("pair_geometry_factor", &pair_geometry_factor, py::arg("geometry"));
  m.def("epsilon_from_pair_power", &epsilon_from_pair_power, py::arg("power"),
        py::arg("frequency_hz"), py::arg("response"), py::arg("geometry_factor"));

  py::enum_<VetoStatus>(m, "VetoStatus")
      .value("pending", VetoStatus::pending)
      .value("passed", VetoStatus::passed)
      .value("rejected", VetoStatus::rejected);

  py::enum_<VetoReason>(m, "VetoReason")
      .value("half_run_inconsistent", VetoReason::half_run_inconsistent)
      .value("cross_station_absent", VetoReason::cross_station_absent)
      .value("pair_amplitude_nonuniform", VetoReason::pair_amplitude_nonuniform)
      .value("known_technical_line", VetoReason::known_technical_line);

  py::class_<Candidate>(m, "Candidate")
      .def_readonly("frequency_hz", &Candidate::frequency_hz)
      .def_readonly("snr", &Candidate::snr)
      .def_readonly("implied_epsilon", &Candidate::implied_epsilon)
      .def_readonly("status", &Candidate::status)
      .def_readonly("reasons", &Candidate::reasons);

  m.def("find_candidates", &find_candidates, py::arg("snr"), py::arg("avg"),
        py::arg("threshold"), py::arg("response"), py::arg("geometry_factor"));

  py::class_<VetoPolicy>(m, "VetoPolicy")
      .def(py::init<>())
      .def_readwrite("snr_threshold", &VetoPolicy::snr_threshold)
      .def_readwrite("cross_amplitude_factor", &VetoPolicy::cross_amplitude_factor)
      .def_readwrite("uniformity_nsigma", &VetoPolicy::uniformity_nsigma)
      .def_readwrite("known_lines_hz", &VetoPolicy::known_lines_hz)
      .def_readwrite("line_match_tol_hz", &VetoPolicy::line_match_tol_hz)
      .def_readwrite("window_bins", &VetoPolicy::window_bins);

  m.def(
      "veto_candidates",
      [](std::vector<Candidate> candidates, const RunData& run,
         const std::vector<CrossSpectrum>& spectra, const SpectralConfig& cfg,
         const std::vector<SensorGeometry>& geometry, const VetoPolicy& policy,
         int n_workers) {
        veto_candidates(candidates, run, spectra, cfg, geometry, policy,
                        n_workers);
        return candidates;
      },
      py::arg("candidates"), py::arg("run"), py::arg("spectra"), py::arg("config"),
      py::arg("geometry"), py::arg("policy"), py::arg("n_workers") = 0);

  py::class_<SensorGeometry>(m, "SensorGeometry")
      .def_readonly("station_id", &SensorGeometry::station_id)
      .def_readonly("sensor_id", &SensorGeometry::sensor_id)
      .def_readonly("shield", &SensorGeometry::shield);

  py::class_<ExclusionCurve>(m, "ExclusionCurve")
      .def_property_readonly(
          "mass_ev", [](const ExclusionCurve& c) { return to_numpy(c.mass_ev); })
      .def_property_readonly("epsilon_95", [](const ExclusionCurve& c) {
        return to_numpy(c.epsilon_95);
      });

  m.def("exclusion_curve", &exclusion_curve, py::arg("avg"), py::arg("response"),
        py::arg("geometry"), py::arg("cl"));

  py::class_<InjectionResult>(m, "InjectionResult")
      .def_readonly("injected_epsilon", &InjectionResult::injected_epsilon)
      .def_readonly("recovered_epsilon", &InjectionResult::recovered_epsilon)
      .def_readonly("snr", &InjectionResult::snr)
      .def_readonly("detected", &InjectionResult::detected);

  m.def("inject_and_recover", &inject_and_recover, py::arg("run"),
        py::arg("params"), py::arg("geometry"), py::arg("config"),
        py::arg("detection_threshold"), py::arg("window_bins") = 256,
        py::arg("n_workers") = 0, py::call_guard<py::gil_scoped_release>());

  m.def("add_dpdm_tone",
        [](RunData run, const DpdmParams& params,
           const std::vector<SensorGeometry>& geometry) {
          add_dpdm_tone(run, params, geometry);
          return run;
        },
        py::arg("run"), py::arg("params"), py::arg("geometry"));
}
