#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <thread>

#include "dpnet/bundle.hpp"
#include "dpnet/config.hpp"
#include "dpnet/constants.hpp"
#include "dpnet/detect.hpp"
#include "dpnet/net.hpp"
#include "dpnet/pipeline.hpp"
#include "dpnet/rng.hpp"
#include "dpnet/version.hpp"
#include "dpnet/wire.hpp"

namespace fs = std::filesystem;
using namespace dpnet;

namespace {

// Exit codes: 0 success, 1 criterion failure, 2 usage error, 3 data integrity.
constexpr int kExitOk = 0;
constexpr int kExitCriterionFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDataIntegrity = 3;

fs::path data_dir_default(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("DPNET_DATA_DIR")) return env;
  return ".";
}

PipelineConfig load_config_or_default(const std::string& config_path,
                                      uint64_t seed_override, bool has_seed) {
  PipelineConfig cfg = config_path.empty()
                           ? default_pipeline_config(has_seed ? seed_override : 1)
                           : load_pipeline_config(config_path);
  if (has_seed) cfg.run.seed = seed_override;
  cfg.validate();
  return cfg;
}

RunFileInfo make_file_info(const PipelineConfig& cfg) {
  RunFileInfo info;
  info.spec_hash = run_spec_hash(cfg.run);
  uint64_t a = mix64(info.spec_hash ^ cfg.run.seed);
  uint64_t b = mix64(a ^ 0x75756964);  // uuid tag
  for (int i = 0; i < 8; ++i) {
    info.uuid[static_cast<size_t>(i)] = static_cast<uint8_t>(a >> (8 * i));
    info.uuid[static_cast<size_t>(8 + i)] = static_cast<uint8_t>(b >> (8 * i));
  }
  return info;
}

void warn_on_hash_mismatch(const RunFileInfo& info, const PipelineConfig& cfg) {
  const uint64_t expected = run_spec_hash(cfg.run);
  if (info.spec_hash != expected) {
    std::fprintf(stderr,
                 "warning: run file spec hash %016llx differs from configured "
                 "run spec %016llx; results reflect the file contents\n",
                 static_cast<unsigned long long>(info.spec_hash),
                 static_cast<unsigned long long>(expected));
  }
}

std::vector<SensorKey> expected_sensors(const PipelineConfig& cfg) {
  std::vector<SensorKey> keys;
  for (const auto& s : cfg.run.sensors) keys.push_back({s.station_id, s.sensor_id});
  std::sort(keys.begin(), keys.end());
  return keys;
}

struct SpectraProducts {
  std::vector<CrossSpectrum> spectra;
  AveragedSpectrum avg_all;
};

SpectraProducts compute_spectra(const RunData& run, const PipelineConfig& cfg,
                                int workers) {
  SpectraProducts out;
  out.spectra = all_pair_spectra(run, cfg.spectral, workers);
  out.avg_all = network_average(out.spectra, SubsetLabel::all);
  return out;
}

int cmd_constants(const std::string& out_path) {
  const std::string text = constants::constants_json() + "\n";
  if (out_path.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    write_text_file(out_path, text);
  }
  return kExitOk;
}

int cmd_simulate(const PipelineConfig& cfg, const fs::path& out_dir) {
  const RunData run = generate_run(cfg.run);
  const RunFileInfo info = make_file_info(cfg);
  fs::create_directories(out_dir);
  const fs::path run_path =
      out_dir / ("run_" + std::to_string(cfg.run.seed) + ".amlr");
  write_run(run, run_path, info);

  nlohmann::ordered_json sidecar;
  sidecar["tool_version"] = kToolVersion;
  char hash_hex[32];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(info.spec_hash));
  sidecar["spec_hash"] = hash_hex;
  sidecar["run_spec"] = run_spec_to_json(cfg.run);
  write_text_file(run_path.string() + ".spec.json", sidecar.dump(2) + "\n");

  std::printf("%s\n", run_path.string().c_str());
  return kExitOk;
}

int cmd_serve(const PipelineConfig& cfg, const std::string& run_file,
              const std::string& endpoint_str, size_t chunk) {
  const Endpoint endpoint = Endpoint::parse(endpoint_str);
  RunData run;
  if (!run_file.empty()) {
    run = read_run(run_file);
  } else {
    run = generate_run(cfg.run);
  }
  NodeOptions options;
  options.chunk_samples = chunk;
  std::vector<std::thread> nodes;
  nodes.reserve(run.records.size());
  for (const auto& rec : run.records)
    nodes.emplace_back([&rec, &endpoint, &options] {
      run_node(rec, endpoint, options);
    });
  for (auto& t : nodes) t.join();
  std::printf("served %zu sensor streams to %s\n", run.records.size(),
              endpoint.str().c_str());
  return kExitOk;
}

int cmd_collect(const PipelineConfig& cfg, const std::string& endpoint_str,
                const fs::path& out_dir, double deadline_s) {
  const Endpoint endpoint = Endpoint::parse(endpoint_str);
  CollectorOptions options;
  options.deadline = std::chrono::milliseconds(
      static_cast<long long>(deadline_s * 1000.0));
  const RunData run = run_collector(endpoint, expected_sensors(cfg), options);
  fs::create_directories(out_dir);
  const fs::path run_path =
      out_dir / ("collected_" + std::to_string(cfg.run.seed) + ".amlr");
  write_run(run, run_path, make_file_info(cfg));
  std::printf("%s\n", run_path.string().c_str());
  return kExitOk;
}

int cmd_correlate(const PipelineConfig& cfg, const std::string& run_file,
                  const fs::path& out_dir, int workers) {
  RunFileInfo info;
  const RunData run = read_run(run_file, &info);
  warn_on_hash_mismatch(info, cfg);

  auto products = compute_spectra(run, cfg, workers);
  SpectraBundle bundle;
  bundle.config_hash = config_hash(cfg);
  bundle.averaged.push_back(products.avg_all);
  const bool have_cross = std::any_of(
      products.spectra.begin(), products.spectra.end(),
      [](const CrossSpectrum& s) { return !s.same_station; });
  const bool have_same = std::any_of(
      products.spectra.begin(), products.spectra.end(),
      [](const CrossSpectrum& s) { return s.same_station; });
  if (have_cross)
    bundle.averaged.push_back(
        network_average(products.spectra, SubsetLabel::cross_station_only));
  if (have_same)
    bundle.averaged.push_back(
        network_average(products.spectra, SubsetLabel::same_station_only));
  bundle.spectra = std::move(products.spectra);

  fs::create_directories(out_dir);
  write_bundle(bundle, out_dir / "spectra.amlb");

  for (const auto& avg : bundle.averaged) {
    const char* label = avg.subset == SubsetLabel::all ? "all"
                        : avg.subset == SubsetLabel::cross_station_only
                            ? "cross_station"
                            : "same_station";
    std::vector<std::string> lines;
    lines.reserve(avg.mean_real.size());
    for (size_t k = 0; k < avg.mean_real.size(); ++k)
      lines.push_back(format_double(avg.frequency(k)) + "," +
                      format_double(avg.mean_real[k]) + "," +
                      format_double(avg.bin_sigma[k]));
    write_csv(out_dir / (std::string("average_") + label + ".csv"),
              bundle.config_hash, "frequency_hz,mean_real,bin_sigma", lines);
  }
  std::printf("%s\n", (out_dir / "spectra.amlb").string().c_str());
  return kExitOk;
}

int cmd_scan(const PipelineConfig& cfg, const std::string& run_file,
             const fs::path& out_dir, size_t trials_override, double cl_override,
             int workers) {
  PipelineConfig local = cfg;
  if (trials_override > 0) local.detection.mc_trials = trials_override;
  if (cl_override > 0) local.detection.cl = cl_override;
  local.detection.validate();

  RunFileInfo info;
  const RunData run = read_run(run_file, &info);
  warn_on_hash_mismatch(info, local);

  auto products = compute_spectra(run, local, workers);
  const auto snr =
      snr_spectrum(products.avg_all, local.detection.window_bins, workers);
  const auto model = measured_noise_model(run, local.spectral);
  const double threshold =
      mc_threshold(model, local.detection.mc_trials, local.detection.cl,
                   local.run.seed + 31, local.detection.window_bins,
                   local.detection.mc_bins_per_trial, workers);
  const double fs = run.records.at(0).sample_rate_hz;
  const double mid =
      0.5 * (local.spectral.band_lo_hz + local.spectral.band_hi_hz);
  const auto response = calibrate_bin_response(local.spectral, mid, fs);
  const auto geometry = sensor_geometries(local.run);
  auto candidates = find_candidates(snr, products.avg_all, threshold, response,
                                    pair_geometry_factor(geometry));

  VetoPolicy policy;
  policy.snr_threshold = threshold;
  policy.known_lines_hz = local.detection.known_lines_hz;
  policy.line_match_tol_hz = local.detection.line_match_tol_hz;
  policy.cross_amplitude_factor = local.detection.cross_amplitude_factor;
  policy.uniformity_nsigma = local.detection.uniformity_nsigma;
  policy.window_bins = local.detection.window_bins;
  veto_candidates(candidates, run, products.spectra, local.spectral, geometry,
                  policy, workers);

  fs::create_directories(out_dir);
  std::ostringstream jsonl;
  for (const auto& c : candidates) {
    nlohmann::ordered_json jc;
    jc["frequency_hz"] = c.frequency_hz;
    jc["snr"] = c.snr;
    jc["implied_epsilon"] = c.implied_epsilon;
    jc["veto_status"] = veto_status_name(c.status);
    jc["reasons"] = nlohmann::ordered_json::array();
    for (auto reason : c.reasons) jc["reasons"].push_back(veto_reason_name(reason));
    jsonl << jc.dump() << "\n";
  }
  write_text_file(out_dir / "candidates.jsonl", jsonl.str());

  nlohmann::ordered_json j;
  j["tool_version"] = kToolVersion;
  j["mc_threshold"] = threshold;
  j["cl"] = local.detection.cl;
  j["n_bins"] = snr.snr.size();
  j["n_candidates"] = candidates.size();
  write_text_file(out_dir / "scan_summary.json", j.dump(2) + "\n");
  std::printf("candidates: %zu (threshold %.3f)\n", candidates.size(), threshold);
  return kExitOk;
}

int cmd_inject(const PipelineConfig& cfg, const std::string& run_file,
               double frequency, double epsilon, double phase, int workers) {
  RunFileInfo info;
  const RunData run = read_run(run_file, &info);
  warn_on_hash_mismatch(info, cfg);
  const auto geometry = sensor_geometries(cfg.run);
  const auto model = measured_noise_model(run, cfg.spectral);
  const double threshold =
      mc_threshold(model, cfg.detection.mc_trials, cfg.detection.cl,
                   cfg.run.seed + 41, cfg.detection.window_bins,
                   cfg.detection.mc_bins_per_trial, workers);
  const auto params = DpdmParams::from_frequency(frequency, epsilon, phase);
  const auto result =
      inject_and_recover(run, params, geometry, cfg.spectral, threshold,
                         cfg.detection.window_bins, workers);
  nlohmann::ordered_json j;
  j["injected_epsilon"] = result.injected_epsilon;
  j["recovered_epsilon"] = result.recovered_epsilon;
  j["snr"] = result.snr;
  j["detected"] = result.detected;
  j["threshold"] = threshold;
  std::printf("%s\n", j.dump(2).c_str());
  return kExitOk;
}

int cmd_limits(const PipelineConfig& cfg, const std::string& run_file,
               const fs::path& out_dir, double cl_override, int workers) {
  PipelineConfig local = cfg;
  if (cl_override > 0) local.detection.cl = cl_override;
  local.detection.validate();

  RunFileInfo info;
  const RunData run = read_run(run_file, &info);
  warn_on_hash_mismatch(info, local);
  auto products = compute_spectra(run, local, workers);
  const double fs = run.records.at(0).sample_rate_hz;
  const double mid =
      0.5 * (local.spectral.band_lo_hz + local.spectral.band_hi_hz);
  const auto response = calibrate_bin_response(local.spectral, mid, fs);
  const auto geometry = sensor_geometries(local.run);
  auto curve =
      exclusion_curve(products.avg_all, response, geometry, local.detection.cl);
  curve.provenance.config_hash = config_hash(local);
  curve.provenance.run_seed = local.run.seed;

  fs::create_directories(out_dir);
  std::vector<std::string> lines;
  lines.reserve(curve.mass_ev.size());
  for (size_t k = 0; k < curve.mass_ev.size(); ++k)
    lines.push_back(format_double(curve.mass_ev[k]) + "," +
                    format_double(curve.epsilon_95[k]));
  write_csv(out_dir / "exclusion_curve.csv", curve.provenance.config_hash,
            "mass_eV,epsilon_95", lines);

  nlohmann::ordered_json j;
  j["tool_version"] = kToolVersion;
  j["threshold_method"] = curve.provenance.threshold_method;
  j["amplitude_convention"] = curve.provenance.amplitude_convention;
  j["cl"] = curve.provenance.cl;
  j["response_center_s"] = curve.provenance.response_center;
  j["response_edge_s"] = curve.provenance.response_edge;
  j["run_seed"] = curve.provenance.run_seed;
  char hash_hex[32];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(curve.provenance.config_hash));
  j["config_hash"] = hash_hex;
  write_text_file(out_dir / "exclusion_provenance.json", j.dump(2) + "\n");
  std::printf("%s\n", (out_dir / "exclusion_curve.csv").string().c_str());
  return kExitOk;
}

int cmd_reproduce(const ReproduceOptions& options) {
  const auto report = reproduce_paper(options);
  std::fputs(report.to_text().c_str(), stdout);
  return report.all_pass ? kExitOk : kExitCriterionFailure;
}

int cmd_export_plots(const fs::path& artifacts, const fs::path& out_dir) {
  struct Export {
    const char* source;
    const char* dest;
  };
  const std::vector<Export> exports{
      {"sensitivity_curve.csv", "plot_sensitivity.csv"},
      {"exclusion_curve.csv", "plot_limits.csv"},
      {"snr_histogram.csv", "plot_snr_histogram.csv"},
      {"injection_grid.csv", "plot_injection.csv"},
  };
  for (const auto& e : exports) {
    if (!fs::exists(artifacts / e.source))
      throw ConfigError(std::string("export-plots: missing upstream artifact ") +
                        (artifacts / e.source).string());
  }
  fs::create_directories(out_dir);
  for (const auto& e : exports)
    fs::copy_file(artifacts / e.source, out_dir / e.dest,
                  fs::copy_options::overwrite_existing);
  std::printf("exported %zu plot tables to %s\n", exports.size(),
              out_dir.string().c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed magnetometer-network dark-photon search pipeline"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
  std::string out_flag;
  int workers = 0;
  app.add_option("--config", config_path, "Pipeline config JSON")
      ->envname("DPNET_CONFIG");
  app.add_option("--seed", seed, "Override the run seed")
      ->each([&seed_set](const std::string&) { seed_set = true; });
  app.add_option("--workers", workers, "Worker threads (0 = hardware)");

  auto* constants_cmd = app.add_subcommand("constants", "Dump the constants table");
  std::string constants_out;
  constants_cmd->add_option("--out", constants_out, "Write JSON here instead of stdout");

  auto* simulate = app.add_subcommand("simulate", "Synthesize a run file");
  std::string sim_out;
  double sim_duration = -1.0;
  simulate->add_option("--out", sim_out, "Output directory (or DPNET_DATA_DIR)");
  simulate->add_option("--duration", sim_duration, "Override run duration [s]");

  auto* serve = app.add_subcommand("serve", "Stream sensor records to a collector");
  std::string serve_endpoint, serve_run;
  size_t serve_chunk = 4096;
  serve->add_option("--endpoint", serve_endpoint, "Collector host:port")->required();
  serve->add_option("--run", serve_run, "Run file to stream (default: simulate)");
  serve->add_option("--chunk", serve_chunk, "Samples per frame");

  auto* collect = app.add_subcommand("collect", "Collect node streams into a run file");
  std::string collect_endpoint;
  std::string collect_out;
  double collect_deadline = 60.0;
  collect->add_option("--endpoint", collect_endpoint, "Bind host:port")->required();
  collect->add_option("--out", collect_out, "Output directory (or DPNET_DATA_DIR)");
  collect->add_option("--deadline", collect_deadline, "Seconds to wait for sensors");

  auto* correlate = app.add_subcommand("correlate", "Pair spectra and network averages");
  std::string correlate_run, correlate_out;
  correlate->add_option("--run", correlate_run, "Input run file")->required();
  correlate->add_option("--out", correlate_out, "Output directory");

  auto* scan = app.add_subcommand("scan", "SNR scan, MC threshold, candidates, vetoes");
  std::string scan_run, scan_out;
  size_t scan_trials = 0;
  double scan_cl = -1.0;
  scan->add_option("--run", scan_run, "Input run file")->required();
  scan->add_option("--out", scan_out, "Output directory");
  scan->add_option("--trials", scan_trials, "MC trials override");
  scan->add_option("--cl", scan_cl, "Confidence level override");

  auto* inject = app.add_subcommand("inject", "Inject a tone and recover epsilon");
  std::string inject_run;
  double inject_freq = 0.0, inject_eps = 0.0, inject_phase = 0.0;
  inject->add_option("--run", inject_run, "Input run file")->required();
  inject->add_option("--frequency", inject_freq, "Tone frequency [Hz]")->required();
  inject->add_option("--epsilon", inject_eps, "Kinetic mixing")->required();
  inject->add_option("--phase", inject_phase, "Tone phase [rad]");

  auto* limits = app.add_subcommand("limits", "Exclusion curve from a run file");
  std::string limits_run, limits_out;
  double limits_cl = -1.0;
  limits->add_option("--run", limits_run, "Input run file")->required();
  limits->add_option("--out", limits_out, "Output directory");
  limits->add_option("--cl", limits_cl, "Confidence level override");

  auto* reproduce = app.add_subcommand(
      "reproduce-paper", "Full desk-scale reproduction with pass/fail report");
  ReproduceOptions repro;
  std::string repro_out = "reproduction";
  reproduce->add_option("--out", repro_out, "Artifact directory");
  reproduce->add_option("--sensitivity-seeds", repro.sensitivity_seeds,
                        "Seeds for the sensitivity MC");
  reproduce->add_option("--injection-seeds", repro.injection_seeds,
                        "Seeds for the injection grid");
  reproduce->add_option("--trials", repro.mc_trials, "MC trials for thresholds");

  auto* export_plots = app.add_subcommand("export-plots", "Tidy plot CSVs from artifacts");
  std::string export_in, export_out;
  export_plots->add_option("--artifacts", export_in, "Reproduction artifact dir")
      ->required();
  export_plots->add_option("--out", export_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*constants_cmd) return cmd_constants(constants_out);

    const PipelineConfig cfg = load_config_or_default(config_path, seed, seed_set);

    if (*simulate) {
      PipelineConfig local = cfg;
      if (sim_duration >= 0.0) local.run.duration_s = sim_duration;
      local.run.validate();
      return cmd_simulate(local, data_dir_default(sim_out));
    }
    if (*serve) return cmd_serve(cfg, serve_run, serve_endpoint, serve_chunk);
    if (*collect)
      return cmd_collect(cfg, collect_endpoint, data_dir_default(collect_out),
                         collect_deadline);
    if (*correlate)
      return cmd_correlate(cfg, correlate_run,
                           correlate_out.empty() ? cfg.output_dir : correlate_out,
                           workers);
    if (*scan)
      return cmd_scan(cfg, scan_run, scan_out.empty() ? cfg.output_dir : scan_out,
                      scan_trials, scan_cl, workers);
    if (*inject)
      return cmd_inject(cfg, inject_run, inject_freq, inject_eps, inject_phase,
                        workers);
    if (*limits)
      return cmd_limits(cfg, limits_run,
                        limits_out.empty() ? cfg.output_dir : limits_out,
                        limits_cl, workers);
    if (*reproduce) {
      if (seed_set) repro.seed = seed;
      repro.out_dir = repro_out;
      repro.n_workers = workers;
      return cmd_reproduce(repro);
    }
    if (*export_plots)
      return cmd_export_plots(export_in,
                              export_out.empty() ? export_in : export_out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::domain_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const WireError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDataIntegrity;
  } catch (const CollectError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDataIntegrity;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDataIntegrity;
  }
  return kExitUsage;
}
