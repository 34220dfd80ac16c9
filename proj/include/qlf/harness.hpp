#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "qlf/analysis.hpp"
#include "qlf/estimator.hpp"
#include "qlf/simulator.hpp"
#include "qlf/system.hpp"

namespace qlf {

// ---------------------------------------------------------------------------
// Minimal TOML subset: [tables], key = value with strings, ints, floats,
// booleans and flat arrays. Enough for the experiment configs.
// ---------------------------------------------------------------------------
struct TomlValue {
  std::variant<std::int64_t, double, bool, std::string, std::vector<double>,
               std::vector<std::string>>
      v;
  double as_double() const;
  std::int64_t as_int() const;
  bool as_bool() const;
  const std::string& as_string() const;
  std::vector<double> as_double_array() const;
  std::vector<std::string> as_string_array() const;
};

using TomlTable = std::map<std::string, std::map<std::string, TomlValue>>;
TomlTable parse_toml(const std::string& text);
TomlTable parse_toml_file(const std::string& path);

// ---------------------------------------------------------------------------

struct ExperimentConfig {
  // design targets
  int order_n = 6;
  int osr = 8;
  double f_s = 1 << 30;                  // Hz; omega_b = pi * f_s / osr
  std::vector<double> notch_fractions;   // f_n / f_s; empty -> (2k+1)/(4 osr)
  bool include_lowpass = true;

  // input
  double full_scale = 1.0;
  double amplitude = 1.0;  // relative to full_scale

  // estimator
  std::string estimator = "wiener";  // wiener | calibrated
  int taps = 1 << 12;

  // run
  std::int64_t periods = 1 << 16;
  int nfft = 1 << 14;
  std::uint64_t seed = 1;
  int threads = 0;  // 0 -> hardware_concurrency
  double xi = 1.0;

  // monte carlo
  int mc_trials = 64;
  double mc_relative_bound = 0.10;
  double mc_notch_fraction = 0.125;
  std::vector<std::string> mc_systems = {"quadrature", "lowpass"};

  // gbwp sweep / calibration
  std::vector<double> gbwp_k_dc_rel = {20.0, 1e4};        // multiples of OSR/pi
  std::vector<double> gbwp_rel = {18.0, 150.0, 750.0};    // multiples of f_n + omega_b/(4 pi)
  double cal_notch_fraction = 5.0 / 16.0;
  int cal_taps = 1 << 9;
  std::int64_t cal_train_periods = 1 << 15;
  std::int64_t cal_test_periods = 1 << 16;
  double cal_step = 2e-5;
  std::int64_t cal_iterations = 3 << 21;
  double cal_reference_ratio = 0.1;
  double cal_input_amplitude = 0.9;

  // provenance, filled by from_file; folded into the manifest
  std::string config_path;
  std::string config_raw;

  // The quadrature converter at (order_n, osr, f_n) is built from a low-pass
  // prototype designed at (order_n, 2*osr, proto_omega_b()); the conversion
  // band has total width bw_hz() = f_s / (2 * osr) centered on f_n.
  double bw_hz() const { return f_s / (2.0 * osr); }
  int proto_osr() const { return 2 * osr; }
  double proto_omega_b() const;
  double f_n(double fraction) const { return fraction * f_s; }

  static ExperimentConfig from_toml(const TomlTable& t);
  static ExperimentConfig from_file(const std::string& path);
};

// FNV-1a over the raw config bytes; identifies the run in the manifest.
std::uint64_t fnv1a(const std::string& bytes);

/// Writes manifest.json (config hash, seed, versions, outputs) next to the
/// CSV artifacts. Identical config+seed yield identical bytes.
void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::string& config_path, const std::string& config_bytes,
                    const ExperimentConfig& cfg, const std::vector<std::string>& outputs);

struct RunOutcome {
  bool ok = true;
  std::string message;
};

RunOutcome run_nominal(const ExperimentConfig& cfg, const std::string& out_dir);
RunOutcome run_montecarlo(const ExperimentConfig& cfg, const std::string& out_dir);
RunOutcome run_gbwp_sweep(const ExperimentConfig& cfg, const std::string& out_dir);
RunOutcome run_calibrate(const ExperimentConfig& cfg, const std::string& out_dir);

// Shared pipeline pieces (also used by the acceptance suite).
struct NominalRun {
  double f_n_hz = 0.0;       // 0 for the low-pass baseline
  double f_sig_hz = 0.0;
  double snr_db = 0.0;
  bool stable = true;
  Spectrum spectrum;
};

/// One quadrature notch position end to end: frontend, Wiener bank, tone
/// simulation, full-rate estimate, Welch PSD, in-band SNR.
NominalRun nominal_quadrature_run(const ExperimentConfig& cfg, double f_n_hz);
NominalRun nominal_lowpass_run(const ExperimentConfig& cfg);

struct McTrial {
  int trial = 0;
  bool stable = true;
  std::int64_t first_unstable_period = -1;
  double snr_db = 0.0;
  double f_hat_hz = 0.0;
};

McTrial montecarlo_trial(const ExperimentConfig& cfg, bool quadrature, int trial);

struct GbwpPoint {
  double k_dc_rel = 0.0;
  double gbwp_rel = 0.0;
  double snr_db = 0.0;
  bool converged = true;
  double final_mse = 0.0;
};

GbwpPoint gbwp_point(const ExperimentConfig& cfg, double k_dc_rel, double gbwp_rel);

/// Reference-filter point spec per the circuit study's proportions:
/// 0 dB at f_n, -3 dB at the band edges f_n +- bw/2, -20 dB at +-1.05 bw/2,
/// fully suppressed at 0 and f_s/2.
std::vector<FirSpecPoint> h0_band_spec(double f_n_hz, double bw_hz, double f_s);

/// Deterministic work pool: fn(i) for i in [0, n), results keyed by index.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace qlf
