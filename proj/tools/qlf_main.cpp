// Command-line front end: nominal / montecarlo / gbwp-sweep / calibrate /
// psd / verify subcommands. Exit codes: 0 ok, 1 experiment failure,
// 2 usage or config error. Failures emit a one-line JSON error record on
// stderr.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "qlf/harness.hpp"
#include "qlf/version.hpp"

namespace {

void error_record(const std::string& kind, const std::string& message) {
  nlohmann::json j;
  j["kind"] = kind;
  j["message"] = message;
  std::cerr << j.dump() << '\n';
}

qlf::ExperimentConfig load_config(const std::string& path, std::uint64_t seed_override,
                                  bool seed_set, int threads) {
  if (!std::filesystem::exists(path)) {
    error_record("config_not_found", "missing config file: " + path);
    std::exit(2);
  }
  auto cfg = qlf::ExperimentConfig::from_file(path);
  if (seed_set) cfg.seed = seed_override;
  if (threads > 0) cfg.threads = threads;
  return cfg;
}

int finish(const qlf::RunOutcome& outcome) {
  if (!outcome.ok) {
    error_record("experiment_failed", outcome.message);
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"control-bounded quadrature leapfrog ADC toolkit"};
  app.set_version_flag("--version", qlf::kVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    if (needs_config) cmd->add_option("--config", config_path, "TOML config file")->required();
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--seed", seed, "seed override")->each([&](const std::string&) { seed_set = true; });
    cmd->add_option("--threads", threads, "worker threads");
  };

  auto* nominal = app.add_subcommand("nominal", "notch sweep with Wiener banks -> psd.csv, snr.csv");
  add_common(nominal, true);
  auto* montecarlo = app.add_subcommand("montecarlo", "mismatch Monte Carlo -> snr_hist.csv, ...");
  add_common(montecarlo, true);
  auto* gbwp = app.add_subcommand("gbwp-sweep", "op-amp GBWP x DC-gain sweep -> snr_vs_gbwp.csv");
  add_common(gbwp, true);
  auto* calibrate = app.add_subcommand("calibrate", "LMS calibration -> calibrated.bank");
  add_common(calibrate, true);

  auto* verify = app.add_subcommand("verify", "stability conditions + rotation identity suite");
  int verify_draws = 1000;
  std::uint64_t verify_seed = 7;
  verify->add_option("--draws", verify_draws, "random tuples per suite");
  verify->add_option("--seed", verify_seed, "suite seed");

  auto* psd_cmd = app.add_subcommand("psd", "PSD of an estimate computed from trace+bank files");
  std::string trace_path, bank_path;
  int psd_nfft = 1 << 14;
  double psd_full_scale = 1.0;
  psd_cmd->add_option("--trace", trace_path, "ControlTrace file")->required();
  psd_cmd->add_option("--bank", bank_path, "FirFilterBank file")->required();
  psd_cmd->add_option("--nfft", psd_nfft, "FFT length");
  psd_cmd->add_option("--full-scale", psd_full_scale, "full-scale amplitude");
  psd_cmd->add_option("--out", out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (nominal->parsed())
      return finish(qlf::run_nominal(load_config(config_path, seed, seed_set, threads), out_dir));
    if (montecarlo->parsed())
      return finish(qlf::run_montecarlo(load_config(config_path, seed, seed_set, threads), out_dir));
    if (gbwp->parsed())
      return finish(qlf::run_gbwp_sweep(load_config(config_path, seed, seed_set, threads), out_dir));
    if (calibrate->parsed())
      return finish(qlf::run_calibrate(load_config(config_path, seed, seed_set, threads), out_dir));

    if (verify->parsed()) {
      const auto cond = qlf::verify_conditions_random(verify_draws, verify_seed);
      const auto rot = qlf::verify_rotation_identities(verify_draws, verify_seed);
      nlohmann::json j;
      j["conditions"] = {{"norm_match", cond.norm_match},
                         {"tilde_norm", cond.tilde_norm},
                         {"tilde_angle", cond.tilde_angle},
                         {"superposition_slack", cond.superposition_slack}};
      j["rotation_identities"] = {{"commutativity", rot.commutativity},
                                  {"negation", rot.negation},
                                  {"difference", rot.difference},
                                  {"integral", rot.integral},
                                  {"scaled_decomposition", rot.scaled_decomposition}};
      const bool ok = cond.worst() <= 1e-12 && rot.worst() <= 1e-13;
      j["ok"] = ok;
      std::cout << j.dump(2) << '\n';
      if (!ok) {
        error_record("verify_failed", "residuals above tolerance");
        return 1;
      }
      return 0;
    }

    if (psd_cmd->parsed()) {
      const auto trace = qlf::ControlTrace::load(trace_path);
      const auto bank = qlf::FirFilterBank::load(bank_path);
      const auto est = qlf::estimate(trace, bank, 1);
      const double rate = 1.0 / trace.t_s;
      const qlf::Spectrum spec =
          est.outputs.rows() == 2
              ? qlf::psd(est.complex_sequence(), psd_nfft, psd_full_scale, rate)
              : qlf::psd(est.real_sequence(), psd_nfft, psd_full_scale, rate);
      std::filesystem::create_directories(out_dir);
      std::ofstream csv(out_dir + "/psd.csv");
      csv << "f_hz,psd_dbfs\n";
      char buf[64];
      for (std::size_t i = 0; i < spec.freqs_hz.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.12g,%.12g\n", spec.freqs_hz[i], spec.psd_dbfs[i]);
        csv << buf;
      }
      return 0;
    }
  } catch (const std::exception& e) {
    error_record("error", e.what());
    return 1;
  }
  return 2;
}
