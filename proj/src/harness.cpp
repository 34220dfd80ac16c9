#include "qlf/harness.hpp"

#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "qlf/version.hpp"

namespace qlf {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double k2Pi = 2.0 * std::numbers::pi;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}
}  // namespace

// ---------------------------------------------------------------------------
// TOML subset
// ---------------------------------------------------------------------------

double TomlValue::as_double() const {
  if (std::holds_alternative<double>(v)) return std::get<double>(v);
  if (std::holds_alternative<std::int64_t>(v)) return (double)std::get<std::int64_t>(v);
  throw std::runtime_error("toml: expected number");
}
std::int64_t TomlValue::as_int() const {
  if (std::holds_alternative<std::int64_t>(v)) return std::get<std::int64_t>(v);
  if (std::holds_alternative<double>(v)) return (std::int64_t)std::get<double>(v);
  throw std::runtime_error("toml: expected integer");
}
bool TomlValue::as_bool() const {
  if (std::holds_alternative<bool>(v)) return std::get<bool>(v);
  throw std::runtime_error("toml: expected boolean");
}
const std::string& TomlValue::as_string() const {
  if (std::holds_alternative<std::string>(v)) return std::get<std::string>(v);
  throw std::runtime_error("toml: expected string");
}
std::vector<double> TomlValue::as_double_array() const {
  if (std::holds_alternative<std::vector<double>>(v)) return std::get<std::vector<double>>(v);
  throw std::runtime_error("toml: expected number array");
}
std::vector<std::string> TomlValue::as_string_array() const {
  if (std::holds_alternative<std::vector<std::string>>(v))
    return std::get<std::vector<std::string>>(v);
  throw std::runtime_error("toml: expected string array");
}

namespace {

std::string strip(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace((unsigned char)s[a])) ++a;
  while (b > a && std::isspace((unsigned char)s[b - 1])) --b;
  return s.substr(a, b - a);
}

std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_str = !in_str;
    if (line[i] == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

TomlValue parse_scalar(const std::string& tok) {
  const std::string t = strip(tok);
  if (t.empty()) throw std::runtime_error("toml: empty value");
  if (t.front() == '"') {
    if (t.size() < 2 || t.back() != '"') throw std::runtime_error("toml: unterminated string");
    return {t.substr(1, t.size() - 2)};
  }
  if (t == "true") return {true};
  if (t == "false") return {false};
  // Integer when it parses cleanly without '.', 'e', 'x'.
  if (t.find_first_of(".eE") == std::string::npos) {
    try {
      std::size_t pos = 0;
      const std::int64_t i = std::stoll(t, &pos);
      if (pos == t.size()) return {i};
    } catch (...) {
    }
  }
  std::size_t pos = 0;
  const double d = std::stod(t, &pos);
  if (pos != t.size()) throw std::runtime_error("toml: bad value '" + t + "'");
  return {d};
}

TomlValue parse_value(const std::string& raw) {
  const std::string t = strip(raw);
  if (!t.empty() && t.front() == '[') {
    if (t.back() != ']') throw std::runtime_error("toml: unterminated array");
    std::vector<std::string> parts;
    std::string cur;
    bool in_str = false;
    for (std::size_t i = 1; i + 1 < t.size(); ++i) {
      const char c = t[i];
      if (c == '"') in_str = !in_str;
      if (c == ',' && !in_str) {
        parts.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!strip(cur).empty()) parts.push_back(cur);
    std::vector<double> nums;
    std::vector<std::string> strs;
    bool all_num = true;
    for (const auto& p : parts) {
      const TomlValue sv = parse_scalar(p);
      if (std::holds_alternative<std::string>(sv.v)) {
        all_num = false;
        strs.push_back(std::get<std::string>(sv.v));
      } else {
        nums.push_back(sv.as_double());
      }
    }
    if (all_num) return {nums};
    if (strs.size() == parts.size()) return {strs};
    throw std::runtime_error("toml: mixed array");
  }
  return parse_scalar(t);
}

}  // namespace

TomlTable parse_toml(const std::string& text) {
  TomlTable table;
  std::string section;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = strip(strip_comment(line));
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw std::runtime_error("toml: bad section at line " + std::to_string(lineno));
      section = strip(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("toml: missing '=' at line " + std::to_string(lineno));
    const std::string key = strip(t.substr(0, eq));
    table[section][key] = parse_value(t.substr(eq + 1));
  }
  return table;
}

TomlTable parse_toml_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_toml(ss.str());
}

// ---------------------------------------------------------------------------
// ExperimentConfig
// ---------------------------------------------------------------------------

double ExperimentConfig::omega_b() const { return kPi * f_s / (double)osr; }

ExperimentConfig ExperimentConfig::from_toml(const TomlTable& t) {
  ExperimentConfig c;
  auto get = [&t](const std::string& sec, const std::string& key) -> const TomlValue* {
    auto s = t.find(sec);
    if (s == t.end()) return nullptr;
    auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  };
  if (auto* v = get("design", "order_n")) c.order_n = (int)v->as_int();
  if (auto* v = get("design", "osr")) c.osr = (int)v->as_int();
  if (auto* v = get("design", "f_s")) c.f_s = v->as_double();
  if (auto* v = get("design", "omega_b")) c.f_s = v->as_double() * c.osr / kPi;
  if (auto* v = get("design", "notch_fractions")) c.notch_fractions = v->as_double_array();
  if (auto* v = get("design", "include_lowpass")) c.include_lowpass = v->as_bool();
  if (auto* v = get("input", "full_scale")) c.full_scale = v->as_double();
  if (auto* v = get("input", "amplitude")) c.amplitude = v->as_double();
  if (auto* v = get("estimator", "kind")) c.estimator = v->as_string();
  if (auto* v = get("estimator", "taps")) c.taps = (int)v->as_int();
  if (auto* v = get("run", "periods")) c.periods = v->as_int();
  if (auto* v = get("run", "nfft")) c.nfft = (int)v->as_int();
  if (auto* v = get("run", "seed")) c.seed = (std::uint64_t)v->as_int();
  if (auto* v = get("run", "threads")) c.threads = (int)v->as_int();
  if (auto* v = get("run", "xi")) c.xi = v->as_double();
  if (auto* v = get("montecarlo", "trials")) c.mc_trials = (int)v->as_int();
  if (auto* v = get("montecarlo", "relative_bound")) c.mc_relative_bound = v->as_double();
  if (auto* v = get("montecarlo", "notch_fraction")) c.mc_notch_fraction = v->as_double();
  if (auto* v = get("montecarlo", "systems")) c.mc_systems = v->as_string_array();
  if (auto* v = get("gbwp", "k_dc_rel")) c.gbwp_k_dc_rel = v->as_double_array();
  if (auto* v = get("gbwp", "gbwp_rel")) c.gbwp_rel = v->as_double_array();
  if (auto* v = get("calibrate", "notch_fraction")) c.cal_notch_fraction = v->as_double();
  if (auto* v = get("calibrate", "taps")) c.cal_taps = (int)v->as_int();
  if (auto* v = get("calibrate", "train_periods")) c.cal_train_periods = v->as_int();
  if (auto* v = get("calibrate", "test_periods")) c.cal_test_periods = v->as_int();
  if (auto* v = get("calibrate", "step")) c.cal_step = v->as_double();
  if (auto* v = get("calibrate", "iterations")) c.cal_iterations = v->as_int();
  if (auto* v = get("calibrate", "reference_ratio")) c.cal_reference_ratio = v->as_double();
  if (auto* v = get("calibrate", "input_amplitude")) c.cal_input_amplitude = v->as_double();

  if (c.notch_fractions.empty())
    for (int k = 0; k < c.osr; ++k)
      c.notch_fractions.push_back((2.0 * k + 1.0) / (4.0 * c.osr));
  for (double fr : c.notch_fractions)
    if (!(fr > 0.0) || fr >= 0.5)
      throw std::runtime_error("config: notch fraction must be in (0, 0.5)");
  if (c.estimator != "wiener" && c.estimator != "calibrated")
    throw std::runtime_error("config: estimator must be wiener|calibrated");
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig cfg = from_toml(parse_toml(ss.str()));
  cfg.config_path = path;
  cfg.config_raw = ss.str();
  return cfg;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::string& config_path, const std::string& config_bytes,
                    const ExperimentConfig& cfg, const std::vector<std::string>& outputs) {
  nlohmann::json j;
  j["command"] = command;
  j["config"] = config_path;
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx", (unsigned long long)fnv1a(config_bytes));
  j["config_hash"] = hash;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["version"] = kVersion;
  j["outputs"] = outputs;
  std::ofstream out(out_dir + "/manifest.json");
  out << j.dump(2) << '\n';
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 0) threads = (int)std::thread::hardware_concurrency();
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors((std::size_t)threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[(std::size_t)t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Pipelines
// ---------------------------------------------------------------------------

NominalRun nominal_quadrature_run(const ExperimentConfig& cfg, double f_n_hz) {
  const double omega_b = cfg.omega_b();
  auto lp = leapfrog_lowpass(cfg.order_n, cfg.osr, omega_b);
  auto fe = quadrature_extend(lp, k2Pi * f_n_hz);
  auto bank = wiener_filter_bank(fe, omega_b, cfg.taps, cfg.osr);

  const double f_bp = f_n_hz - omega_b / (8.0 * kPi);
  const auto snapped = snap_to_bin(f_bp, cfg.f_s, cfg.nfft);

  InputSpec in;
  in.kind = InputSpec::Kind::quadrature_tone;
  in.amplitude = cfg.amplitude * cfg.full_scale;
  in.frequency = snapped.freq_hz;

  SimOptions opt;
  opt.full_scale = cfg.full_scale;
  opt.seed = cfg.seed;
  const auto sim = simulate(fe, in, cfg.periods, opt);

  NominalRun run;
  run.f_n_hz = f_n_hz;
  run.f_sig_hz = snapped.freq_hz;
  run.stable = sim.stable;
  if (!sim.stable) return run;

  const auto est = estimate(sim.trace, bank, 1);
  run.spectrum = psd(est.complex_sequence(), cfg.nfft, cfg.full_scale, cfg.f_s);
  const double half = omega_b / k2Pi;
  run.snr_db = snr_in_band(run.spectrum, f_n_hz - half, f_n_hz + half, snapped.freq_hz);
  return run;
}

NominalRun nominal_lowpass_run(const ExperimentConfig& cfg) {
  const double omega_b = cfg.omega_b();
  auto fe = leapfrog_lowpass(cfg.order_n, cfg.osr, omega_b);
  auto bank = wiener_filter_bank(fe, omega_b, cfg.taps, cfg.osr);

  const auto snapped = snap_to_bin(omega_b / (4.0 * kPi), cfg.f_s, cfg.nfft);
  InputSpec in;
  in.kind = InputSpec::Kind::lowpass_tone;
  in.amplitude = cfg.amplitude * cfg.full_scale;
  in.frequency = snapped.freq_hz;

  SimOptions opt;
  opt.full_scale = cfg.full_scale;
  opt.seed = cfg.seed;
  const auto sim = simulate(fe, in, cfg.periods, opt);

  NominalRun run;
  run.f_n_hz = 0.0;
  run.f_sig_hz = snapped.freq_hz;
  run.stable = sim.stable;
  if (!sim.stable) return run;

  const auto est = estimate(sim.trace, bank, 1);
  run.spectrum = psd(est.real_sequence(), cfg.nfft, cfg.full_scale, cfg.f_s);
  run.snr_db = snr_in_band(run.spectrum, 0.0, omega_b / k2Pi, snapped.freq_hz);
  return run;
}

RunOutcome run_nominal(const ExperimentConfig& cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<NominalRun> runs((std::size_t)cfg.notch_fractions.size() + (cfg.include_lowpass ? 1 : 0));
  parallel_for((int)runs.size(), cfg.threads, [&](int i) {
    if (i < (int)cfg.notch_fractions.size())
      runs[(std::size_t)i] = nominal_quadrature_run(cfg, cfg.f_n(cfg.notch_fractions[(std::size_t)i]));
    else
      runs[(std::size_t)i] = nominal_lowpass_run(cfg);
  });

  std::ofstream psd_csv(out_dir + "/psd.csv");
  psd_csv << "series,f_hz,psd_dbfs\n";
  std::ofstream snr_csv(out_dir + "/snr.csv");
  snr_csv << "series,f_n_hz,f_sig_hz,snr_db,stable\n";
  bool all_stable = true;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    const std::string series = r.f_n_hz == 0.0 ? "lowpass" : ("notch" + std::to_string(i));
    for (std::size_t j = 0; j < r.spectrum.freqs_hz.size(); ++j)
      psd_csv << series << ',' << fmt(r.spectrum.freqs_hz[j]) << ',' << fmt(r.spectrum.psd_dbfs[j])
              << '\n';
    snr_csv << series << ',' << fmt(r.f_n_hz) << ',' << fmt(r.f_sig_hz) << ',' << fmt(r.snr_db)
            << ',' << (r.stable ? 1 : 0) << '\n';
    all_stable = all_stable && r.stable;
  }
  write_manifest(out_dir, "nominal", cfg.config_path, cfg.config_raw, cfg, {"psd.csv", "snr.csv"});
  if (!all_stable) return {false, "instability in nominal run"};
  return {};
}

McTrial montecarlo_trial(const ExperimentConfig& cfg, bool quadrature, int trial) {
  const double omega_b = cfg.omega_b();
  const double f_n = cfg.f_n(cfg.mc_notch_fraction);
  auto lp = leapfrog_lowpass(cfg.order_n, cfg.osr, omega_b);
  Frontend fe = quadrature ? quadrature_extend(lp, k2Pi * f_n) : lp;

  PerturbationSpec ps;
  ps.relative_bound = cfg.mc_relative_bound;
  ps.targets = PerturbationSpec::all_targets();
  ps.seed = cfg.seed ^ (std::uint64_t)(trial + 1);
  const Frontend pert = perturb(fe, ps);

  // "Perfectly calibrated": the bank comes from the true perturbed model.
  auto bank = wiener_filter_bank(pert, omega_b, cfg.taps, cfg.osr);

  InputSpec in;
  SimOptions opt;
  opt.full_scale = cfg.full_scale;
  opt.seed = cfg.seed ^ (std::uint64_t)(trial + 1);
  double f_lo = 0.0, f_hi = 0.0, f_sig = 0.0;
  if (quadrature) {
    const auto snapped = snap_to_bin(f_n - omega_b / (8.0 * kPi), cfg.f_s, cfg.nfft);
    in.kind = InputSpec::Kind::quadrature_tone;
    in.frequency = snapped.freq_hz;
    f_sig = snapped.freq_hz;
    f_lo = f_n - omega_b / k2Pi;
    f_hi = f_n + omega_b / k2Pi;
  } else {
    const auto snapped = snap_to_bin(omega_b / (4.0 * kPi), cfg.f_s, cfg.nfft);
    in.kind = InputSpec::Kind::lowpass_tone;
    in.frequency = snapped.freq_hz;
    f_sig = snapped.freq_hz;
    f_lo = 0.0;
    f_hi = omega_b / k2Pi;
  }
  in.amplitude = cfg.amplitude * cfg.full_scale;

  McTrial out;
  out.trial = trial;
  const auto sim = simulate(pert, in, cfg.periods, opt);
  out.stable = sim.stable;
  out.first_unstable_period = sim.first_unstable_period;
  if (!sim.stable) return out;

  const auto est = estimate(sim.trace, bank, 1);
  const Spectrum spec = quadrature ? psd(est.complex_sequence(), cfg.nfft, cfg.full_scale, cfg.f_s)
                                   : psd(est.real_sequence(), cfg.nfft, cfg.full_scale, cfg.f_s);
  out.snr_db = snr_in_band(spec, f_lo, f_hi, f_sig);
  if (quadrature)
    out.f_hat_hz = estimate_notch(pert.model, omega_b, f_n, omega_b / k2Pi).f_hat_hz;
  return out;
}

RunOutcome run_montecarlo(const ExperimentConfig& cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream snr_csv(out_dir + "/snr_hist.csv");
  snr_csv << "system,trial,snr_db,snr_delta_db,stable\n";
  std::ofstream notch_csv(out_dir + "/notch_hist.csv");
  notch_csv << "trial,f_hat_hz,notch_ratio\n";
  std::ofstream inst_csv(out_dir + "/instability.csv");
  inst_csv << "system,trial,first_unstable_period\n";

  for (const auto& system : cfg.mc_systems) {
    const bool quadrature = system == "quadrature";
    // Nominal baseline for the SNR delta.
    ExperimentConfig nom = cfg;
    nom.notch_fractions = {cfg.mc_notch_fraction};
    const NominalRun nominal =
        quadrature ? nominal_quadrature_run(nom, nom.f_n(cfg.mc_notch_fraction))
                   : nominal_lowpass_run(nom);

    std::vector<McTrial> trials((std::size_t)cfg.mc_trials);
    parallel_for(cfg.mc_trials, cfg.threads,
                 [&](int i) { trials[(std::size_t)i] = montecarlo_trial(cfg, quadrature, i); });

    const double f_n = cfg.f_n(cfg.mc_notch_fraction);
    for (const auto& t : trials) {
      snr_csv << system << ',' << t.trial << ',' << fmt(t.snr_db) << ','
              << fmt(t.stable ? t.snr_db - nominal.snr_db : 0.0) << ',' << (t.stable ? 1 : 0)
              << '\n';
      if (quadrature && t.stable)
        notch_csv << t.trial << ',' << fmt(t.f_hat_hz) << ',' << fmt(t.f_hat_hz / f_n) << '\n';
      if (!t.stable) inst_csv << system << ',' << t.trial << ',' << t.first_unstable_period << '\n';
    }
  }
  write_manifest(out_dir, "montecarlo", cfg.config_path, cfg.config_raw, cfg,
                 {"snr_hist.csv", "notch_hist.csv", "instability.csv"});
  return {};
}

std::vector<FirSpecPoint> h0_band_spec(double f_n_hz, double omega_b, double f_s) {
  const double half = omega_b / (4.0 * kPi);
  const double inf = -std::numeric_limits<double>::infinity();
  return {{f_n_hz, 0.0},
          {f_n_hz - half, -3.0},
          {f_n_hz + half, -3.0},
          {f_n_hz - 1.05 * half, -20.0},
          {f_n_hz + 1.05 * half, -20.0},
          {0.0, inf},
          {f_s / 2.0, inf}};
}

GbwpPoint gbwp_point(const ExperimentConfig& cfg, double k_dc_rel, double gbwp_rel) {
  const double omega_b = cfg.omega_b();
  const double f_n = cfg.f_n(cfg.cal_notch_fraction);
  const double k_a = k_dc_rel * (double)cfg.osr / kPi;
  const double gbwp_hz = gbwp_rel * (f_n + omega_b / (4.0 * kPi));
  const double omega_a = k2Pi * gbwp_hz / k_a;

  auto lp = leapfrog_lowpass(cfg.order_n, cfg.osr, omega_b);
  auto fe = inject_reference(quadrature_extend(lp, k2Pi * f_n), cfg.cal_reference_ratio);
  auto aug = opamp_augment(fe, k_a, omega_a);

  GbwpPoint pt;
  pt.k_dc_rel = k_dc_rel;
  pt.gbwp_rel = gbwp_rel;

  // Training trace: reference only, no input signal.
  InputSpec train_in;
  train_in.kind = InputSpec::Kind::reference_only;
  SimOptions train_opt;
  train_opt.full_scale = cfg.full_scale;
  train_opt.seed = cfg.seed * 2654435761u + 1;
  const auto train = simulate(aug, train_in, cfg.cal_train_periods, train_opt);
  if (!train.stable) {
    pt.converged = false;
    return pt;
  }

  const auto h0 = reference_filter_h0(h0_band_spec(f_n, omega_b, cfg.f_s), cfg.cal_taps, cfg.f_s);
  LmsResult lms;
  try {
    lms = lms_calibrate(train.trace, h0.taps, cfg.cal_step, cfg.cal_iterations, cfg.osr);
  } catch (const LmsDivergence&) {
    pt.converged = false;
    return pt;
  }
  pt.final_mse = lms.final_mse;

  // Testing trace: reduced input with the reference still active.
  const auto snapped = snap_to_bin(f_n + omega_b / (8.0 * kPi), cfg.f_s, cfg.nfft);
  InputSpec test_in;
  test_in.kind = InputSpec::Kind::quadrature_tone;
  test_in.amplitude = cfg.cal_input_amplitude * cfg.full_scale;
  test_in.frequency = snapped.freq_hz;
  SimOptions test_opt;
  test_opt.full_scale = cfg.full_scale;
  test_opt.seed = cfg.seed * 2654435761u + 2;
  const auto test = simulate(aug, test_in, cfg.cal_test_periods, test_opt);
  if (!test.stable) {
    pt.converged = false;
    return pt;
  }

  const auto est = estimate(test.trace, lms.bank, 1);
  const auto spec = psd(est.complex_sequence(), cfg.nfft, cfg.full_scale, cfg.f_s);
  const double half = omega_b / (4.0 * kPi);  // h0 passband
  pt.snr_db = snr_in_band(spec, f_n - half, f_n + half, snapped.freq_hz);
  return pt;
}

RunOutcome run_gbwp_sweep(const ExperimentConfig& cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  struct Job {
    double k_dc, g;
  };
  std::vector<Job> jobs;
  for (double k : cfg.gbwp_k_dc_rel)
    for (double g : cfg.gbwp_rel) jobs.push_back({k, g});
  std::vector<GbwpPoint> pts(jobs.size());
  parallel_for((int)jobs.size(), cfg.threads,
               [&](int i) { pts[(std::size_t)i] = gbwp_point(cfg, jobs[(std::size_t)i].k_dc, jobs[(std::size_t)i].g); });

  std::ofstream csv(out_dir + "/snr_vs_gbwp.csv");
  csv << "k_dc_rel,gbwp_rel,snr_db,converged,final_mse\n";
  for (const auto& p : pts)
    csv << fmt(p.k_dc_rel) << ',' << fmt(p.gbwp_rel) << ',' << fmt(p.snr_db) << ','
        << (p.converged ? 1 : 0) << ',' << fmt(p.final_mse) << '\n';
  write_manifest(out_dir, "gbwp-sweep", cfg.config_path, cfg.config_raw, cfg, {"snr_vs_gbwp.csv"});
  return {};
}

RunOutcome run_calibrate(const ExperimentConfig& cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const double omega_b = cfg.omega_b();
  const double f_n = cfg.f_n(cfg.cal_notch_fraction);
  auto lp = leapfrog_lowpass(cfg.order_n, cfg.osr, omega_b);
  auto fe = inject_reference(quadrature_extend(lp, k2Pi * f_n), cfg.cal_reference_ratio);

  InputSpec train_in;
  train_in.kind = InputSpec::Kind::reference_only;
  SimOptions opt;
  opt.full_scale = cfg.full_scale;
  opt.seed = cfg.seed;
  const auto train = simulate(fe, train_in, cfg.cal_train_periods, opt);
  if (!train.stable) return {false, "training run unstable"};

  const auto h0 = reference_filter_h0(h0_band_spec(f_n, omega_b, cfg.f_s), cfg.cal_taps, cfg.f_s);
  const auto lms = lms_calibrate(train.trace, h0.taps, cfg.cal_step, cfg.cal_iterations, cfg.osr);
  train.trace.save(out_dir + "/training.trace");
  lms.bank.save(out_dir + "/calibrated.bank");

  nlohmann::json rep;
  rep["final_mse"] = lms.final_mse;
  rep["iterations"] = lms.iterations_run;
  rep["taps"] = cfg.cal_taps;
  std::ofstream(out_dir + "/calibration.json") << rep.dump(2) << '\n';
  write_manifest(out_dir, "calibrate", cfg.config_path, cfg.config_raw, cfg,
                 {"training.trace", "calibrated.bank", "calibration.json"});
  return {};
}

}  // namespace qlf
