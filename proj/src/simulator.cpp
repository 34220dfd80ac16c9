#include "qlf/simulator.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace qlf {

namespace {
constexpr double kPi = std::numbers::pi;
}

void ControlTrace::save(const std::string& path) const {
  nlohmann::json header;
  header["version"] = 1;
  header["num_periods"] = num_periods;
  header["channels"] = channels;
  header["ref_channels"] = ref_channels;
  header["t_s"] = t_s;
  header["seed"] = seed;
  header["labels"] = labels;
  header["byte_order"] = "little-endian";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("ControlTrace::save: cannot open " + path);
  out << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(bits.data()), (std::streamsize)bits.size());
}

ControlTrace ControlTrace::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("ControlTrace::load: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("ControlTrace::load: missing header");
  const auto header = nlohmann::json::parse(line);
  ControlTrace t;
  t.num_periods = header.at("num_periods");
  t.channels = header.at("channels");
  t.ref_channels = header.at("ref_channels");
  t.t_s = header.at("t_s");
  t.seed = header.at("seed");
  t.labels = header.at("labels").get<std::vector<std::string>>();
  t.bits.resize(((std::uint64_t)t.num_periods * t.channels + 7) / 8);
  in.read(reinterpret_cast<char*>(t.bits.data()), (std::streamsize)t.bits.size());
  if ((std::size_t)in.gcount() != t.bits.size())
    throw std::runtime_error("ControlTrace::load: truncated payload");
  return t;
}

Frontend inject_reference(const Frontend& fe, double amplitude_ratio) {
  if (!(amplitude_ratio > 0.0) || amplitude_ratio > 1.0)
    throw std::invalid_argument("inject_reference: amplitude_ratio must be in (0, 1]");
  Frontend out = fe;
  const int n = fe.model.n();
  if (fe.model.quadrature) {
    const double gain = amplitude_ratio * fe.qparams->kappa_phi;
    out.gamma_ref = Mat::Zero(n, 2);
    out.gamma_ref(0, 0) = gain;
    out.gamma_ref(n / 2, 1) = gain;
    out.ref_channels = 2;
  } else {
    const double gain = amplitude_ratio * std::abs(fe.design.kappa);
    out.gamma_ref = Mat::Zero(n, 1);
    out.gamma_ref(0, 0) = gain;
    out.ref_channels = 1;
  }
  return out;
}

SimResult simulate(const Frontend& fe, const InputSpec& input, std::int64_t num_periods,
                   const SimOptions& options) {
  const StateSpaceModel& model = fe.model;
  const int n = model.n();
  const int m_s = model.m_s();
  if (num_periods < 1) throw std::invalid_argument("simulate: num_periods must be >= 1");
  if (fe.obs.rows() != m_s || fe.obs.cols() != n)
    throw std::invalid_argument("simulate: obs/control dimension mismatch");
  // Clock-rate contract f_s = 2 beta.
  if (fe.qparams) {
    const double rel = std::abs(fe.qparams->f_s - 2.0 * fe.design.beta) / fe.qparams->f_s;
    if (rel > 1e-12) throw std::invalid_argument("simulate: params violate f_s = 2*beta");
  }
  const double t_s = fe.design.t_s;
  const double tau_dc = fe.tau_dc;
  if (tau_dc < 0.0 || tau_dc >= t_s) throw std::invalid_argument("simulate: tau_dc out of [0, t_s)");
  if (options.substeps > 1 && tau_dc != 0.0)
    throw std::invalid_argument("simulate: substeps require tau_dc == 0");

  const bool has_tone = (input.kind == InputSpec::Kind::lowpass_tone ||
                         input.kind == InputSpec::Kind::quadrature_tone) &&
                        input.amplitude != 0.0;
  if (input.kind == InputSpec::Kind::quadrature_tone && !model.quadrature)
    throw std::invalid_argument("simulate: quadrature_tone needs a quadrature model");

  const int n_aug = n + (has_tone ? 2 : 0);
  Mat a_aug = Mat::Zero(n_aug, n_aug);
  a_aug.topLeftCorner(n, n) = model.a;
  if (has_tone) {
    const double w = 2.0 * kPi * input.frequency;
    a_aug(n, n + 1) = -w;
    a_aug(n + 1, n) = w;
    if (input.kind == InputSpec::Kind::lowpass_tone) {
      a_aug.block(0, n, n, 1) = model.b.col(0);
    } else {
      a_aug.block(0, n, n, 2) = model.b;
    }
  }

  const int n_ref = fe.ref_channels;
  Mat gamma_all = Mat::Zero(n_aug, n_ref + m_s);
  if (n_ref > 0) gamma_all.topLeftCorner(n, n_ref) = fe.gamma_ref;
  gamma_all.block(0, n_ref, n, m_s) = model.gamma_ctrl;

  // Precompute exact hold blocks.
  struct Block {
    Mat phi;
    Mat gamma;
  };
  std::vector<Block> period_blocks;
  if (tau_dc > 0.0) {
    auto d1 = discretize(a_aug, gamma_all, tau_dc);
    auto d2 = discretize(a_aug, gamma_all, t_s - tau_dc);
    period_blocks.push_back({d1.phi, d1.gamma});
    period_blocks.push_back({d2.phi, d2.gamma});
  } else {
    auto d = discretize(a_aug, gamma_all, t_s / options.substeps);
    period_blocks.push_back({d.phi, d.gamma});
  }

  SimResult res;
  const int channels = n_ref + m_s;
  res.trace.resize(num_periods, channels);
  res.trace.ref_channels = n_ref;
  res.trace.t_s = t_s;
  res.trace.seed = options.seed;
  for (int r = 0; r < n_ref; ++r)
    res.trace.labels.push_back(n_ref == 2 ? (r == 0 ? "s0" : "sbar0") : "s0");
  for (const auto& l : model.channel_labels) res.trace.labels.push_back(l);

  std::vector<int> rec_rows = options.record_rows;
  if (options.record_states && rec_rows.empty())
    for (int i = 0; i < n; ++i) rec_rows.push_back(i);
  std::int64_t rec_idx = 0;
  if (options.record_states) {
    res.states.rows = rec_rows;
    res.states.substeps = options.substeps;
    res.states.dt = t_s / options.substeps;
    res.states.data.resize((Eigen::Index)rec_rows.size(),
                           num_periods * (std::int64_t)options.substeps + 1);
  }
  auto record = [&](const Vec& x) {
    if (!options.record_states) return;
    for (std::size_t r = 0; r < rec_rows.size(); ++r)
      res.states.data((Eigen::Index)r, rec_idx) = x(rec_rows[r]);
    ++rec_idx;
  };

  const double bound =
      options.blowup_bound > 0.0 ? options.blowup_bound : 1e3 * options.full_scale;
  std::mt19937_64 ref_rng(options.seed);

  Vec x = Vec::Zero(n_aug);
  if (options.initial_state.size() > 0) {
    if (options.initial_state.size() != n)
      throw std::invalid_argument("simulate: initial_state size mismatch");
    x.head(n) = options.initial_state;
  }
  if (has_tone) {
    x(n) = input.amplitude * std::cos(input.phase);
    x(n + 1) = input.amplitude * std::sin(input.phase);
  }
  Vec decisions_prev = Vec::Zero(channels);  // DAC silent before the first decision
  Vec decisions = Vec::Zero(channels);
  record(x);

  for (std::int64_t k = 0; k < num_periods; ++k) {
    for (int r = 0; r < n_ref; ++r) decisions(r) = (ref_rng() >> 63) ? 1.0 : -1.0;
    for (int m = 0; m < m_s; ++m) {
      const double o = fe.obs.row(m).dot(x.head(n));
      decisions(n_ref + m) = o < 0.0 ? -1.0 : 1.0;
    }
    for (int m = 0; m < channels; ++m) res.trace.set(k, m, decisions(m) > 0.0 ? 1 : -1);

    if (tau_dc > 0.0) {
      x = period_blocks[0].phi * x + period_blocks[0].gamma * decisions_prev;
      x = period_blocks[1].phi * x + period_blocks[1].gamma * decisions;
    } else {
      for (int j = 0; j < options.substeps; ++j) {
        x = period_blocks[0].phi * x + period_blocks[0].gamma * decisions;
        if (j + 1 < options.substeps) record(x);
      }
    }
    record(x);
    decisions_prev = decisions;

    const double amax = x.head(n).cwiseAbs().maxCoeff();
    res.max_abs_state = std::max(res.max_abs_state, amax);
    if (amax > bound) {
      res.stable = false;
      res.first_unstable_period = k;
      if (options.record_states)
        res.states.data = res.states.data.leftCols(rec_idx).eval();
      res.trace.num_periods = k + 1;
      res.trace.bits.resize(((std::uint64_t)(k + 1) * channels + 7) / 8);
      break;
    }
  }
  return res;
}

std::vector<double> max_state_norm(const StateTrace& trace, bool quadrature) {
  if (trace.data.cols() == 0) throw std::invalid_argument("max_state_norm: empty trace");
  const int rows = (int)trace.data.rows();
  std::vector<double> out;
  if (quadrature) {
    const int pairs = rows / 2;
    for (int p = 0; p < pairs; ++p) {
      double best = 0.0;
      for (Eigen::Index c = 0; c < trace.data.cols(); ++c)
        best = std::max(best, std::hypot(trace.data(p, c), trace.data(pairs + p, c)));
      out.push_back(best);
    }
  } else {
    for (int r = 0; r < rows; ++r) out.push_back(trace.data.row(r).cwiseAbs().maxCoeff());
  }
  return out;
}

}  // namespace qlf
