#include "qlf/estimator.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include <json.hpp>

namespace qlf {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double k2Pi = 2.0 * std::numbers::pi;
}

void FirFilterBank::init(int outputs, int channels, int len, int lag_, double t_s_, int osr_) {
  n_outputs = outputs;
  n_channels = channels;
  length = len;
  lag = lag_;
  t_s = t_s_;
  osr = osr_;
  taps.assign(outputs, RowMat::Zero(channels, len));
}

void FirFilterBank::save(const std::string& path) const {
  nlohmann::json header;
  header["version"] = 1;
  header["length"] = length;
  header["lag"] = lag;
  header["n_outputs"] = n_outputs;
  header["n_channels"] = n_channels;
  header["ref_channels"] = ref_channels;
  header["t_s"] = t_s;
  header["osr"] = osr;
  header["byte_order"] = "little-endian";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("FirFilterBank::save: cannot open " + path);
  out << header.dump() << '\n';
  for (const auto& m : taps)
    for (int ch = 0; ch < n_channels; ++ch)
      for (int t = 0; t < length; ++t) {
        const double v = m(ch, t);
        out.write(reinterpret_cast<const char*>(&v), sizeof(double));
      }
}

FirFilterBank FirFilterBank::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("FirFilterBank::load: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("FirFilterBank::load: missing header");
  const auto header = nlohmann::json::parse(line);
  FirFilterBank b;
  b.init(header.at("n_outputs"), header.at("n_channels"), header.at("length"), header.at("lag"),
         header.at("t_s"), header.at("osr"));
  b.ref_channels = header.at("ref_channels");
  for (auto& m : b.taps)
    for (int ch = 0; ch < b.n_channels; ++ch)
      for (int t = 0; t < b.length; ++t) {
        double v = 0.0;
        in.read(reinterpret_cast<char*>(&v), sizeof(double));
        if (!in) throw std::runtime_error("FirFilterBank::load: truncated payload");
        m(ch, t) = v;
      }
  return b;
}

std::vector<double> FirFilterBank::response_db(int output, int channel,
                                               const std::vector<double>& freqs) const {
  std::vector<double> row(length);
  for (int t = 0; t < length; ++t) row[t] = taps[output](channel, t);
  return fir_response_db(row, freqs, 1.0 / t_s);
}

WienerShaper make_wiener_shaper(const StateSpaceModel& model, double omega_b) {
  WienerShaper w;
  w.model = model;
  w.omega_b = omega_b;
  double edge = model.quadrature ? model.omega_n + omega_b : omega_b;
  for (int attempt = 0;; ++attempt) {
    try {
      const auto tp = transfer_at(model, edge);
      Eigen::JacobiSVD<CMat> svd(tp.from_u);
      w.eta = svd.singularValues()(0);
      return w;
    } catch (const PoleError&) {
      if (attempt > 2) throw;
      edge += 1e-9 * omega_b;
    }
  }
}

// (G^H G + eta^2 I)^-1 G^H via the SVD: sigma/(sigma^2 + eta^2) per singular
// value. The gram form loses to cancellation once |G| exceeds ~1e8 near the
// undamped poles; the SVD form is exact there.
CMat wiener_inverse(const CMat& g, double eta) {
  Eigen::JacobiSVD<CMat> svd(g, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::VectorXd sv = svd.singularValues();
  Eigen::VectorXd gains(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) gains(i) = sv(i) / (sv(i) * sv(i) + eta * eta);
  CMat mid = CMat::Zero(g.cols(), g.rows());
  mid.diagonal().head(gains.size()) = gains.cast<cplx>();
  return svd.matrixV() * mid * svd.matrixU().adjoint();
}

CMat WienerShaper::eval(double omega) const {
  for (int attempt = 0;; ++attempt) {
    try {
      const auto tp = transfer_at(model, omega);
      return wiener_inverse(tp.from_u, eta);
    } catch (const PoleError&) {
      // W is continuous through the undamped poles (it tends to 0 there).
      if (attempt > 2) throw;
      omega += 1e-9 * omega_b;
    }
  }
}

cplx WienerShaper::eval_scalar(double omega) const {
  for (int attempt = 0;; ++attempt) {
    try {
      const cplx g = analytic_transfer(model, omega);
      return std::conj(g) / (std::norm(g) + eta * eta);
    } catch (const PoleError&) {
      if (attempt > 2) throw;
      omega += 1e-9 * omega_b;
    }
  }
}

namespace {

// Unit NRZ hold: theta(t) = 1 on (0, T_s]; Theta(i w) = (1 - e^{-i w T_s})/(i w),
// delayed by tau_dc.
cplx nrz_transform(double omega, double t_s, double tau_dc) {
  cplx base;
  if (std::abs(omega * t_s) < 1e-9) {
    base = cplx(t_s, 0.0);
  } else {
    const cplx iw(0.0, omega);
    base = (1.0 - std::exp(-iw * t_s)) / iw;
  }
  if (tau_dc != 0.0) base *= std::exp(cplx(0.0, -omega * tau_dc));
  return base;
}

}  // namespace

FirFilterBank wiener_filter_bank(const Frontend& fe, double omega_b, int taps, int osr,
                                 const WienerBankOptions& opts) {
  if (taps < 8 || (taps & (taps - 1)) != 0)
    throw std::invalid_argument("wiener_filter_bank: taps must be a power of two >= 8");
  const StateSpaceModel& model = fe.model;
  const int outs = (int)model.output_rows.size();
  const int m_s = model.m_s();
  const double t_s = fe.design.t_s;
  const double f_s = fe.design.f_s;

  int nfft = opts.design_grid > 0 ? opts.design_grid : std::max(4 * taps, 4096);
  if ((nfft & (nfft - 1)) != 0) throw std::invalid_argument("wiener_filter_bank: grid not a power of two");

  const auto shaper = make_wiener_shaper(model, omega_b);

  // H(e^{i Omega_j}) on the design grid, all (out, channel) entries at once.
  std::vector<CMat> h_grid((std::size_t)nfft);
  for (int j = 0; j < nfft; ++j) {
    const double omega_base =
        (j <= nfft / 2 ? (double)j : (double)j - nfft) / (double)nfft * k2Pi / t_s;
    CMat acc = CMat::Zero(outs, m_s);
    for (int a = -opts.alias_terms; a <= opts.alias_terms; ++a) {
      double omega = omega_base + k2Pi * (double)a * f_s;
      TransferPoint tp;
      for (int attempt = 0;; ++attempt) {
        try {
          tp = transfer_at(model, omega);
          break;
        } catch (const PoleError&) {
          if (attempt > 2) throw;
          omega += 1e-9 * omega_b;  // sidestep undamped poles on the grid
        }
      }
      const CMat w = wiener_inverse(tp.from_u, shaper.eta);
      acc += w * tp.from_ctrl * nrz_transform(omega, t_s, fe.tau_dc);
    }
    h_grid[(std::size_t)j] = -acc / t_s;
  }

  FirFilterBank bank;
  bank.init(outs, m_s, taps, taps / 2, t_s, osr);

  std::vector<cplx> series((std::size_t)nfft);
  for (int o = 0; o < outs; ++o) {
    for (int ch = 0; ch < m_s; ++ch) {
      for (int j = 0; j < nfft; ++j) series[(std::size_t)j] = h_grid[(std::size_t)j](o, ch);
      ifft(series);
      for (int t = 0; t < taps; ++t) {
        const int k = t - taps / 2;
        const int src = (k % nfft + nfft) % nfft;
        double w = 1.0;
        if (opts.window == TapWindow::hann)
          w = 0.5 * (1.0 - std::cos(k2Pi * (double)t / (double)taps));
        bank.taps[o](ch, t) = series[(std::size_t)src].real() * w;
      }
    }
  }
  return bank;
}

std::vector<cplx> EstimateResult::complex_sequence() const {
  if (outputs.rows() != 2) throw std::logic_error("complex_sequence: needs 2 output channels");
  std::vector<cplx> out((std::size_t)outputs.cols());
  for (Eigen::Index i = 0; i < outputs.cols(); ++i) out[(std::size_t)i] = {outputs(0, i), outputs(1, i)};
  return out;
}

std::vector<double> EstimateResult::real_sequence() const {
  std::vector<double> out((std::size_t)outputs.cols());
  for (Eigen::Index i = 0; i < outputs.cols(); ++i) out[(std::size_t)i] = outputs(0, i);
  return out;
}

EstimateResult estimate(const ControlTrace& trace, const FirFilterBank& bank, int decimation) {
  if (trace.channels != bank.n_channels)
    throw std::invalid_argument("estimate: trace/bank channel mismatch");
  const std::int64_t k_len = trace.num_periods;
  const int lag = bank.lag;
  if (k_len < 2 * lag) throw std::invalid_argument("estimate: trace shorter than 2*lag");
  const int dec = decimation == 0 ? bank.osr : decimation;

  // Full linear convolution per channel via FFT, then sum across channels.
  const std::int64_t first = lag, last = k_len - lag;  // interior [first, last)
  std::vector<std::vector<double>> full((std::size_t)bank.n_outputs,
                                        std::vector<double>((std::size_t)(last - first), 0.0));
  std::vector<double> s((std::size_t)k_len);
  std::vector<double> h((std::size_t)bank.length);
  for (int ch = 0; ch < bank.n_channels; ++ch) {
    for (std::int64_t k = 0; k < k_len; ++k) s[(std::size_t)k] = trace.get(k, ch);
    for (int o = 0; o < bank.n_outputs; ++o) {
      bool all_zero = true;
      for (int t = 0; t < bank.length; ++t) {
        h[(std::size_t)t] = bank.taps[o](ch, t);
        all_zero = all_zero && h[(std::size_t)t] == 0.0;
      }
      if (all_zero) continue;
      const auto conv = fft_convolve(s, h);  // conv[j] = sum_t h[t] s[j - t]
      for (std::int64_t k = first; k < last; ++k)
        full[(std::size_t)o][(std::size_t)(k - first)] += conv[(std::size_t)(k + lag)];
    }
  }

  EstimateResult res;
  res.decimation = dec;
  res.rate = 1.0 / (trace.t_s * dec);
  // Decimation phase is tied to the absolute trace index.
  std::int64_t k0 = first;
  while (k0 % dec != 0) ++k0;
  res.k0 = k0;
  const std::int64_t samples = (last - k0 + dec - 1) / dec;
  res.outputs.resize(bank.n_outputs, samples);
  for (int o = 0; o < bank.n_outputs; ++o)
    for (std::int64_t i = 0; i < samples; ++i)
      res.outputs(o, i) = full[(std::size_t)o][(std::size_t)(k0 + i * dec - first)];
  return res;
}

SpectralShapes stf_ntf(const StateSpaceModel& model, double omega_b,
                       const std::vector<double>& freqs_hz) {
  const auto shaper = make_wiener_shaper(model, omega_b);
  SpectralShapes shapes;
  shapes.freqs_hz = freqs_hz;
  shapes.stf_db.resize(freqs_hz.size());
  shapes.ntf_db.resize(freqs_hz.size());
  const double eta2 = shaper.eta * shaper.eta;
  for (std::size_t i = 0; i < freqs_hz.size(); ++i) {
    const double omega = k2Pi * freqs_hz[i];
    const double g = std::abs(analytic_transfer(model, omega));
    const double denom = g * g + eta2;
    shapes.stf_db[i] = 20.0 * std::log10(std::max(g * g / denom, 1e-300));
    shapes.ntf_db[i] = 20.0 * std::log10(std::max(g / denom, 1e-300));
  }
  return shapes;
}

ReferenceFilter reference_filter_h0(const std::vector<FirSpecPoint>& spec, int length,
                                    double sample_rate) {
  ReferenceFilter rf;
  rf.spec = spec;
  rf.taps = design_fir(spec, length, sample_rate);
  return rf;
}

LmsResult lms_calibrate(const ControlTrace& trace, const std::vector<double>& h0, double step,
                        std::int64_t iterations, int osr, const LmsOptions& opts) {
  if (trace.ref_channels < 1)
    throw std::invalid_argument("lms_calibrate: trace has no reference channel");
  const int length = (int)h0.size();
  const int lag = length / 2;
  const std::int64_t k_len = trace.num_periods;
  if (k_len < 2 * lag + 1) throw std::invalid_argument("lms_calibrate: trace too short");

  const int n_ref = trace.ref_channels;
  const int n_ch = trace.channels;
  const int n_out = n_ref;  // one estimate channel per reference channel

  LmsResult res;
  res.bank.init(n_out, n_ch, length, lag, trace.t_s, osr);
  res.bank.ref_channels = n_ref;
  // h0 (and its matched quadrature copy) on the diagonal reference slots.
  for (int o = 0; o < n_out; ++o)
    for (int t = 0; t < length; ++t) res.bank.taps[o](o, t) = h0[(std::size_t)t];

  // Unpack decisions once; column-major [channel][k].
  std::vector<std::vector<signed char>> s((std::size_t)n_ch);
  for (int ch = 0; ch < n_ch; ++ch) {
    s[(std::size_t)ch].resize((std::size_t)k_len);
    for (std::int64_t k = 0; k < k_len; ++k)
      s[(std::size_t)ch][(std::size_t)k] = (signed char)trace.get(k, ch);
  }

  const std::int64_t first = lag, last = k_len - lag;
  std::vector<double> e((std::size_t)n_out);

  auto compute_error = [&](std::int64_t k) {
    for (int o = 0; o < n_out; ++o) {
      double acc = 0.0;
      for (int ch = 0; ch < n_ch; ++ch) {
        const double* taps_row = res.bank.taps[o].row(ch).data();
        const signed char* sc = s[(std::size_t)ch].data() + (k + lag);
        if (opts.multiplication_free) {
          for (int t = 0; t < length; ++t) {
            if (sc[-t] > 0)
              acc += taps_row[t];
            else
              acc -= taps_row[t];
          }
        } else {
          for (int t = 0; t < length; ++t) acc += taps_row[t] * (double)sc[-t];
        }
      }
      e[(std::size_t)o] = acc;
    }
  };

  if (iterations == 0) {
    // MSE of the untrained error (the h0 * s0 branch alone).
    double acc = 0.0;
    const std::int64_t probe = std::min<std::int64_t>(last - first, 1 << 14);
    for (std::int64_t i = 0; i < probe; ++i) {
      compute_error(first + i);
      for (int o = 0; o < n_out; ++o) acc += e[(std::size_t)o] * e[(std::size_t)o];
    }
    res.final_mse = acc / (double)(probe * n_out);
    return res;
  }

  double window_acc = 0.0;
  std::int64_t window_count = 0;
  double prev_window_mse = -1.0;
  std::int64_t k = first;
  for (std::int64_t it = 0; it < iterations; ++it) {
    compute_error(k);
    double e2 = 0.0;
    for (int o = 0; o < n_out; ++o) e2 += e[(std::size_t)o] * e[(std::size_t)o];
    window_acc += e2;
    if (++window_count == opts.mse_window) {
      const double mse = window_acc / (double)(opts.mse_window * n_out);
      if (prev_window_mse >= 0.0 && mse > opts.divergence_factor * prev_window_mse)
        throw LmsDivergence(it, mse);
      prev_window_mse = mse;
      res.final_mse = mse;
      window_acc = 0.0;
      window_count = 0;
    }

    for (int o = 0; o < n_out; ++o) {
      const double mu_e = step * e[(std::size_t)o];
      for (int ch = n_ref; ch < n_ch; ++ch) {
        double* taps_row = res.bank.taps[o].row(ch).data();
        const signed char* sc = s[(std::size_t)ch].data() + (k + lag);
        if (opts.multiplication_free) {
          for (int t = 0; t < length; ++t) {
            if (sc[-t] > 0)
              taps_row[t] -= mu_e;
            else
              taps_row[t] += mu_e;
          }
        } else {
          for (int t = 0; t < length; ++t) taps_row[t] -= mu_e * (double)sc[-t];
        }
      }
    }

    if (++k >= last) k = first;  // cycle over the training trace
  }
  res.iterations_run = iterations;
  if (window_count > 0) res.final_mse = window_acc / (double)(window_count * n_out);
  return res;
}

}  // namespace qlf
