#include "qlf/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "qlf/estimator.hpp"

namespace qlf {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double k2Pi = 2.0 * std::numbers::pi;

std::vector<double> hann_window(int n) {
  std::vector<double> w((std::size_t)n);
  for (int i = 0; i < n; ++i) w[(std::size_t)i] = 0.5 * (1.0 - std::cos(k2Pi * i / n));
  return w;
}

double to_db(double p) { return 10.0 * std::log10(std::max(p, 1e-300)); }

Spectrum welch(const std::vector<cplx>& x, int nfft, double full_scale, double rate,
               bool complex_input) {
  if ((nfft & (nfft - 1)) != 0 || nfft < 8) throw std::invalid_argument("psd: nfft must be a power of two");
  if ((int)x.size() < nfft) throw std::invalid_argument("psd: sequence shorter than nfft");
  const auto w = hann_window(nfft);
  double wsum = 0.0;
  for (double v : w) wsum += v;

  const int hop = nfft / 2;
  const int segments = (int)((x.size() - nfft) / hop) + 1;
  std::vector<double> acc((std::size_t)nfft, 0.0);
  std::vector<cplx> buf((std::size_t)nfft);
  for (int seg = 0; seg < segments; ++seg) {
    const std::size_t off = (std::size_t)seg * hop;
    for (int i = 0; i < nfft; ++i) buf[(std::size_t)i] = x[off + i] * w[(std::size_t)i];
    fft(buf);
    for (int i = 0; i < nfft; ++i) acc[(std::size_t)i] += std::norm(buf[(std::size_t)i]);
  }

  // Peak normalization: a full-scale bin-centered tone reads 0 dBFS.
  // Real tone A cos -> |X| = A*wsum/2; complex tone A e^{iwt} -> |X| = A*wsum.
  const double peak = complex_input ? full_scale * wsum : full_scale * wsum / 2.0;
  const double norm = 1.0 / ((double)segments * peak * peak);

  Spectrum s;
  s.nfft = nfft;
  s.full_scale = full_scale;
  s.rate = rate;
  s.complex_input = complex_input;
  s.segments = segments;
  const int bins = complex_input ? nfft : nfft / 2 + 1;
  s.freqs_hz.resize((std::size_t)bins);
  s.psd_dbfs.resize((std::size_t)bins);
  for (int i = 0; i < bins; ++i) {
    s.freqs_hz[(std::size_t)i] = (double)i * rate / nfft;
    s.psd_dbfs[(std::size_t)i] = to_db(acc[(std::size_t)i] * norm);
  }
  return s;
}

}  // namespace

Spectrum psd(const std::vector<double>& x, int nfft, double full_scale, double rate) {
  std::vector<cplx> cx(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) cx[i] = x[i];
  return welch(cx, nfft, full_scale, rate, false);
}

Spectrum psd(const std::vector<cplx>& x, int nfft, double full_scale, double rate) {
  return welch(x, nfft, full_scale, rate, true);
}

namespace {

// Grid bins covered by [f_lo, f_hi], wrapping modulo rate for complex grids.
std::vector<int> band_bins(const Spectrum& spec, double f_lo, double f_hi) {
  const int bins = (int)spec.freqs_hz.size();
  const double df = spec.rate / spec.nfft;
  std::vector<int> out;
  if (spec.complex_input) {
    const std::int64_t lo = (std::int64_t)std::ceil(f_lo / df - 1e-9);
    const std::int64_t hi = (std::int64_t)std::floor(f_hi / df + 1e-9);
    for (std::int64_t j = lo; j <= hi; ++j) out.push_back((int)(((j % bins) + bins) % bins));
  } else {
    const int lo = std::max(0, (int)std::ceil(f_lo / df - 1e-9));
    const int hi = std::min(bins - 1, (int)std::floor(f_hi / df + 1e-9));
    for (int j = lo; j <= hi; ++j) out.push_back(j);
  }
  return out;
}

}  // namespace

double snr_in_band(const Spectrum& spec, double f_lo, double f_hi, double signal_freq) {
  const double df = spec.rate / spec.nfft;
  const int bins = (int)spec.freqs_hz.size();
  int sig_bin = (int)std::llround(signal_freq / df);
  if (spec.complex_input) sig_bin = ((sig_bin % bins) + bins) % bins;
  if (sig_bin < 0 || sig_bin >= bins) throw std::invalid_argument("snr_in_band: signal outside grid");

  const auto idx = band_bins(spec, f_lo, f_hi);
  if (idx.empty()) throw std::invalid_argument("snr_in_band: empty band");
  const bool sig_in_band = std::find(idx.begin(), idx.end(), sig_bin) != idx.end();
  if (!sig_in_band) throw std::invalid_argument("snr_in_band: signal bin outside band");

  auto linear = [&spec](int j) { return std::pow(10.0, spec.psd_dbfs[(std::size_t)j] / 10.0); };
  auto is_signal = [&](int j) {
    for (int d = -1; d <= 1; ++d) {
      int sj = sig_bin + d;
      if (spec.complex_input) sj = ((sj % bins) + bins) % bins;
      if (j == sj) return true;
    }
    return false;
  };

  double signal_power = 0.0, noise_power = 0.0;
  int noise_bins = 0;
  for (int j : idx) {
    if (is_signal(j)) {
      signal_power += linear(j);
    } else {
      noise_power += linear(j);
      ++noise_bins;
    }
  }
  if (noise_bins == 0) throw std::invalid_argument("snr_in_band: empty noise set");
  return 10.0 * std::log10(signal_power / noise_power);
}

SnappedTone snap_to_bin(double freq_hz, double rate, int nfft) {
  const double df = rate / nfft;
  const double snapped = std::llround(freq_hz / df) * df;
  return {snapped, snapped - freq_hz};
}

NotchEstimate estimate_notch(const StateSpaceModel& model, double omega_b, double f_center_hz,
                             double f_half_hz, int grid_points) {
  if (!model.quadrature) throw std::invalid_argument("estimate_notch: needs a quadrature model");
  const auto shaper = make_wiener_shaper(model, omega_b);
  const double eta2 = shaper.eta * shaper.eta;
  const double sigma = omega_b / 2.0;  // damping collapses the pole comb

  double best = 0.0, worst = 0.0, best_f = f_center_hz;
  for (int i = 0; i < grid_points; ++i) {
    const double f = f_center_hz + f_half_hz * (2.0 * i / (grid_points - 1) - 1.0);
    const double g = std::abs(analytic_transfer(model, k2Pi * f, sigma));
    const double ntf = g / (g * g + eta2);
    if (i == 0 || ntf < best) {
      best = ntf;
      best_f = f;
    }
    worst = std::max(worst, ntf);
  }
  if (!(worst > best * (1.0 + 1e-9)))
    throw std::runtime_error("estimate_notch: no identifiable minimum (flat NTF)");
  return {best_f, "analytic-ntf-damped"};
}

NotchEstimate estimate_notch(const Spectrum& spec, double f_lo, double f_hi, double signal_freq,
                             int median_bins, int exclude_bins) {
  const auto idx = band_bins(spec, f_lo, f_hi);
  if ((int)idx.size() < 2 * median_bins)
    throw std::invalid_argument("estimate_notch: band too narrow for smoothing");
  const double df = spec.rate / spec.nfft;
  const int bins = (int)spec.freqs_hz.size();
  int sig_bin = (int)std::llround(signal_freq / df);
  if (spec.complex_input) sig_bin = ((sig_bin % bins) + bins) % bins;

  // Band values with the signal neighborhood dropped.
  std::vector<std::pair<int, double>> floor_vals;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const int j = idx[i];
    bool excluded = false;
    for (int d = -exclude_bins; d <= exclude_bins; ++d) {
      int sj = sig_bin + d;
      if (spec.complex_input) sj = ((sj % bins) + bins) % bins;
      if (j == sj) excluded = true;
    }
    if (!excluded) floor_vals.push_back({(int)i, spec.psd_dbfs[(std::size_t)j]});
  }

  double best = 0.0;
  int best_pos = -1;
  std::vector<double> window;
  for (std::size_t c = 0; c < floor_vals.size(); ++c) {
    window.clear();
    const int half = median_bins / 2;
    for (int d = -half; d <= half; ++d) {
      const std::int64_t p = (std::int64_t)c + d;
      if (p >= 0 && p < (std::int64_t)floor_vals.size())
        window.push_back(floor_vals[(std::size_t)p].second);
    }
    std::nth_element(window.begin(), window.begin() + window.size() / 2, window.end());
    const double med = window[window.size() / 2];
    if (best_pos < 0 || med < best) {
      best = med;
      best_pos = floor_vals[c].first;
    }
  }
  if (best_pos < 0) throw std::runtime_error("estimate_notch: no identifiable minimum");
  // idx runs over consecutive bins from ceil(f_lo/df); unwrap from there.
  const double f_unwrapped = (std::ceil(f_lo / df - 1e-9) + (double)best_pos) * df;
  return {f_unwrapped, "spectrum-median-floor"};
}

}  // namespace qlf
