#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qlf/numerics.hpp"
#include "qlf/simulator.hpp"
#include "qlf/system.hpp"

namespace qlf {

/// Per-channel FIR taps, one row set per output channel (1 for low-pass,
/// 2 for quadrature I/Q). All channels share length and centered lag.
/// Channels [0, ref_channels) hold the fixed reference filter h0 and are
/// never touched by calibration.
struct FirFilterBank {
  int length = 0;
  int lag = 0;
  int n_outputs = 0;
  int n_channels = 0;
  int ref_channels = 0;
  double t_s = 0.0;
  int osr = 1;
  std::vector<RowMat> taps;  // n_outputs matrices of n_channels x length (row-major)

  void init(int outputs, int channels, int len, int lag_, double t_s_, int osr_);
  void save(const std::string& path) const;
  static FirFilterBank load(const std::string& path);

  /// Amplitude response (dB) of one (output, channel) tap row.
  std::vector<double> response_db(int output, int channel, const std::vector<double>& freqs) const;
};

/// Band-limiting inverse filter W(i w) = (G_u^H G_u + eta^2 I)^-1 G_u^H with
/// eta^2 = sigma_max(G_u)^2 at the band edge (omega_n + omega_b for
/// quadrature systems). For circular quadrature models this is the complex
/// scalar conj(G)/(|G|^2 + eta^2) in 2x2 real form; low-pass is the 1x1 case.
struct WienerShaper {
  StateSpaceModel model;
  double omega_b = 0.0;
  double eta = 0.0;

  /// m_u x outs inverse-filter matrix at s = i*omega.
  CMat eval(double omega) const;
  /// Scalar analytic-branch value (for oracles on circular systems).
  cplx eval_scalar(double omega) const;
};

WienerShaper make_wiener_shaper(const StateSpaceModel& model, double omega_b);

/// Numerically stable (G^H G + eta^2 I)^-1 G^H via the SVD (safe at poles).
CMat wiener_inverse(const CMat& g, double eta);

enum class TapWindow { hann, rect };

struct WienerBankOptions {
  int taps = 1 << 12;        // must be a power of two
  int alias_terms = 2;       // |a| <= alias_terms images of the sampled spectrum
  int design_grid = 0;       // 0 -> max(4 * taps, 4096)
  TapWindow window = TapWindow::hann;
};

/// Wiener FIR bank by frequency sampling of
/// H_l(e^{i Omega}) = -(1/T_s) sum_a [W * G_{s_l} * DAC](i(omega + 2 pi a f_s))
/// followed by inverse DFT, centering and windowing. The leading minus makes
/// the estimate track +u. Reference channels are not part of a Wiener bank.
FirFilterBank wiener_filter_bank(const Frontend& fe, double omega_b, int taps, int osr,
                                 const WienerBankOptions& opts = {});

struct EstimateResult {
  Mat outputs;           // n_outputs x samples
  std::int64_t k0 = 0;   // absolute trace index of the first sample
  int decimation = 1;
  double rate = 0.0;     // samples per second after decimation

  /// I/Q outputs combined into a complex sequence (requires 2 outputs).
  std::vector<cplx> complex_sequence() const;
  std::vector<double> real_sequence() const;
};

/// u_hat[k] = sum_l sum_k1 h_l[k1] s_l[k - k1], evaluated on the interior
/// k in [lag, K - lag) and decimated by `decimation` (pass 1 for full rate,
/// 0 for the bank's osr). Throws if the trace is shorter than 2*lag or the
/// channel counts disagree.
EstimateResult estimate(const ControlTrace& trace, const FirFilterBank& bank, int decimation = 0);

struct SpectralShapes {
  std::vector<double> freqs_hz;
  std::vector<double> stf_db;
  std::vector<double> ntf_db;
};

/// |STF| = |G_u|^2/(|G_u|^2+eta^2), |NTF| = |G_u|/(|G_u|^2+eta^2) on a grid.
SpectralShapes stf_ntf(const StateSpaceModel& model, double omega_b,
                       const std::vector<double>& freqs_hz);

/// Fixed reference filter h0 (and its matched quadrature copy) from an
/// amplitude point spec; delegates to design_fir.
struct ReferenceFilter {
  std::vector<double> taps;
  std::vector<FirSpecPoint> spec;
};
ReferenceFilter reference_filter_h0(const std::vector<FirSpecPoint>& spec, int length,
                                    double sample_rate);

struct LmsOptions {
  bool multiplication_free = true;  // sign-select updates (bit-identical to generic)
  std::int64_t mse_window = 1 << 16;
  double divergence_factor = 10.0;
};

struct LmsResult {
  FirFilterBank bank;
  double final_mse = 0.0;
  std::int64_t iterations_run = 0;
};

struct LmsDivergence : std::runtime_error {
  LmsDivergence(std::int64_t iteration, double mse)
      : std::runtime_error("lms_calibrate: diverged"), iteration(iteration), mse(mse) {}
  std::int64_t iteration;
  double mse;
};

/// LMS calibration against the fixed reference branch: h_1..h_N start at
/// zero, e[k] = sum over the whole bank including h0, and each weight moves
/// by -step * e[k] * s_l[k-m]. For +-1 traces the update is add/subtract
/// only when multiplication_free is set; both paths are bit-identical.
/// Iterates cyclically over the trace interior when iterations exceed it.
LmsResult lms_calibrate(const ControlTrace& trace, const std::vector<double>& h0, double step,
                        std::int64_t iterations, int osr, const LmsOptions& opts = {});

}  // namespace qlf
