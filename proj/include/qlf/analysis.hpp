#pragma once

#include <string>
#include <vector>

#include "qlf/numerics.hpp"
#include "qlf/system.hpp"

namespace qlf {

/// Welch-averaged PSD in dBFS: a full-scale bin-centered tone reads 0 dBFS.
/// Real input -> one-sided grid [0, rate/2]; complex (I/Q) input -> full
/// grid [0, rate).
struct Spectrum {
  std::vector<double> freqs_hz;
  std::vector<double> psd_dbfs;
  int nfft = 0;
  std::string window = "hann";
  double full_scale = 1.0;
  double rate = 0.0;
  bool complex_input = false;
  int segments = 0;
};

Spectrum psd(const std::vector<double>& x, int nfft, double full_scale, double rate);
Spectrum psd(const std::vector<cplx>& x, int nfft, double full_scale, double rate);

/// Signal power = signal bin +-1 neighbor, noise = remaining in-band bins.
/// The band may wrap modulo the grid for complex spectra.
double snr_in_band(const Spectrum& spec, double f_lo, double f_hi, double signal_freq);

/// Nearest-bin tone snapping for an nfft-point analysis at `rate`.
struct SnappedTone {
  double freq_hz;
  double offset_hz;  // snapped - requested, always <= half a bin
};
SnappedTone snap_to_bin(double freq_hz, double rate, int nfft);

struct NotchEstimate {
  double f_hat_hz = 0.0;
  std::string strategy;
};

/// Notch estimate from the model: argmin over a dense grid of the analytic
/// |NTF| evaluated on the damped line s = omega_b/2 + i*omega, which smooths
/// the undamped pole comb into an envelope centered on the conversion band.
/// Searches [f_center - f_half, f_center + f_half].
NotchEstimate estimate_notch(const StateSpaceModel& model, double omega_b, double f_center_hz,
                             double f_half_hz, int grid_points = 4096);

/// Spectrum-based fallback: argmin of a median-smoothed noise floor inside
/// the band, excluding +-exclude bins around the signal.
NotchEstimate estimate_notch(const Spectrum& spec, double f_lo, double f_hi, double signal_freq,
                             int median_bins = 32, int exclude_bins = 3);

}  // namespace qlf
