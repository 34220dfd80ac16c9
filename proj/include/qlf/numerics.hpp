#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace qlf {

using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using Mat2 = Eigen::Matrix2d;
using cplx = std::complex<double>;

/// Planar rotation by phi radians: [[cos, -sin], [sin, cos]].
Mat2 rotation(double phi);

/// Matrix exponential via scaling-and-squaring with a Padé(13) approximant.
/// Throws std::invalid_argument on non-finite input or n > dim_cap.
Mat expm(const Mat& a, int dim_cap = 64);

/// One-interval exact propagation of dx/dt = A x + B u for u held constant:
/// x(t+dt) = Phi x(t) + Gamma u.
struct DiscretizedSystem {
  Mat phi;
  Mat gamma;
  double interval = 0.0;
};

/// Exact ZOH blocks from the augmented exponential exp([[A,B],[0,0]] dt),
/// so singular A needs no inversion.
DiscretizedSystem discretize(const Mat& a, const Mat& b, double dt);

/// Unnormalized forward DFT, in place; length must be a power of two.
void fft(std::vector<cplx>& x);
void ifft(std::vector<cplx>& x);
std::vector<cplx> fft_copy(const std::vector<cplx>& x);

/// Linear convolution of two real sequences via FFT.
std::vector<double> fft_convolve(const std::vector<double>& a, const std::vector<double>& b);

/// One point of an amplitude spec: target gain in dB at a frequency.
/// gain_db = -inf marks a "fully suppressed" point.
struct FirSpecPoint {
  double freq_hz;
  double gain_db;
};

struct FirDesignOptions {
  int grid_size = 1 << 14;   // dense design grid
  bool window_hann = true;
  int iterations = 4;        // response-correction passes against the target
  double check_tol_db = 2.0; // post-design feasibility margin at finite points
  bool symmetric = true;     // mirror the spec around 0 Hz (real taps)
};

/// Frequency-sampling FIR design against a point amplitude spec.
/// The target is interpolated linearly in dB between spec points (−inf points
/// are taken as −300 dB) and held flat outside the specified range. Returns
/// zero-phase complex taps of odd symmetry center (lag = length/2); for a
/// symmetric spec the imaginary part vanishes.
std::vector<cplx> design_fir_complex(const std::vector<FirSpecPoint>& spec, int length,
                                     double sample_rate, const FirDesignOptions& opts = {});

/// Real-tap variant (spec mirrored around 0 Hz). Throws if the designed
/// response misses a finite spec point by more than opts.check_tol_db.
std::vector<double> design_fir(const std::vector<FirSpecPoint>& spec, int length,
                               double sample_rate, const FirDesignOptions& opts = {});

/// Amplitude response of a tap vector at the given frequencies (taps centered
/// at lag = length/2).
std::vector<double> fir_response_db(const std::vector<double>& taps, const std::vector<double>& freqs,
                                    double sample_rate);
std::vector<double> fir_response_db(const std::vector<cplx>& taps, const std::vector<double>& freqs,
                                    double sample_rate);

/// x/sin(x), continuous through x = 0.
double inv_sinc(double x);

/// Portable uniform double in [0, 1) from a 64-bit PRNG word.
double u64_to_unit(std::uint64_t r);

/// Worst residuals of the rotation-matrix identities over n random draws
/// (commutativity, negation, difference, integral, scaled decomposition).
/// Used by the verify command and the identity test suite.
struct RotationIdentityReport {
  double commutativity = 0.0;
  double negation = 0.0;
  double difference = 0.0;
  double integral = 0.0;
  double scaled_decomposition = 0.0;
  double worst() const;
};
RotationIdentityReport verify_rotation_identities(int draws, std::uint64_t seed);

}  // namespace qlf
