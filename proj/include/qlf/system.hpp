#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qlf/control.hpp"
#include "qlf/numerics.hpp"

namespace qlf {

/// Scalar design constants of the low-pass leapfrog building block.
/// beta > 0, kappa = -beta, alpha = omega_b^2 / (4 kappa) < 0, f_s = 2 beta.
struct LeapfrogDesign {
  int order_n = 0;
  int osr = 0;
  double omega_b = 0.0;  // rad/s
  double beta = 0.0;     // 1/s
  double alpha = 0.0;    // 1/s
  double kappa = 0.0;    // 1/s
  double f_s = 0.0;      // Hz
  double t_s = 0.0;      // s
};

/// Continuous-time LTI model: dx/dt = A x + B u + Gamma_ctrl d(t).
struct StateSpaceModel {
  Mat a;                        // n x n, 1/s
  Mat b;                        // n x m_u, 1/s
  Mat gamma_ctrl;               // n x m_s, 1/s
  std::vector<int> output_rows; // observation states (x_N, and x_bar_N when quadrature)
  std::vector<std::string> channel_labels;
  bool quadrature = false;
  double omega_n = 0.0;         // rad/s (0 for low-pass)

  int n() const { return (int)a.rows(); }
  int m_u() const { return (int)b.cols(); }
  int m_s() const { return (int)gamma_ctrl.cols(); }

  std::string to_json() const;
  static StateSpaceModel from_json(const std::string& text);
};

struct PoleError : std::runtime_error {
  explicit PoleError(double omega)
      : std::runtime_error("transfer_function: i*omega hits an undamped pole"), omega(omega) {}
  double omega;
};

/// Analog frontend bundle: the model plus the digital-control matrices.
/// Decisions are sign(obs * x); the DAC feeds Gamma_ctrl * d into the state.
/// Reference columns, when present, occupy the first ref_channels columns of
/// gamma_ref and are driven by a seeded binary sequence instead of obs.
struct Frontend {
  LeapfrogDesign design;
  StateSpaceModel model;
  Mat obs;                  // m_s x n comparator mixing matrix
  Mat gamma_ref;            // n x ref_channels (empty when no reference)
  int ref_channels = 0;
  double tau_dc = 0.0;
  std::optional<QuadratureControlParams> qparams;  // set for quadrature builds
};

LeapfrogDesign leapfrog_design(int order_n, int osr, double omega_b);

/// Low-pass leapfrog frontend: alpha on the superdiagonal, beta on the
/// subdiagonal, B = (beta, 0, ...)^T, Gamma = kappa I, obs = I.
Frontend leapfrog_lowpass(int order_n, int osr, double omega_b);

/// Quadrature extension: two low-pass copies cross-coupled by +-omega_n, with
/// one local quadrature digital control per state pair.
/// Requires 0 <= omega_n < pi * f_s.
Frontend quadrature_extend(const Frontend& lowpass, double omega_n, double phi_kappa = 0.0,
                           double tau_dc = 0.0);

/// All state responses to one input column at s = i*omega (complex solve).
/// Throws PoleError when i*omega is an eigenvalue of A.
CVec transfer_function(const StateSpaceModel& model, double omega, int input_channel = 0);

/// Output-row responses to every signal and control column at s = sigma + i*omega.
struct TransferPoint {
  CMat from_u;     // outputs x m_u
  CMat from_ctrl;  // outputs x m_s
};
TransferPoint transfer_at(const StateSpaceModel& model, double omega, double sigma = 0.0);

/// Analytic-branch scalar transfer of the complex pair (u + i u_bar) ->
/// (x_N + i x_bar_N); reduces to the plain transfer for low-pass models.
cplx analytic_transfer(const StateSpaceModel& model, double omega, double sigma = 0.0);

/// 10 log10( g_i(N) (OSR / 2 pi)^(2N) / xi ) with g_i(N) = 2^(2N-1).
double predicted_snr_db(int order_n, int osr, double xi);

/// Replace each ideal integrator with the closed-loop inverting op-amp stage
/// A(s) = k_a * omega_a / (s + omega_a); doubles the state count, keeps the
/// input/control/observation semantics.
Frontend opamp_augment(const Frontend& fe, double k_a, double omega_a);

enum class ParamClass {
  Alpha,
  Beta,
  OmegaN,
  KappaPhi,
  BarKappaPhi,
  TildeKappaPhi,
  BarTildeKappaPhi,
};

struct PerturbationSpec {
  double relative_bound = 0.0;  // in [0, 0.5)
  std::set<ParamClass> targets;
  std::uint64_t seed = 0;

  static std::set<ParamClass> all_targets();
};

/// Every structural occurrence of each targeted parameter (per stage, per
/// branch) multiplied by an independent (1 + delta), delta ~ U(-r, r).
/// Structural zeros (e.g. bar_kappa_phi at phi_kappa = 0) are skipped.
Frontend perturb(const Frontend& fe, const PerturbationSpec& spec);

}  // namespace qlf
