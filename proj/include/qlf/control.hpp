#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace qlf {

/// Derived constants of one local quadrature digital control.
/// kappa_phi/bar_kappa_phi scale the DAC pair, tilde_kappa_phi /
/// bar_tilde_kappa_phi mix the state pair into the comparator inputs.
struct QuadratureControlParams {
  double kappa_phi = 0.0;            // 1/s
  double bar_kappa_phi = 0.0;        // 1/s
  double tilde_kappa_phi = 0.0;      // dimensionless
  double bar_tilde_kappa_phi = 0.0;  // dimensionless
  double f_s = 0.0;                  // Hz
  double t_s = 0.0;                  // s
  double tau_dc = 0.0;               // s
  double phi_kappa = 0.0;            // rad, in [0, 2pi)
};

struct ControlDecisionPair {
  int s = 1;      // in {-1, +1}
  int s_bar = 1;  // in {-1, +1}
};

/// Control constants that keep a quadrature state pair bounded, with the
/// omega_n -> 0 limit evaluated analytically.
/// Throws std::invalid_argument when beta <= 0 or omega_n * t_s >= 2*pi.
QuadratureControlParams derive_control_params(double beta, double omega_n, double phi_kappa = 0.0,
                                              double tau_dc = 0.0);

/// Comparator inputs (s_tilde, s_bar_tilde) for a state pair.
Eigen::Vector2d control_observation(double x, double x_bar, const QuadratureControlParams& p);

/// Clocked 1-bit comparator; the tie at exactly 0 maps to +1.
int quantize(double v);

/// DAC pair output held over [k T_s + tau_dc, (k+1) T_s + tau_dc).
Eigen::Vector2d dac_contribution(const ControlDecisionPair& d, const QuadratureControlParams& p);

/// Signed residuals of the boundedness conditions. Norm residuals are
/// relative, the angle residual is wrap-aware in radians, and the
/// superposition slack is 1 - 2 beta / f_s (exactly 0 for derived params).
struct StabilityResiduals {
  double norm_match = 0.0;
  double tilde_norm = 0.0;
  double tilde_angle = 0.0;
  double superposition_slack = 0.0;
  double worst() const;
};

StabilityResiduals verify_stability_conditions(const QuadratureControlParams& p, double beta,
                                               double omega_n);

/// Worst residuals over `draws` random (beta, omega_n, phi_kappa, tau_dc)
/// tuples with omega_n * t_s in (0, 2pi); backs the `verify` command.
StabilityResiduals verify_conditions_random(int draws, std::uint64_t seed);

/// Difference of two angles wrapped to [-pi, pi].
double wrap_angle(double a);

}  // namespace qlf
