#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "qlf/control.hpp"
#include "qlf/numerics.hpp"

using namespace qlf;
namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_CASE("derive_control_params small-angle limit") {
  const double beta = 1e6;
  const auto p = derive_control_params(beta, 0.0, 0.0, 0.0);
  CHECK(p.kappa_phi == doctest::Approx(beta).epsilon(1e-14));
  CHECK(p.bar_kappa_phi == 0.0);
  CHECK(p.tilde_kappa_phi == doctest::Approx(-1.0 / (beta * p.t_s)).epsilon(1e-14));
  CHECK(p.bar_tilde_kappa_phi == 0.0);
  CHECK(p.f_s == 2.0 * beta);
}

TEST_CASE("derive_control_params circuit-study values") {
  // f_s = 2^31 Hz, f_n = (5/16) f_s, phi_kappa = 0, tau_dc = 0.
  const double f_s = 2147483648.0;
  const double beta = f_s / 2.0;
  const double omega_n = 2.0 * kPi * (5.0 / 16.0) * f_s;
  const auto p = derive_control_params(beta, omega_n);

  CHECK(p.kappa_phi == doctest::Approx(1.2678e9).epsilon(1e-4));
  const double c_farad = 1e-12;
  CHECK(1.0 / (p.kappa_phi * c_farad) == doctest::Approx(788.7).epsilon(1e-3));

  // Direct evaluation with beta*T_s = 1/2: obs angle is 5*pi/16.
  const double ang = 5.0 * kPi / 16.0;
  CHECK(p.tilde_kappa_phi == doctest::Approx(-2.0 * std::cos(ang)).epsilon(1e-12));
  CHECK(p.bar_tilde_kappa_phi == doctest::Approx(-2.0 * std::sin(ang)).epsilon(1e-12));
  CHECK(p.tilde_kappa_phi == doctest::Approx(-1.1111).epsilon(1e-4));
  CHECK(p.bar_tilde_kappa_phi == doctest::Approx(-1.6629).epsilon(1e-4));

  // Cross-check via the two norm/angle conditions.
  const auto r = verify_stability_conditions(p, beta, omega_n);
  CHECK(r.worst() <= 1e-12);
}

TEST_CASE("derive_control_params rejects out-of-range notch") {
  const double beta = 1e6;
  const double t_s = 1.0 / (2.0 * beta);
  CHECK_THROWS_AS(derive_control_params(beta, 2.0 * kPi / t_s), std::invalid_argument);
  CHECK_THROWS_AS(derive_control_params(-1.0, 0.0), std::invalid_argument);
}

TEST_CASE("control_observation") {
  auto p = derive_control_params(1e6, 2.0 * kPi * 3e5, 0.7, 0.0);
  const auto zero = control_observation(0.0, 0.0, p);
  CHECK(zero.norm() == 0.0);

  // Decoupled limit bar_tilde = 0.
  auto pd = p;
  pd.bar_tilde_kappa_phi = 0.0;
  const auto dec = control_observation(0.3, -0.2, pd);
  CHECK(dec(0) == doctest::Approx(pd.tilde_kappa_phi * 0.3));
  CHECK(dec(1) == doctest::Approx(pd.tilde_kappa_phi * -0.2));

  // Scaled-rotation oracle: [[a,-b],[b,a]] = hypot(a,b) * R(atan2(b,a)).
  std::mt19937_64 rng(9);
  for (int i = 0; i < 200; ++i) {
    const double x = 2.0 * u64_to_unit(rng()) - 1.0, xb = 2.0 * u64_to_unit(rng()) - 1.0;
    const auto got = control_observation(x, xb, p);
    const double norm = std::hypot(p.tilde_kappa_phi, p.bar_tilde_kappa_phi);
    const double ang = std::atan2(p.bar_tilde_kappa_phi, p.tilde_kappa_phi);
    const Eigen::Vector2d expect = norm * rotation(ang) * Eigen::Vector2d(x, xb);
    CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("quantize tie rule") {
  CHECK(quantize(0.3) == 1);
  CHECK(quantize(-1e-12) == -1);
  CHECK(quantize(0.0) == 1);
}

TEST_CASE("dac_contribution") {
  auto p = derive_control_params(1e6, 2.0 * kPi * 2e5, 0.0, 0.0);
  SUBCASE("bar_kappa = 0") {
    const auto v = dac_contribution({+1, +1}, p);
    CHECK(v(0) == doctest::Approx(p.kappa_phi));
    CHECK(v(1) == doctest::Approx(p.kappa_phi));
  }
  SUBCASE("general linear map") {
    auto pg = derive_control_params(1e6, 2.0 * kPi * 2e5, 0.4, 0.0);
    const auto v = dac_contribution({+1, -1}, pg);
    CHECK(v(0) == doctest::Approx(pg.kappa_phi + pg.bar_kappa_phi));
    CHECK(v(1) == doctest::Approx(pg.bar_kappa_phi - pg.kappa_phi));
  }
  SUBCASE("rotation preserves the norm of (+-1, +-1)") {
    auto pg = derive_control_params(2e6, 2.0 * kPi * 5e5, 1.3, 0.0);
    const double expect = std::hypot(pg.kappa_phi, pg.bar_kappa_phi) * std::sqrt(2.0);
    for (int s = -1; s <= 1; s += 2)
      for (int sb = -1; sb <= 1; sb += 2)
        CHECK(dac_contribution({s, sb}, pg).norm() == doctest::Approx(expect).epsilon(1e-13));
  }
}

TEST_CASE("verify_stability_conditions perturbation arithmetic") {
  const double beta = 5e8, omega_n = 2.0 * kPi * 1e8;
  auto p = derive_control_params(beta, omega_n, 0.0, 0.0);

  SUBCASE("derived params give zero residuals") {
    const auto r = verify_stability_conditions(p, beta, omega_n);
    CHECK(std::abs(r.norm_match) <= 1e-12);
    CHECK(std::abs(r.tilde_norm) <= 1e-12);
    CHECK(std::abs(r.tilde_angle) <= 1e-12);
    CHECK(r.superposition_slack == 0.0);
  }
  SUBCASE("kappa scaled by 1.05") {
    auto ps = p;
    ps.kappa_phi *= 1.05;
    const auto r = verify_stability_conditions(ps, beta, omega_n);
    CHECK(r.norm_match == doctest::Approx(0.05).epsilon(1e-10));
    CHECK(std::abs(r.tilde_norm) > 1e-3);  // expected obs norm moved with the DAC norm
  }
  SUBCASE("tau_dc mismatch shows up as the angle residual") {
    auto ps = p;  // derived at tau_dc = 0, claimed at 0.1 T_s
    ps.tau_dc = 0.1 * p.t_s;
    const auto r = verify_stability_conditions(ps, beta, omega_n);
    CHECK(std::abs(r.tilde_angle) == doctest::Approx(0.1 * omega_n * p.t_s).epsilon(1e-10));
  }
}

TEST_CASE("random condition residuals stay at 1e-12") {
  const auto worst = verify_conditions_random(500, 123);
  CHECK(worst.worst() <= 1e-12);
  CHECK(worst.superposition_slack == 0.0);
}
