#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "qlf/simulator.hpp"

using namespace qlf;
namespace {
constexpr double kPi = std::numbers::pi;
constexpr double k2Pi = 2.0 * std::numbers::pi;

Frontend pair_oscillator(int osr, double notch_fraction, double phi_kappa = 0.0,
                         double tau_dc_fraction = 0.0) {
  auto lp = leapfrog_lowpass(1, osr, 1.0);
  const double omega_n = notch_fraction * k2Pi * lp.design.f_s;
  return quadrature_extend(lp, omega_n, phi_kappa, tau_dc_fraction * lp.design.t_s);
}

}  // namespace

TEST_CASE("single-step contract against a direct expm computation") {
  auto fe = quadrature_extend(leapfrog_lowpass(2, 8, 1.0), 0.21 / leapfrog_design(2, 8, 1.0).t_s);
  const int n = fe.model.n();

  SimOptions opt;
  opt.record_states = true;
  opt.initial_state = Vec::Zero(n);
  opt.initial_state(0) = 1.0;

  InputSpec in;  // zero input
  const auto res = simulate(fe, in, 1, opt);

  // Decisions at k=0 from the initial state, then one exact hold interval.
  Vec d(n);
  for (int m = 0; m < n; ++m) d(m) = fe.obs.row(m).dot(opt.initial_state) < 0.0 ? -1.0 : 1.0;
  const auto blk = discretize(fe.model.a, fe.model.gamma_ctrl, fe.design.t_s);
  const Vec expect = blk.phi * opt.initial_state + blk.gamma * d;

  for (int i = 0; i < n; ++i)
    CHECK(res.states.data(i, 1) == doctest::Approx(expect(i)).epsilon(1e-12));
  for (int m = 0; m < n; ++m) CHECK(res.trace.get(0, m) == (d(m) > 0 ? 1 : -1));
}

TEST_CASE("control-free forced response matches the closed form") {
  auto fe = quadrature_extend(leapfrog_lowpass(2, 4, 1.0), 0.3 / leapfrog_design(2, 4, 1.0).t_s);
  fe.model.gamma_ctrl.setZero();  // disable every DAC
  const int n = fe.model.n();

  InputSpec in;
  in.kind = InputSpec::Kind::quadrature_tone;
  in.amplitude = 0.8;
  in.frequency = 0.07 * fe.design.f_s;
  in.phase = 0.4;

  SimOptions opt;
  opt.record_states = true;
  opt.blowup_bound = 1e12;  // uncontrolled states may wander
  const std::int64_t periods = 64;
  const auto res = simulate(fe, in, periods, opt);

  // Closed form: appended-oscillator homogeneous propagation over K T_s.
  Mat a_aug = Mat::Zero(n + 2, n + 2);
  a_aug.topLeftCorner(n, n) = fe.model.a;
  a_aug.block(0, n, n, 2) = fe.model.b;
  const double w = k2Pi * in.frequency;
  a_aug(n, n + 1) = -w;
  a_aug(n + 1, n) = w;
  Vec x0 = Vec::Zero(n + 2);
  x0(n) = in.amplitude * std::cos(in.phase);
  x0(n + 1) = in.amplitude * std::sin(in.phase);
  const Vec xk = expm(a_aug * ((double)periods * fe.design.t_s)) * x0;

  for (int i = 0; i < n; ++i) {
    const double got = res.states.data(i, periods);
    CHECK(std::abs(got - xk(i)) / std::max(1.0, std::abs(xk(i))) < 1e-9);
  }
}

TEST_CASE("one-period ballistic response (rotating input)") {
  for (double fraction : {0.1, 0.25, 0.4}) {
    auto fe = pair_oscillator(4, fraction);
    fe.model.gamma_ctrl.setZero();
    const double omega_n = fe.model.omega_n;
    const double beta = fe.design.beta, t_s = fe.design.t_s;

    InputSpec in;
    in.kind = InputSpec::Kind::quadrature_tone;
    in.amplitude = 1.0;
    in.frequency = omega_n / k2Pi;  // worst-case rotating input
    in.phase = 0.3;

    SimOptions opt;
    opt.record_states = true;
    opt.record_rows = {0, 1};
    const auto res = simulate(fe, in, 1, opt);

    const Eigen::Vector2d u0(std::cos(in.phase), std::sin(in.phase));
    const Eigen::Vector2d expect = beta * t_s * rotation(omega_n * t_s) * u0;
    CHECK(std::abs(res.states.data(0, 1) - expect(0)) < 1e-9 * std::abs(beta * t_s));
    CHECK(std::abs(res.states.data(1, 1) - expect(1)) < 1e-9 * std::abs(beta * t_s));
  }
}

TEST_CASE("one-period control response (constant decision pair)") {
  for (double phi_kappa : {0.0, 0.9}) {
    auto fe = pair_oscillator(4, 0.2, phi_kappa);
    const auto& p = *fe.qparams;
    fe.obs.setZero();  // observations 0 -> ties -> decision pair (+1, +1)

    InputSpec in;  // zero input
    SimOptions opt;
    opt.record_states = true;
    const auto res = simulate(fe, in, 1, opt);

    const double omega_n = fe.model.omega_n, t_s = fe.design.t_s;
    const double dac_norm = std::hypot(p.kappa_phi, p.bar_kappa_phi);
    const Eigen::Vector2d s0(1.0, 1.0);
    const Eigen::Vector2d expect = (2.0 * dac_norm / omega_n) * std::sin(omega_n * t_s / 2.0) *
                                   rotation(omega_n * t_s / 2.0 + phi_kappa) * s0;
    const double scale = expect.norm();
    CHECK(std::abs(res.states.data(0, 1) - expect(0)) / scale < 1e-9);
    CHECK(std::abs(res.states.data(1, 1) - expect(1)) / scale < 1e-9);
  }
}

TEST_CASE("bounded state pair under worst-case input") {
  auto fe = pair_oscillator(4, 0.23);
  const auto& p = *fe.qparams;
  const double omega_n = fe.model.omega_n, t_s = fe.design.t_s;

  InputSpec in;
  in.kind = InputSpec::Kind::quadrature_tone;
  in.amplitude = 1.0;
  in.frequency = omega_n / k2Pi;

  SimOptions opt;
  opt.record_states = true;
  const std::int64_t periods = 1 << 12;
  const auto res = simulate(fe, in, periods, opt);
  REQUIRE(res.stable);

  // Running max of the pair norm is non-increasing after the first 16 periods.
  double running = 0.0, after16 = 0.0;
  for (std::int64_t k = 0; k <= periods; ++k) {
    const double nrm = std::hypot(res.states.data(0, k), res.states.data(1, k));
    running = std::max(running, nrm);
    if (k == 16) after16 = running;
  }
  CHECK(running == doctest::Approx(after16));

  const double one_period_ctrl =
      (2.0 * std::hypot(p.kappa_phi, p.bar_kappa_phi) / omega_n) * std::sin(omega_n * t_s / 2.0) *
      std::sqrt(2.0);
  CHECK(running < 4.0 * one_period_ctrl);
}

TEST_CASE("determinism: identical runs give byte-identical traces") {
  auto fe = quadrature_extend(leapfrog_lowpass(3, 8, 1.0), 0.2 / leapfrog_design(3, 8, 1.0).t_s);
  auto fe_ref = inject_reference(fe, 0.1);
  InputSpec in;
  in.kind = InputSpec::Kind::quadrature_tone;
  in.amplitude = 0.7;
  in.frequency = 0.19 * fe.design.f_s;
  SimOptions opt;
  opt.seed = 77;
  const auto r1 = simulate(fe_ref, in, 512, opt);
  const auto r2 = simulate(fe_ref, in, 512, opt);
  CHECK(r1.trace.bits == r2.trace.bits);

  opt.seed = 78;
  const auto r3 = simulate(fe_ref, in, 512, opt);
  CHECK(r1.trace.bits != r3.trace.bits);
}

TEST_CASE("zero input produces a period-2 limit cycle (low-pass)") {
  auto fe = leapfrog_lowpass(1, 8, 1.0);
  InputSpec in;
  const auto res = simulate(fe, in, 64, {});
  // Cold start: tie -> +1, overshoot, then alternate.
  for (std::int64_t k = 8; k + 2 < 64; ++k)
    CHECK(res.trace.get(k, 0) == res.trace.get(k + 2, 0));
  CHECK(res.trace.get(20, 0) == -res.trace.get(21, 0));
}

TEST_CASE("divergence is reported, not fatal") {
  auto fe = leapfrog_lowpass(2, 8, 1.0);
  fe.model.gamma_ctrl = -fe.model.gamma_ctrl;  // positive feedback
  InputSpec in;
  in.kind = InputSpec::Kind::lowpass_tone;
  in.amplitude = 1.0;
  in.frequency = 0.01 * fe.design.f_s;
  const auto res = simulate(fe, in, 1 << 14, {});
  CHECK(!res.stable);
  CHECK(res.first_unstable_period >= 0);
  CHECK(res.trace.num_periods == res.first_unstable_period + 1);
}

TEST_CASE("reference injection layout and determinism") {
  auto fe = quadrature_extend(leapfrog_lowpass(2, 8, 1.0), 0.2 / leapfrog_design(2, 8, 1.0).t_s);
  const auto fe_ref = inject_reference(fe, 0.1);
  CHECK(fe_ref.ref_channels == 2);
  CHECK(fe_ref.gamma_ref(0, 0) == doctest::Approx(fe.qparams->kappa_phi / 10.0));
  CHECK(fe_ref.gamma_ref(2, 1) == doctest::Approx(fe.qparams->kappa_phi / 10.0));
  CHECK(fe_ref.gamma_ref.cwiseAbs().sum() ==
        doctest::Approx(2.0 * fe.qparams->kappa_phi / 10.0));

  InputSpec in;
  in.kind = InputSpec::Kind::reference_only;
  SimOptions opt;
  opt.seed = 5;
  const auto r1 = simulate(fe_ref, in, 256, opt);
  const auto r2 = simulate(fe_ref, in, 256, opt);
  CHECK(r1.trace.labels[0] == "s0");
  CHECK(r1.trace.labels[1] == "sbar0");
  CHECK(r1.trace.ref_channels == 2);
  for (std::int64_t k = 0; k < 256; ++k) {
    CHECK(r1.trace.get(k, 0) == r2.trace.get(k, 0));
    CHECK(r1.trace.get(k, 1) == r2.trace.get(k, 1));
  }
  // The reference stream is not constant.
  bool varied = false;
  for (std::int64_t k = 1; k < 256; ++k) varied = varied || r1.trace.get(k, 0) != r1.trace.get(0, 0);
  CHECK(varied);
}

TEST_CASE("tau_dc two-segment hold matches a manual two-block advance") {
  auto fe = pair_oscillator(4, 0.2, 0.0, 0.25);  // tau_dc = T_s/4
  const int n = fe.model.n();
  SimOptions opt;
  opt.record_states = true;
  opt.initial_state = Vec::Zero(n);
  opt.initial_state << 0.4, -0.2;
  InputSpec in;
  const auto res = simulate(fe, in, 2, opt);

  const double t_s = fe.design.t_s, tau = fe.tau_dc;
  const auto blk_a = discretize(fe.model.a, fe.model.gamma_ctrl, tau);
  const auto blk_b = discretize(fe.model.a, fe.model.gamma_ctrl, t_s - tau);
  Vec x = opt.initial_state;
  Vec d_prev = Vec::Zero(n);
  for (int k = 0; k < 2; ++k) {
    Vec d(n);
    for (int m = 0; m < n; ++m) d(m) = fe.obs.row(m).dot(x) < 0.0 ? -1.0 : 1.0;
    x = blk_a.phi * x + blk_a.gamma * d_prev;
    x = blk_b.phi * x + blk_b.gamma * d;
    d_prev = d;
  }
  for (int i = 0; i < n; ++i) CHECK(res.states.data(i, 2) == doctest::Approx(x(i)).epsilon(1e-13));
}

TEST_CASE("stability holds with a nonzero tau_dc when derived for it") {
  auto fe = pair_oscillator(4, 0.21, 0.0, 0.2);
  InputSpec in;
  in.kind = InputSpec::Kind::quadrature_tone;
  in.amplitude = 1.0;
  in.frequency = fe.model.omega_n / k2Pi;
  const auto res = simulate(fe, in, 1 << 12, {});
  CHECK(res.stable);
}

TEST_CASE("max_state_norm") {
  StateTrace t;
  t.rows = {0, 1};
  t.data = Mat::Zero(2, 3);
  CHECK(max_state_norm(t, true) == std::vector<double>{0.0});
  t.data(0, 1) = 3.0;
  t.data(1, 1) = 4.0;
  CHECK(max_state_norm(t, true)[0] == doctest::Approx(5.0));
  CHECK(max_state_norm(t, false)[0] == doctest::Approx(3.0));
  CHECK(max_state_norm(t, false)[1] == doctest::Approx(4.0));
}

TEST_CASE("trace file round trip") {
  auto fe = leapfrog_lowpass(2, 8, 1.0);
  InputSpec in;
  in.kind = InputSpec::Kind::lowpass_tone;
  in.amplitude = 0.9;
  in.frequency = 0.01 * fe.design.f_s;
  const auto res = simulate(fe, in, 300, {});

  const std::string path = std::filesystem::temp_directory_path() / "qlf_trace_test.bin";
  res.trace.save(path);
  const auto back = ControlTrace::load(path);
  CHECK(back.num_periods == res.trace.num_periods);
  CHECK(back.channels == res.trace.channels);
  CHECK(back.t_s == res.trace.t_s);
  CHECK(back.labels == res.trace.labels);
  CHECK(back.bits == res.trace.bits);
  std::filesystem::remove(path);
}
