#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "qlf/numerics.hpp"

using namespace qlf;
namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_CASE("rotation basics") {
  CHECK((rotation(0.0) - Mat2::Identity()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((rotation(kPi) + Mat2::Identity()).cwiseAbs().maxCoeff() < 1e-15);

  // Direct 2x2 multiplication oracle for the composition.
  const Mat2 prod = rotation(0.3) * rotation(0.4);
  CHECK((prod - rotation(0.7)).cwiseAbs().maxCoeff() < 1e-14);

  // Orthogonality and unit determinant.
  std::mt19937_64 rng(11);
  for (int i = 0; i < 100; ++i) {
    const double phi = 20.0 * (u64_to_unit(rng()) - 0.5);
    const Mat2 r = rotation(phi);
    CHECK((r.transpose() * r - Mat2::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("rotation identity suite to 1e-13") {
  const auto rep = verify_rotation_identities(1000, 42);
  CHECK(rep.commutativity < 1e-13);
  CHECK(rep.negation < 1e-13);
  CHECK(rep.difference < 1e-13);
  CHECK(rep.integral < 1e-13);
  CHECK(rep.scaled_decomposition < 1e-13);
}

TEST_CASE("expm identity and skew rotation") {
  CHECK((expm(Mat::Zero(3, 3)) - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-15);

  const double phi = 1.1;
  Mat skew(2, 2);
  skew << 0.0, -phi, phi, 0.0;
  CHECK((expm(skew) - rotation(phi)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("expm matches truncated-series oracle") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Mat a(4, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) a(i, j) = 2.0 * u64_to_unit(rng()) - 1.0;
    a /= std::max(1.0, a.cwiseAbs().maxCoeff() * 2.0);  // keep ||A|| <= 1
    CHECK((expm(a) - oracle::expm_taylor(a)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("expm rejects bad input") {
  CHECK_THROWS_AS(expm(Mat::Ones(65, 65)), std::invalid_argument);
  Mat bad = Mat::Zero(2, 2);
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(expm(bad), std::invalid_argument);
}

TEST_CASE("discretize pure integrator") {
  Mat a = Mat::Zero(1, 1), b(1, 1);
  const double beta = 3.25, dt = 0.5;
  b << beta;
  const auto d = discretize(a, b, dt);
  CHECK(d.phi(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(d.gamma(0, 0) == doctest::Approx(beta * dt).epsilon(1e-14));
}

TEST_CASE("discretize oscillator gamma closed form") {
  // Gamma = (2/w) sin(w T / 2) * R(w T / 2) for A = skew(w), B = I.
  const double w = 2.7, t = 0.8;
  Mat a(2, 2);
  a << 0.0, -w, w, 0.0;
  const auto d = discretize(a, Mat::Identity(2, 2), t);
  const Mat2 expected = (2.0 / w) * std::sin(w * t / 2.0) * rotation(w * t / 2.0);
  CHECK((d.gamma - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("discretize matches Simpson quadrature oracle") {
  std::mt19937_64 rng(17);
  Mat a(3, 3), b(3, 2);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) a(i, j) = 2.0 * u64_to_unit(rng()) - 1.0;
    for (int j = 0; j < 2; ++j) b(i, j) = 2.0 * u64_to_unit(rng()) - 1.0;
  }
  a -= 2.0 * Mat::Identity(3, 3);  // stable
  const double dt = 0.7;
  const auto d = discretize(a, b, dt);
  const Mat gamma_oracle = oracle::zoh_gamma_simpson(a, b, dt);
  const double rel =
      (d.gamma - gamma_oracle).norm() / gamma_oracle.norm();
  CHECK(rel < 1e-9);
  CHECK((d.phi - oracle::expm_taylor(a * dt, 60)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("discretize interval-doubling consistency") {
  std::mt19937_64 rng(23);
  Mat a(4, 4), b(4, 1);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) a(i, j) = 2.0 * u64_to_unit(rng()) - 1.0;
    b(i, 0) = 2.0 * u64_to_unit(rng()) - 1.0;
  }
  const double dt = 0.3;
  const auto d1 = discretize(a, b, dt);
  const auto d2 = discretize(a, b, 2.0 * dt);
  CHECK((d2.phi - d1.phi * d1.phi).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((d2.gamma - (d1.phi * d1.gamma + d1.gamma)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("fft impulse and single bin") {
  std::vector<cplx> x(8, 0.0);
  x[0] = 1.0;
  fft(x);
  for (const auto& v : x) CHECK(std::abs(v - cplx(1.0, 0.0)) < 1e-14);

  std::vector<cplx> tone(16);
  for (int k = 0; k < 16; ++k)
    tone[(std::size_t)k] = std::exp(cplx(0.0, 2.0 * kPi * 3.0 * k / 16.0));
  fft(tone);
  for (int j = 0; j < 16; ++j) {
    const double expect = j == 3 ? 16.0 : 0.0;
    CHECK(std::abs(tone[(std::size_t)j] - expect) < 1e-12);
  }
}

TEST_CASE("fft matches direct DFT oracle and inverts") {
  std::mt19937_64 rng(3);
  std::vector<cplx> x(256);
  for (auto& v : x) v = cplx(2.0 * u64_to_unit(rng()) - 1.0, 2.0 * u64_to_unit(rng()) - 1.0);
  const auto direct = oracle::direct_dft(x);
  auto fast = x;
  fft(fast);
  double err = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) err = std::max(err, std::abs(fast[i] - direct[i]));
  CHECK(err < 1e-10);

  ifft(fast);
  double rel = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    rel = std::max(rel, std::abs(fast[i] - x[i]));
    scale = std::max(scale, std::abs(x[i]));
  }
  CHECK(rel / scale < 1e-12);

  std::vector<cplx> bad(12);
  CHECK_THROWS_AS(fft(bad), std::invalid_argument);
}

TEST_CASE("design_fir flat spec is a delta") {
  const auto taps = design_fir({{0.0, 0.0}}, 64, 1.0);
  for (int t = 0; t < 64; ++t) {
    const double expect = t == 32 ? 1.0 : 0.0;
    CHECK(std::abs(taps[(std::size_t)t] - expect) < 1e-6);
  }
}

TEST_CASE("design_fir lowpass -3 dB point") {
  const double fs = 1.0;
  std::vector<FirSpecPoint> spec = {{0.0, 0.0}, {0.25 * fs, -3.0}, {0.4995 * fs, -40.0}};
  const auto taps = design_fir(spec, 257, fs);
  const auto resp = fir_response_db(taps, {0.25 * fs}, fs);
  CHECK(std::abs(resp[0] + 3.0) < 0.5);
}

TEST_CASE("design_fir circuit-study band-pass spec") {
  const double fs = 2147483648.0;  // 2^31
  const double fn = 5.0 / 16.0 * fs;
  const double d = fs / 16.0;
  const double inf = -std::numeric_limits<double>::infinity();
  std::vector<FirSpecPoint> spec = {{fn, 0.0},      {fn - d, -3.0},        {fn + d, -3.0},
                                    {fn - 1.05 * d, -20.0}, {fn + 1.05 * d, -20.0}, {0.0, inf},
                                    {fs / 2.0, inf}};
  const auto taps = design_fir(spec, 512, fs);
  const auto resp = fir_response_db(taps, {fn, fn - d, fn + d, fn - 1.05 * d, fn + 1.05 * d, 0.0, fs / 2.0}, fs);
  CHECK(std::abs(resp[0] - 0.0) < 2.0);
  CHECK(std::abs(resp[1] + 3.0) < 2.0);
  CHECK(std::abs(resp[2] + 3.0) < 2.0);
  CHECK(std::abs(resp[3] + 20.0) < 2.0);
  CHECK(std::abs(resp[4] + 20.0) < 2.0);
  CHECK(resp[5] <= -40.0);
  CHECK(resp[6] <= -40.0);
}

TEST_CASE("design_fir infeasible spec errors") {
  // A brick-wall transition far too sharp for 8 taps.
  std::vector<FirSpecPoint> spec = {{0.0, 0.0}, {0.01, 0.0}, {0.0101, -80.0}, {0.4, -80.0}};
  CHECK_THROWS_AS(design_fir(spec, 8, 1.0), std::runtime_error);
}

TEST_CASE("inv_sinc limit") {
  CHECK(inv_sinc(0.0) == doctest::Approx(1.0));
  CHECK(inv_sinc(1e-9) == doctest::Approx(1.0));
  CHECK(inv_sinc(0.5) == doctest::Approx(0.5 / std::sin(0.5)).epsilon(1e-14));
}
