// Test-only independent oracles: truncated-series matrix exponential,
// composite-Simpson quadrature of the ZOH integral, and a direct O(n^2) DFT.
// These must stay independent of the library's implementation paths.
#pragma once

#include <complex>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

inline Eigen::MatrixXd expm_taylor(const Eigen::MatrixXd& a, int terms = 40) {
  Eigen::MatrixXd acc = Eigen::MatrixXd::Identity(a.rows(), a.cols());
  Eigen::MatrixXd term = acc;
  for (int k = 1; k <= terms; ++k) {
    term = term * a / (double)k;
    acc += term;
  }
  return acc;
}

// Composite Simpson quadrature of int_0^dt exp(A tau) B dtau.
inline Eigen::MatrixXd zoh_gamma_simpson(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                         double dt, int panels = 512) {
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(a.rows(), b.cols());
  const double h = dt / panels;
  auto f = [&](double tau) { return (expm_taylor(a * tau, 60) * b).eval(); };
  for (int p = 0; p < panels; ++p) {
    const double t0 = p * h;
    acc += (h / 6.0) * (f(t0) + 4.0 * f(t0 + h / 2.0) + f(t0 + h));
  }
  return acc;
}

inline std::vector<std::complex<double>> direct_dft(const std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double ang = -2.0 * std::numbers::pi * (double)(k * j % n) / (double)n;
      acc += x[j] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

}  // namespace oracle
