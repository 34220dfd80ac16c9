#include "qlf/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace qlf {

namespace {
constexpr double kPi = std::numbers::pi;
}

Mat2 rotation(double phi) {
  if (!std::isfinite(phi)) throw std::invalid_argument("rotation: phi must be finite");
  const double c = std::cos(phi), s = std::sin(phi);
  Mat2 m;
  m << c, -s, s, c;
  return m;
}

Mat expm(const Mat& a, int dim_cap) {
  if (a.rows() != a.cols()) throw std::invalid_argument("expm: matrix must be square");
  if (a.rows() > dim_cap) throw std::invalid_argument("expm: dimension cap exceeded");
  if (!a.allFinite()) throw std::invalid_argument("expm: non-finite input");

  const Eigen::Index n = a.rows();
  const Mat identity = Mat::Identity(n, n);

  // Padé(13) coefficients (Higham 2005).
  static const double b[] = {64764752532480000., 32382376266240000., 7771770303897600.,
                             1187353796428800.,  129060195264000.,   10559470521600.,
                             670442572800.,      33522128640.,       1323241920.,
                             40840800.,          960960.,            16380.,
                             182.,               1.};
  const double theta13 = 5.371920351148152;

  double norm1 = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) norm1 = std::max(norm1, a.col(j).cwiseAbs().sum());
  int squarings = 0;
  if (norm1 > theta13) squarings = std::max(0, (int)std::ceil(std::log2(norm1 / theta13)));
  const Mat as = a / std::ldexp(1.0, squarings);

  const Mat a2 = as * as;
  const Mat a4 = a2 * a2;
  const Mat a6 = a2 * a4;
  const Mat u = as * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) +
                      b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * identity);
  const Mat v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) +
                b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * identity;

  Mat r = (v - u).partialPivLu().solve(v + u);
  for (int i = 0; i < squarings; ++i) r = r * r;
  return r;
}

DiscretizedSystem discretize(const Mat& a, const Mat& b, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("discretize: dt must be positive");
  if (a.rows() != a.cols() || a.rows() != b.rows())
    throw std::invalid_argument("discretize: dimension mismatch");
  if (!a.allFinite() || !b.allFinite())
    throw std::invalid_argument("discretize: non-finite input");

  const Eigen::Index n = a.rows(), m = b.cols();
  Mat aug = Mat::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = a;
  aug.topRightCorner(n, m) = b;
  const Mat e = expm(aug * dt, std::max<int>(64, (int)(n + m)));
  DiscretizedSystem d;
  d.phi = e.topLeftCorner(n, n);
  d.gamma = e.topRightCorner(n, m);
  d.interval = dt;
  return d;
}

void fft(std::vector<cplx>& x) {
  const std::size_t n = x.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw std::invalid_argument("fft: length must be a power of two");
  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / (double)len;
    const cplx wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const cplx u = x[i + k];
        const cplx v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

void ifft(std::vector<cplx>& x) {
  for (auto& v : x) v = std::conj(v);
  fft(x);
  const double inv = 1.0 / (double)x.size();
  for (auto& v : x) v = std::conj(v) * inv;
}

std::vector<cplx> fft_copy(const std::vector<cplx>& x) {
  std::vector<cplx> y = x;
  fft(y);
  return y;
}

std::vector<double> fft_convolve(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t out_len = a.size() + b.size() - 1;
  std::size_t n = 1;
  while (n < out_len) n <<= 1;
  std::vector<cplx> fa(n, 0.0), fb(n, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) fa[i] = a[i];
  for (std::size_t i = 0; i < b.size(); ++i) fb[i] = b[i];
  fft(fa);
  fft(fb);
  for (std::size_t i = 0; i < n; ++i) fa[i] *= fb[i];
  ifft(fa);
  std::vector<double> out(out_len);
  for (std::size_t i = 0; i < out_len; ++i) out[i] = fa[i].real();
  return out;
}

namespace {

constexpr double kInfStopDb = -300.0;

double spec_db_or_floor(double g) { return std::isfinite(g) ? g : kInfStopDb; }

// Piecewise-linear (in dB) target between spec points, flat extrapolation.
double interp_target_db(const std::vector<FirSpecPoint>& sorted, double f) {
  if (f <= sorted.front().freq_hz) return spec_db_or_floor(sorted.front().gain_db);
  if (f >= sorted.back().freq_hz) return spec_db_or_floor(sorted.back().gain_db);
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (f <= sorted[i].freq_hz) {
      const double f0 = sorted[i - 1].freq_hz, f1 = sorted[i].freq_hz;
      const double g0 = spec_db_or_floor(sorted[i - 1].gain_db);
      const double g1 = spec_db_or_floor(sorted[i].gain_db);
      if (f1 <= f0) return g1;
      const double t = (f - f0) / (f1 - f0);
      return g0 + t * (g1 - g0);
    }
  }
  return spec_db_or_floor(sorted.back().gain_db);
}

}  // namespace

std::vector<cplx> design_fir_complex(const std::vector<FirSpecPoint>& spec, int length,
                                     double sample_rate, const FirDesignOptions& opts) {
  if (length < 8) throw std::invalid_argument("design_fir: length must be >= 8");
  if (spec.empty()) throw std::invalid_argument("design_fir: empty spec");
  const int n = std::max(opts.grid_size, 4 * length);
  if ((n & (n - 1)) != 0) throw std::invalid_argument("design_fir: grid size must be a power of two");

  std::vector<FirSpecPoint> pts = spec;
  if (opts.symmetric) {
    // Mirror finite-frequency points to negative frequencies.
    std::vector<FirSpecPoint> mirrored;
    for (const auto& p : pts) {
      mirrored.push_back(p);
      if (p.freq_hz > 0.0) mirrored.push_back({-p.freq_hz, p.gain_db});
    }
    pts = std::move(mirrored);
  }
  std::sort(pts.begin(), pts.end(),
            [](const FirSpecPoint& a, const FirSpecPoint& b) { return a.freq_hz < b.freq_hz; });
  for (const auto& p : pts) {
    if (std::abs(p.freq_hz) > sample_rate / 2.0 * (1.0 + 1e-12))
      throw std::invalid_argument("design_fir: spec frequency beyond Nyquist");
  }

  // Zero-phase target on the DFT grid.
  std::vector<double> target_db((std::size_t)n);
  for (int j = 0; j < n; ++j) {
    double f = (double)j / n * sample_rate;
    if (f >= sample_rate / 2.0) f -= sample_rate;
    target_db[(std::size_t)j] = interp_target_db(pts, f);
  }

  const int half = length / 2;
  std::vector<cplx> taps((std::size_t)length);
  std::vector<double> shaped = target_db;
  std::vector<cplx> grid((std::size_t)n);
  for (int pass = 0; pass < std::max(1, opts.iterations); ++pass) {
    for (int j = 0; j < n; ++j) grid[(std::size_t)j] = std::pow(10.0, shaped[(std::size_t)j] / 20.0);
    ifft(grid);
    for (int t = 0; t < length; ++t) {
      const int k = t - half;  // centered index
      const int src = (k % n + n) % n;
      double w = 1.0;
      if (opts.window_hann) w = 0.5 * (1.0 - std::cos(2.0 * kPi * (double)t / (double)length));
      taps[(std::size_t)t] = grid[(std::size_t)src] * w;
    }
    if (pass + 1 == std::max(1, opts.iterations)) break;

    // Windowing smears sharp targets; push the sampled design back toward
    // the spec where the target is not a deep-stop floor.
    std::vector<cplx> resp((std::size_t)n, 0.0);
    for (int t = 0; t < length; ++t) {
      const int k = t - half;
      resp[(std::size_t)((k % n + n) % n)] = taps[(std::size_t)t];
    }
    fft(resp);
    for (int j = 0; j < n; ++j) {
      if (target_db[(std::size_t)j] <= -120.0) continue;
      const double got = 20.0 * std::log10(std::max(std::abs(resp[(std::size_t)j]), 1e-300));
      const double corr = std::clamp(target_db[(std::size_t)j] - got, -12.0, 12.0);
      shaped[(std::size_t)j] = std::clamp(shaped[(std::size_t)j] + corr, -300.0, 60.0);
    }
  }
  return taps;
}

std::vector<double> design_fir(const std::vector<FirSpecPoint>& spec, int length,
                               double sample_rate, const FirDesignOptions& opts) {
  auto ctaps = design_fir_complex(spec, length, sample_rate, opts);
  std::vector<double> taps(ctaps.size());
  for (std::size_t i = 0; i < ctaps.size(); ++i) taps[i] = ctaps[i].real();

  // Feasibility: every finite spec point must be met within the margin.
  std::vector<double> freqs;
  std::vector<double> targets;
  for (const auto& p : spec) {
    if (std::isfinite(p.gain_db)) {
      freqs.push_back(p.freq_hz);
      targets.push_back(p.gain_db);
    }
  }
  const auto got = fir_response_db(taps, freqs, sample_rate);
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    if (std::abs(got[i] - targets[i]) > opts.check_tol_db)
      throw std::runtime_error("design_fir: spec infeasible for given length");
  }
  return taps;
}

namespace {
template <typename T>
std::vector<double> response_db_impl(const std::vector<T>& taps, const std::vector<double>& freqs,
                                     double sample_rate) {
  std::vector<double> out(freqs.size());
  const int half = (int)taps.size() / 2;
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    const double w = 2.0 * kPi * freqs[i] / sample_rate;
    cplx acc = 0.0;
    for (std::size_t t = 0; t < taps.size(); ++t) {
      const double k = (double)((int)t - half);
      acc += cplx(taps[t]) * std::exp(cplx(0.0, -w * k));
    }
    out[i] = 20.0 * std::log10(std::max(std::abs(acc), 1e-300));
  }
  return out;
}
}  // namespace

std::vector<double> fir_response_db(const std::vector<double>& taps, const std::vector<double>& freqs,
                                    double sample_rate) {
  return response_db_impl(taps, freqs, sample_rate);
}
std::vector<double> fir_response_db(const std::vector<cplx>& taps, const std::vector<double>& freqs,
                                    double sample_rate) {
  return response_db_impl(taps, freqs, sample_rate);
}

double inv_sinc(double x) {
  if (std::abs(x) < 1e-4) {
    const double x2 = x * x;
    return 1.0 + x2 / 6.0 + 7.0 * x2 * x2 / 360.0;
  }
  return x / std::sin(x);
}

double u64_to_unit(std::uint64_t r) { return (double)(r >> 11) * 0x1.0p-53; }

double RotationIdentityReport::worst() const {
  return std::max({commutativity, negation, difference, integral, scaled_decomposition});
}

namespace {

// 10-point Gauss-Legendre nodes/weights on [-1, 1].
const double kGlNode[10] = {-0.9739065285171717, -0.8650633666889845, -0.6794095682990244,
                            -0.4333953941292472, -0.1488743389816312, 0.1488743389816312,
                            0.4333953941292472,  0.6794095682990244,  0.8650633666889845,
                            0.9739065285171717};
const double kGlWeight[10] = {0.0666713443086881, 0.1494513491505806, 0.2190863625159820,
                              0.2692667193099963, 0.2955242247147529, 0.2955242247147529,
                              0.2692667193099963, 0.2190863625159820, 0.1494513491505806,
                              0.0666713443086881};

Mat2 integrate_rotation(double phi, double lo, double hi, int panels) {
  Mat2 acc = Mat2::Zero();
  const double h = (hi - lo) / panels;
  for (int p = 0; p < panels; ++p) {
    const double a = lo + p * h, mid = a + h / 2.0, scale = h / 2.0;
    for (int g = 0; g < 10; ++g) acc += kGlWeight[g] * scale * rotation(phi * (mid + scale * kGlNode[g]));
  }
  return acc;
}

}  // namespace

RotationIdentityReport verify_rotation_identities(int draws, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double lo, double hi) { return lo + (hi - lo) * u64_to_unit(rng()); };

  RotationIdentityReport rep;
  for (int i = 0; i < draws; ++i) {
    const double a = uniform(-10.0, 10.0), b = uniform(-10.0, 10.0);
    rep.commutativity = std::max(rep.commutativity,
                                 (rotation(a) * rotation(b) - rotation(a + b)).cwiseAbs().maxCoeff());
    rep.commutativity = std::max(rep.commutativity,
                                 (rotation(a) * rotation(b) - rotation(b) * rotation(a)).cwiseAbs().maxCoeff());
    rep.negation = std::max(rep.negation, ((-rotation(a)) - rotation(a + kPi)).cwiseAbs().maxCoeff());
    rep.difference = std::max(
        rep.difference,
        (rotation(a) - rotation(-a) - 2.0 * std::sin(a) * rotation(kPi / 2.0)).cwiseAbs().maxCoeff());

    // Scaled decomposition, all quadrants (atan2, not arctan).
    const double x = uniform(-5.0, 5.0), y = uniform(-5.0, 5.0);
    Mat2 m;
    m << x, -y, y, x;
    const Mat2 rhs = std::hypot(x, y) * rotation(std::atan2(y, x));
    rep.scaled_decomposition = std::max(rep.scaled_decomposition, (m - rhs).cwiseAbs().maxCoeff());

    // Integral identity against quadrature: int_{-d}^{d} R(phi t) dt = (2/phi) sin(phi d) I.
    const double phi = uniform(0.1, 4.0), d = uniform(0.1, 2.0);
    const Mat2 closed = (2.0 / phi) * std::sin(phi * d) * Mat2::Identity();
    const Mat2 quad = integrate_rotation(phi, -d, d, 16);
    rep.integral = std::max(rep.integral, (closed - quad).cwiseAbs().maxCoeff());
  }
  return rep;
}

}  // namespace qlf
