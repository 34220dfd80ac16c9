#include "qlf/system.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <json.hpp>

namespace qlf {

namespace {
constexpr double kPi = std::numbers::pi;
}

LeapfrogDesign leapfrog_design(int order_n, int osr, double omega_b) {
  if (order_n < 1 || osr < 1 || !(omega_b > 0.0))
    throw std::invalid_argument("leapfrog_design: need order_n >= 1, osr >= 1, omega_b > 0");
  LeapfrogDesign d;
  d.order_n = order_n;
  d.osr = osr;
  d.omega_b = omega_b;
  d.beta = omega_b * (double)osr / (2.0 * kPi);
  d.kappa = -d.beta;
  d.alpha = omega_b * omega_b / (4.0 * d.kappa);
  d.f_s = 2.0 * d.beta;
  d.t_s = 1.0 / d.f_s;
  return d;
}

Frontend leapfrog_lowpass(int order_n, int osr, double omega_b) {
  Frontend fe;
  fe.design = leapfrog_design(order_n, osr, omega_b);
  const int n = order_n;

  StateSpaceModel m;
  m.a = Mat::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) {
    m.a(i, i + 1) = fe.design.alpha;
    m.a(i + 1, i) = fe.design.beta;
  }
  m.b = Mat::Zero(n, 1);
  m.b(0, 0) = fe.design.beta;
  m.gamma_ctrl = fe.design.kappa * Mat::Identity(n, n);
  m.output_rows = {n - 1};
  m.quadrature = false;
  m.omega_n = 0.0;
  for (int i = 0; i < n; ++i) m.channel_labels.push_back("s" + std::to_string(i + 1));

  fe.model = std::move(m);
  fe.obs = Mat::Identity(n, n);
  return fe;
}

Frontend quadrature_extend(const Frontend& lp, double omega_n, double phi_kappa, double tau_dc) {
  if (lp.model.quadrature) throw std::invalid_argument("quadrature_extend: model already quadrature");
  if (omega_n < 0.0 || omega_n >= kPi * lp.design.f_s)
    throw std::invalid_argument("quadrature_extend: omega_n out of [0, pi*f_s)");

  const int n = lp.model.n();
  Frontend fe;
  fe.design = lp.design;
  fe.tau_dc = tau_dc;
  const auto qp = derive_control_params(fe.design.beta, omega_n, phi_kappa, tau_dc);
  fe.qparams = qp;

  StateSpaceModel m;
  m.a = Mat::Zero(2 * n, 2 * n);
  m.a.topLeftCorner(n, n) = lp.model.a;
  m.a.bottomRightCorner(n, n) = lp.model.a;
  m.a.topRightCorner(n, n) = -omega_n * Mat::Identity(n, n);
  m.a.bottomLeftCorner(n, n) = omega_n * Mat::Identity(n, n);
  m.b = Mat::Zero(2 * n, 2);
  m.b.block(0, 0, n, 1) = lp.model.b;
  m.b.block(n, 1, n, 1) = lp.model.b;

  // Channel ordering [s_1..s_N, sbar_1..sbar_N]; DAC pair [[k, -kb], [kb, k]].
  m.gamma_ctrl = Mat::Zero(2 * n, 2 * n);
  for (int i = 0; i < n; ++i) {
    m.gamma_ctrl(i, i) = qp.kappa_phi;
    m.gamma_ctrl(n + i, i) = qp.bar_kappa_phi;
    m.gamma_ctrl(i, n + i) = -qp.bar_kappa_phi;
    m.gamma_ctrl(n + i, n + i) = qp.kappa_phi;
  }
  m.output_rows = {n - 1, 2 * n - 1};
  m.quadrature = true;
  m.omega_n = omega_n;
  for (int i = 0; i < n; ++i) m.channel_labels.push_back("s" + std::to_string(i + 1));
  for (int i = 0; i < n; ++i) m.channel_labels.push_back("sbar" + std::to_string(i + 1));
  fe.model = std::move(m);

  fe.obs = Mat::Zero(2 * n, 2 * n);
  for (int i = 0; i < n; ++i) {
    fe.obs(i, i) = qp.tilde_kappa_phi;
    fe.obs(i, n + i) = -qp.bar_tilde_kappa_phi;
    fe.obs(n + i, i) = qp.bar_tilde_kappa_phi;
    fe.obs(n + i, n + i) = qp.tilde_kappa_phi;
  }
  return fe;
}

namespace {

Eigen::PartialPivLU<CMat> factor_resolvent(const StateSpaceModel& model, double omega, double sigma) {
  const int n = model.n();
  CMat m = CMat::Zero(n, n);
  m.diagonal().setConstant(cplx(sigma, omega));
  m -= model.a.cast<cplx>();
  Eigen::PartialPivLU<CMat> lu(m);
  // An exactly-singular resolvent shows up as a (near-)zero pivot.
  const double pivot_min = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
  const double scale = std::max(model.a.cwiseAbs().maxCoeff(), std::abs(omega));
  if (sigma == 0.0 && pivot_min < 1e-14 * std::max(scale, 1.0)) throw PoleError(omega);
  return lu;
}

}  // namespace

CVec transfer_function(const StateSpaceModel& model, double omega, int input_channel) {
  if (input_channel < 0 || input_channel >= model.m_u())
    throw std::invalid_argument("transfer_function: bad input channel");
  auto lu = factor_resolvent(model, omega, 0.0);
  CVec rhs = model.b.col(input_channel).cast<cplx>();
  CVec g = lu.solve(rhs);
  if (!g.allFinite()) throw PoleError(omega);
  return g;
}

TransferPoint transfer_at(const StateSpaceModel& model, double omega, double sigma) {
  auto lu = factor_resolvent(model, omega, sigma);
  CMat rhs(model.n(), model.m_u() + model.m_s());
  rhs << model.b.cast<cplx>(), model.gamma_ctrl.cast<cplx>();
  CMat x = lu.solve(rhs);
  if (!x.allFinite()) throw PoleError(omega);
  TransferPoint tp;
  const int outs = (int)model.output_rows.size();
  tp.from_u.resize(outs, model.m_u());
  tp.from_ctrl.resize(outs, model.m_s());
  for (int r = 0; r < outs; ++r) {
    tp.from_u.row(r) = x.row(model.output_rows[r]).head(model.m_u());
    tp.from_ctrl.row(r) = x.row(model.output_rows[r]).tail(model.m_s());
  }
  return tp;
}

cplx analytic_transfer(const StateSpaceModel& model, double omega, double sigma) {
  const auto tp = transfer_at(model, omega, sigma);
  if (!model.quadrature) return tp.from_u(0, 0);
  // Circular part of the 2x2 block: response of x_N + i x_bar_N to e^{i w t}.
  const cplx m11 = tp.from_u(0, 0), m12 = tp.from_u(0, 1);
  const cplx m21 = tp.from_u(1, 0), m22 = tp.from_u(1, 1);
  return 0.5 * (m11 + m22) + cplx(0.0, 0.5) * (m21 - m12);
}

double predicted_snr_db(int order_n, int osr, double xi) {
  if (!(xi > 0.0)) throw std::invalid_argument("predicted_snr_db: xi must be > 0");
  const double gi = std::ldexp(1.0, 2 * order_n - 1);
  return 10.0 * std::log10(gi / xi) + 20.0 * order_n * std::log10((double)osr / (2.0 * kPi));
}

Frontend opamp_augment(const Frontend& fe, double k_a, double omega_a) {
  if (!(k_a > 0.0) || !(omega_a > 0.0))
    throw std::invalid_argument("opamp_augment: gains must be positive");

  const StateSpaceModel& m = fe.model;
  const int n = m.n();
  // States [x (op-amp outputs), w (virtual-ground nodes)].
  // x_l' = -omega_a x_l - k_a omega_a w_l
  // w_l' = x_l' - F_l(x, u, d) - sigma_l w_l, sigma_l = sum of node conductances / C.
  Frontend out = fe;
  StateSpaceModel am;
  am.a = Mat::Zero(2 * n, 2 * n);
  am.b = Mat::Zero(2 * n, m.m_u());
  am.gamma_ctrl = Mat::Zero(2 * n, m.m_s());

  Vec sigma = Vec::Zero(n);
  for (int i = 0; i < n; ++i) {
    sigma(i) = m.a.row(i).cwiseAbs().sum() + m.b.row(i).cwiseAbs().sum() +
               m.gamma_ctrl.row(i).cwiseAbs().sum();
    if (fe.ref_channels > 0) sigma(i) += fe.gamma_ref.row(i).cwiseAbs().sum();
  }

  for (int i = 0; i < n; ++i) {
    am.a(i, i) = -omega_a;
    am.a(i, n + i) = -k_a * omega_a;
    am.a(n + i, i) = -omega_a;
    am.a(n + i, n + i) = -k_a * omega_a - sigma(i);
    am.a.row(n + i).head(n) -= m.a.row(i);
    am.b.row(n + i) = -m.b.row(i);
    am.gamma_ctrl.row(n + i) = -m.gamma_ctrl.row(i);
  }
  am.output_rows = m.output_rows;  // op-amp outputs keep the original indices
  am.channel_labels = m.channel_labels;
  am.quadrature = m.quadrature;
  am.omega_n = m.omega_n;

  out.model = std::move(am);
  // Comparators still tap the op-amp output voltages.
  Mat obs = Mat::Zero(fe.obs.rows(), 2 * n);
  obs.leftCols(n) = fe.obs;
  out.obs = std::move(obs);
  if (fe.ref_channels > 0) {
    Mat gr = Mat::Zero(2 * n, fe.ref_channels);
    for (int i = 0; i < n; ++i) gr.row(n + i) = -fe.gamma_ref.row(i);
    out.gamma_ref = std::move(gr);
  }
  return out;
}

std::set<ParamClass> PerturbationSpec::all_targets() {
  return {ParamClass::Alpha,        ParamClass::Beta,          ParamClass::OmegaN,
          ParamClass::KappaPhi,     ParamClass::BarKappaPhi,   ParamClass::TildeKappaPhi,
          ParamClass::BarTildeKappaPhi};
}

Frontend perturb(const Frontend& fe, const PerturbationSpec& spec) {
  if (spec.relative_bound < 0.0 || spec.relative_bound >= 0.5)
    throw std::invalid_argument("perturb: relative_bound must be in [0, 0.5)");
  if (fe.model.n() != (fe.model.quadrature ? 2 * fe.design.order_n : fe.design.order_n))
    throw std::invalid_argument("perturb: expects an unaugmented leapfrog frontend");

  Frontend out = fe;
  std::mt19937_64 rng(spec.seed);
  const double r = spec.relative_bound;
  auto draw = [&rng, r]() { return 1.0 + r * (2.0 * u64_to_unit(rng()) - 1.0); };
  // Draw order is fixed by the structural walk below, so a given seed yields
  // byte-identical matrices; untargeted classes still consume their draws.
  auto scale = [&](double& entry, ParamClass cls) {
    const double f = draw();
    if (spec.targets.count(cls) != 0 && entry != 0.0) entry *= f;
  };

  const int n = fe.design.order_n;
  const int branches = fe.model.quadrature ? 2 : 1;
  for (int br = 0; br < branches; ++br) {
    const int o = br * n;
    for (int i = 0; i + 1 < n; ++i) scale(out.model.a(o + i, o + i + 1), ParamClass::Alpha);
    for (int i = 0; i + 1 < n; ++i) scale(out.model.a(o + i + 1, o + i), ParamClass::Beta);
    scale(out.model.b(o, br), ParamClass::Beta);
  }
  if (fe.model.quadrature) {
    for (int i = 0; i < n; ++i) {
      scale(out.model.a(i, n + i), ParamClass::OmegaN);
      scale(out.model.a(n + i, i), ParamClass::OmegaN);
    }
    for (int i = 0; i < n; ++i) {
      scale(out.model.gamma_ctrl(i, i), ParamClass::KappaPhi);
      scale(out.model.gamma_ctrl(n + i, n + i), ParamClass::KappaPhi);
      scale(out.model.gamma_ctrl(n + i, i), ParamClass::BarKappaPhi);
      scale(out.model.gamma_ctrl(i, n + i), ParamClass::BarKappaPhi);
      scale(out.obs(i, i), ParamClass::TildeKappaPhi);
      scale(out.obs(n + i, n + i), ParamClass::TildeKappaPhi);
      scale(out.obs(n + i, i), ParamClass::BarTildeKappaPhi);
      scale(out.obs(i, n + i), ParamClass::BarTildeKappaPhi);
    }
  } else {
    // Low-pass DAC gains kappa = -beta belong to the KappaPhi class.
    for (int i = 0; i < n; ++i) scale(out.model.gamma_ctrl(i, i), ParamClass::KappaPhi);
  }
  return out;
}

std::string StateSpaceModel::to_json() const {
  nlohmann::json j;
  auto mat_to_json = [](const Mat& m) {
    nlohmann::json arr = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index k = 0; k < m.cols(); ++k) arr.push_back(m(i, k));
    return arr;
  };
  j["n"] = n();
  j["m_u"] = m_u();
  j["m_s"] = m_s();
  j["a"] = mat_to_json(a);
  j["b"] = mat_to_json(b);
  j["gamma_ctrl"] = mat_to_json(gamma_ctrl);
  j["output_rows"] = output_rows;
  j["channel_labels"] = channel_labels;
  j["quadrature"] = quadrature;
  j["omega_n"] = omega_n;
  return j.dump();
}

StateSpaceModel StateSpaceModel::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  StateSpaceModel m;
  const int n = j.at("n"), mu = j.at("m_u"), ms = j.at("m_s");
  auto mat_from = [&j](const char* key, int rows, int cols) {
    Mat m(rows, cols);
    const auto& arr = j.at(key);
    for (int i = 0; i < rows; ++i)
      for (int k = 0; k < cols; ++k) m(i, k) = arr.at((std::size_t)i * cols + k);
    return m;
  };
  m.a = mat_from("a", n, n);
  m.b = mat_from("b", n, mu);
  m.gamma_ctrl = mat_from("gamma_ctrl", n, ms);
  m.output_rows = j.at("output_rows").get<std::vector<int>>();
  m.channel_labels = j.at("channel_labels").get<std::vector<std::string>>();
  m.quadrature = j.at("quadrature");
  m.omega_n = j.at("omega_n");
  return m;
}

}  // namespace qlf
