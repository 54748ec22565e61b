#include "levent/model.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "levent/error.hpp"

namespace levent {

DriftModel build_drift(const SystemParams& params) {
  params.validate();
  const auto& p = params;
  DriftModel m;
  m.params = p;
  m.drift.setZero();
  m.diffusion.setZero();
  m.input_noise.setZero();

  const double k = p.kappa;
  const double c = std::cos(p.theta);
  const double s = std::sin(p.theta);
  const double delta[2] = {p.delta_a, p.delta_b};
  const double g[2] = {p.g_a, p.g_b};
  const double omega[2] = {p.omega_x, p.omega_y};
  const double proj[2] = {c, s};
  const double damping[2] = {p.damping_x, p.damping_y};
  const double heating[2] = {p.heating_x, p.heating_y};

  for (int a = 0; a < 2; ++a) {
    const int X = 2 * a, Y = 2 * a + 1;
    m.drift(X, X) = -0.5 * k;
    m.drift(X, Y) = -delta[a];
    m.drift(Y, X) = delta[a];
    m.drift(Y, Y) = -0.5 * k;
    for (int j = 0; j < 2; ++j) {
      const int x = kXx + 2 * j, pp = kPx + 2 * j;
      m.drift(Y, x) += -2.0 * g[a] * proj[j];
      m.drift(pp, X) += -2.0 * g[a] * proj[j];
    }
    m.diffusion(X, X) = k;
    m.diffusion(Y, Y) = k;
    m.input_noise(X, X) = k;
    m.input_noise(Y, Y) = k;
    m.input_noise(X, Y) = cd(0.0, k);
    m.input_noise(Y, X) = cd(0.0, -k);
  }
  for (int j = 0; j < 2; ++j) {
    const int x = kXx + 2 * j, pp = kPx + 2 * j;
    m.drift(x, pp) = omega[j];
    m.drift(pp, x) = -omega[j];
    m.drift(pp, pp) = -damping[j];
    // Zero bath occupation: damping adds only its vacuum share.
    const double dpp = 4.0 * heating[j] + 2.0 * damping[j];
    m.diffusion(pp, pp) = dpp;
    m.input_noise(pp, pp) = dpp;
  }
  return m;
}

Stability stability(const DriftModel& model) {
  Eigen::EigenSolver<Mat8> es(model.drift, false);
  const double max_re = es.eigenvalues().real().maxCoeff();
  // Marginal modes (κ = 0 or an undamped uncoupled oscillator) must not count
  // as stable through round-off.
  const double scale = model.drift.cwiseAbs().maxCoeff();
  const double tol = 1e-12 * std::max(scale, 1.0);
  Stability s;
  s.margin = -max_re;
  s.is_stable = max_re < -tol;
  if (std::abs(max_re) <= tol) s.margin = 0.0;
  return s;
}

Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& m, const Eigen::MatrixXd& d) {
  const Eigen::Index n = m.rows();
  if (m.cols() != n || d.rows() != n || d.cols() != n) {
    throw InvalidInput("solve_lyapunov: dimension mismatch");
  }
  // (I ⊗ M + M ⊗ I) vec(V) = −vec(D), column-major vec.
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd big = Eigen::MatrixXd::Zero(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      big.block(i * n, j * n, n, n) += id(i, j) * m;
      big.block(i * n, j * n, n, n) += m(i, j) * id;
    }
  }
  Eigen::VectorXd rhs = -Eigen::Map<const Eigen::VectorXd>(d.data(), n * n);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(big);
  if (!lu.isInvertible()) throw SingularMatrix("Lyapunov operator is singular");
  Eigen::VectorXd x = lu.solve(rhs);
  Eigen::MatrixXd v = Eigen::Map<Eigen::MatrixXd>(x.data(), n, n);
  v = 0.5 * (v + v.transpose()).eval();
  return v;
}

Mat8 steady_covariance(const DriftModel& model) {
  const Stability st = stability(model);
  if (!st.is_stable) {
    throw UnstableDrift("max Re eig(M) = " + std::to_string(-st.margin) + " rad/s");
  }
  Mat8 v = solve_lyapunov(model.drift, model.diffusion);
  const double resid = (model.drift * v + v * model.drift.transpose() + model.diffusion)
                           .cwiseAbs()
                           .maxCoeff();
  const double dscale = model.diffusion.cwiseAbs().maxCoeff();
  if (resid > 1e-9 * std::max(dscale, 1e-300)) {
    throw NumericalError("Lyapunov residual " + std::to_string(resid) + " too large");
  }
  return v;
}

Eigen::Matrix<double, 4, 8> intracavity_selector(double theta) {
  Eigen::Matrix<double, 4, 8> r = Eigen::Matrix<double, 4, 8>::Zero();
  const double c = std::cos(theta), s = std::sin(theta);
  r(0, kXB) = 1.0;
  r(1, kYB) = 1.0;
  r(2, kXx) = c;
  r(2, kXy) = s;
  r(3, kPx) = c;
  r(3, kPy) = s;
  return r;
}

CovMatrix intracavity_cov(const DriftModel& model) {
  const Mat8 v8 = steady_covariance(model);
  const auto r = intracavity_selector(model.params.theta);
  CovMatrix cm;
  cm.v = r * v8 * r.transpose();
  cm.v = 0.5 * (cm.v + cm.v.transpose()).eval();
  cm.basis = {"X_B", "Y_B", "x_b", "p_b"};
  cm.provenance = Provenance::intracavity;
  return cm;
}

Mat8 symplectic_form8() {
  Mat8 o = Mat8::Zero();
  for (int i = 0; i < 4; ++i) {
    o(2 * i, 2 * i + 1) = 1.0;
    o(2 * i + 1, 2 * i) = -1.0;
  }
  return o;
}

double physicality_margin(const Eigen::MatrixXd& v) {
  const Eigen::Index n = v.rows();
  if (v.cols() != n || n % 2 != 0) throw InvalidInput("physicality_margin: need an even square matrix");
  Eigen::MatrixXcd h = v.cast<cd>();
  for (Eigen::Index i = 0; i < n; i += 2) {
    h(i, i + 1) += cd(0.0, 1.0);
    h(i + 1, i) += cd(0.0, -1.0);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace levent
