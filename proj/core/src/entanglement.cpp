#include "levent/entanglement.hpp"

#include <cmath>
#include <limits>

#include "levent/error.hpp"
#include "levent/model.hpp"

namespace levent {

namespace {

void require_symmetric(const Eigen::Matrix4d& v) {
  if (!v.allFinite()) throw InvalidInput("covariance matrix has non-finite entries");
  const double scale = std::max(1.0, v.cwiseAbs().maxCoeff());
  if ((v - v.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw InvalidInput("covariance matrix is not symmetric");
  }
}

// Smaller symplectic eigenvalue of a two-mode matrix from its invariants,
// Δ = det α + det β + 2 det γ (sign of γ chosen by the caller).
double smaller_symplectic(double delta, double det_v) {
  double disc = delta * delta - 4.0 * det_v;
  if (disc < 0.0) {
    if (disc < -1e-12 * std::max(1.0, delta * delta)) {
      throw InvalidInput("covariance matrix has complex symplectic invariants");
    }
    disc = 0.0;
  }
  return std::sqrt(std::max(0.0, 0.5 * (delta - std::sqrt(disc))));
}

}  // namespace

Validation validate_cm(const CovMatrix& cm) {
  require_symmetric(cm.v);
  Validation out;
  out.physicality = physicality_margin(cm.v);
  out.ok = out.physicality >= -kPhysicalityTol;
  const Eigen::Matrix4d& v = cm.v;
  const double delta = v.topLeftCorner<2, 2>().determinant() +
                       v.bottomRightCorner<2, 2>().determinant() +
                       2.0 * v.topRightCorner<2, 2>().determinant();
  // With V = L Lᵀ the Hermitian matrix i Lᵀ Ω L has eigenvalues ±ν_k, which
  // stay accurate when the two symplectic eigenvalues coincide.
  const Eigen::LLT<Eigen::Matrix4d> llt(v);
  if (llt.info() == Eigen::Success) {
    const Eigen::Matrix4d l = llt.matrixL();
    const Eigen::Matrix4cd h = cd(0.0, 1.0) * (l.transpose() * symplectic_form4() * l).cast<cd>();
    const Eigen::Vector4d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd>(h).eigenvalues();
    out.min_symplectic = std::min(std::abs(ev(1)), std::abs(ev(2)));
    return out;
  }
  try {
    out.min_symplectic = smaller_symplectic(delta, v.determinant());
  } catch (const InvalidInput&) {
    out.ok = false;
    out.min_symplectic = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

double nu_min_ppt(const CovMatrix& cm) {
  const Validation val = validate_cm(cm);
  if (!val.ok) {
    throw InvalidInput("covariance matrix violates the uncertainty principle (min eig(V + i*Omega) = " +
                       std::to_string(val.physicality) + ")");
  }
  const Eigen::Matrix4d& v = cm.v;
  // p_b → −p_b flips the sign of det γ and leaves det α, det β, det V unchanged.
  const double delta = v.topLeftCorner<2, 2>().determinant() +
                       v.bottomRightCorner<2, 2>().determinant() -
                       2.0 * v.topRightCorner<2, 2>().determinant();
  return smaller_symplectic(delta, v.determinant());
}

double log_negativity(double nu) {
  if (!(nu > 0.0)) throw InvalidInput("log_negativity: nu must be positive");
  return std::max(0.0, -std::log2(nu));
}

double duan_sum(const CovMatrix& cm) {
  const Validation val = validate_cm(cm);
  if (!val.ok) throw InvalidInput("duan_sum: invalid covariance matrix");
  const Eigen::Matrix2d g = cm.cross();
  Eigen::Matrix2d z;
  z << 1, 0, 0, -1;
  Eigen::Matrix2d j;
  j << 0, 1, -1, 0;
  // Only the sum of the two local rotation angles matters; the optimum over
  // it has this closed form.
  const double c = (z * g).trace();
  const double s = (z * g * j).trace();
  return cm.optical().trace() + cm.mechanical().trace() - 2.0 * std::hypot(c, s);
}

EntanglementReport analyze(const CovMatrix& cm) {
  EntanglementReport r;
  r.provenance = cm.provenance;
  const Validation val = validate_cm(cm);
  r.valid = val.ok;
  if (!val.ok) {
    r.nu_minus = std::numeric_limits<double>::quiet_NaN();
    r.log_neg = std::numeric_limits<double>::quiet_NaN();
    r.duan = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  r.nu_minus = nu_min_ppt(cm);
  r.log_neg = log_negativity(r.nu_minus);
  r.duan = duan_sum(cm);
  return r;
}

nlohmann::json to_json(const EntanglementReport& r) {
  auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
  return {{"nu_minus", num(r.nu_minus)},
          {"E_N", num(r.log_neg)},
          {"duan_sum", num(r.duan)},
          {"valid", r.valid},
          {"provenance", std::string(to_string(r.provenance))}};
}

}  // namespace levent
