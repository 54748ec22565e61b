#pragma once

#include <complex>

#include <Eigen/Dense>

#include "levent/covariance.hpp"
#include "levent/params.hpp"

namespace levent {

using cd = std::complex<double>;
using Mat8 = Eigen::Matrix<double, 8, 8>;
using Mat8c = Eigen::Matrix<cd, 8, 8>;
using Mat4 = Eigen::Matrix4d;
using Mat4c = Eigen::Matrix4cd;

/// State ordering of the linearized dynamics.
enum StateIndex : int { kXA = 0, kYA, kXB, kYB, kXx, kPx, kXy, kPy };

/// Linear stochastic model du/dt = M u + noise for
/// u = (X_A, Y_A, X_B, Y_B, x_x, p_x, x_y, p_y), quadratures normalized so
/// that [X, Y] = 2i and vacuum variance is 1.
struct DriftModel {
  Mat8 drift;        ///< M
  Mat8 diffusion;    ///< D, symmetrized white-noise strength
  Mat8c input_noise; ///< unsymmetrized input correlations N_in; Re N_in = D
  SystemParams params;
};

/// Bilinear (non-RWA) coupling H = ħ Σ g_{α,j} X_α x_j with g_{α,x} = g_α cosθ,
/// g_{α,y} = g_α sinθ. Throws InvalidInput for invalid parameters.
DriftModel build_drift(const SystemParams& params);

struct Stability {
  bool is_stable = false;
  double margin = 0.0;  ///< −max Re eig(M), rad/s
};

Stability stability(const DriftModel& model);

/// Steady-state covariance solving M V + V Mᵀ + D = 0.
/// Throws UnstableDrift if M is not Hurwitz.
Mat8 steady_covariance(const DriftModel& model);

/// General Lyapunov solve for a Hurwitz matrix of any size (Kronecker form).
Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& m, const Eigen::MatrixXd& d);

/// Joint covariance of the intracavity field B and the bright mode,
/// basis (X_B, Y_B, x_b, p_b). Throws UnstableDrift.
CovMatrix intracavity_cov(const DriftModel& model);

/// Rows map u to (X_B, Y_B, x_b, p_b), with x_b = cosθ x_x + sinθ x_y.
Eigen::Matrix<double, 4, 8> intracavity_selector(double theta);

/// 8-mode symplectic form for the ordering above (unit blocks [[0,1],[-1,0]]).
Mat8 symplectic_form8();

/// Smallest eigenvalue of the Hermitian matrix V + iΩ; ≥ 0 for physical states.
double physicality_margin(const Eigen::MatrixXd& v);

}  // namespace levent
