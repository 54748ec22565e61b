#pragma once

#include <nlohmann/json.hpp>

#include "levent/covariance.hpp"

namespace levent {

struct Validation {
  bool ok = false;
  double min_symplectic = 0.0;  ///< smallest symplectic eigenvalue of V
  double physicality = 0.0;     ///< min eig(V + iΩ)
};

inline constexpr double kPhysicalityTol = 1e-9;

/// Bona fide Gaussian state check. Throws InvalidInput if V is not symmetric.
Validation validate_cm(const CovMatrix& cm);

/// Smallest symplectic eigenvalue of the partial transpose (p_b → −p_b),
/// vacuum = 1. Throws InvalidInput for invalid V.
double nu_min_ppt(const CovMatrix& cm);

/// max(0, −log₂ ν). Throws InvalidInput for ν ≤ 0.
double log_negativity(double nu);

/// min over local phase rotations of Var(Q_ξ − x_b) + Var(P_ξ + p_b); 4 for
/// vacuum, below 4 only for entangled states.
double duan_sum(const CovMatrix& cm);

struct EntanglementReport {
  double nu_minus = 1.0;
  double log_neg = 0.0;
  double duan = 4.0;
  bool valid = false;
  Provenance provenance = Provenance::external;
};

EntanglementReport analyze(const CovMatrix& cm);
nlohmann::json to_json(const EntanglementReport& r);

}  // namespace levent
