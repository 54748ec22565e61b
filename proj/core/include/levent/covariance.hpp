#pragma once

#include <array>
#include <string>
#include <string_view>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace levent {

enum class Provenance { model_route, direct_route, intracavity, external };

std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

/// Two-mode covariance matrix V_ij = ½⟨{u_i, u_j}⟩ with vacuum V = I.
/// The first pair of the basis is the optical mode, the second the mechanics.
struct CovMatrix {
  Eigen::Matrix4d v = Eigen::Matrix4d::Identity();
  std::array<std::string, 4> basis{"Q_xi", "P_xi", "x_b", "p_b"};
  Provenance provenance = Provenance::external;
  std::string params_hash;

  Eigen::Matrix2d optical() const { return v.topLeftCorner<2, 2>(); }
  Eigen::Matrix2d mechanical() const { return v.bottomRightCorner<2, 2>(); }
  Eigen::Matrix2d cross() const { return v.topRightCorner<2, 2>(); }
};

/// Two-mode symplectic form with unit blocks.
Eigen::Matrix4d symplectic_form4();

inline constexpr const char* kCovSchema = "levent-cov/1";

/// JSON with the 10 unique entries V_ij (i ≤ j, 1-based keys "V_ij").
nlohmann::json to_json(const CovMatrix& cm);
CovMatrix cov_from_json(const nlohmann::json& j);

}  // namespace levent
