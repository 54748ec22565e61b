#include "levent/covariance.hpp"

#include "levent/error.hpp"

namespace levent {

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::model_route: return "model-route";
    case Provenance::direct_route: return "direct-route";
    case Provenance::intracavity: return "intracavity";
    case Provenance::external: return "external";
  }
  return "external";
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "model-route") return Provenance::model_route;
  if (s == "direct-route") return Provenance::direct_route;
  if (s == "intracavity") return Provenance::intracavity;
  if (s == "external") return Provenance::external;
  throw InvalidInput("unknown provenance '" + std::string(s) + "'");
}

Eigen::Matrix4d symplectic_form4() {
  Eigen::Matrix4d o = Eigen::Matrix4d::Zero();
  o(0, 1) = o(2, 3) = 1.0;
  o(1, 0) = o(3, 2) = -1.0;
  return o;
}

nlohmann::json to_json(const CovMatrix& cm) {
  nlohmann::json j;
  j["schema"] = kCovSchema;
  j["basis"] = cm.basis;
  j["provenance"] = std::string(to_string(cm.provenance));
  j["params_hash"] = cm.params_hash;
  for (int r = 0; r < 4; ++r)
    for (int c = r; c < 4; ++c) j["V_" + std::to_string(r + 1) + std::to_string(c + 1)] = cm.v(r, c);
  return j;
}

CovMatrix cov_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("schema", "") != kCovSchema) {
    throw InvalidInput(std::string("covariance JSON: schema must be '") + kCovSchema + "'");
  }
  CovMatrix cm;
  try {
    if (j.contains("basis")) cm.basis = j.at("basis").get<std::array<std::string, 4>>();
    cm.provenance = provenance_from_string(j.value("provenance", "external"));
    cm.params_hash = j.value("params_hash", "");
    for (int r = 0; r < 4; ++r) {
      for (int c = r; c < 4; ++c) {
        const double v = j.at("V_" + std::to_string(r + 1) + std::to_string(c + 1)).get<double>();
        cm.v(r, c) = cm.v(c, r) = v;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("covariance JSON: ") + e.what());
  }
  return cm;
}

}  // namespace levent
