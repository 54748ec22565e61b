#include "levent/params.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "levent/error.hpp"
#include "levent/hash.hpp"

namespace levent {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw InvalidInput("invalid parameters: " + msg);
}

bool finite_all(const SystemParams& p) {
  for (double v : {p.omega_x, p.omega_y, p.theta, p.damping_x, p.damping_y, p.heating_x,
                   p.heating_y, p.kappa, p.eta, p.delta_a, p.delta_b, p.g_a, p.g_b, p.phi_a,
                   p.phi_b, p.omega_b.value_or(0.0)}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double read_hz(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw InvalidInput(std::string("parameter file: missing '") + key + "'");
  if (!j.at(key).is_number()) throw InvalidInput(std::string("parameter file: '") + key + "' is not a number");
  return j.at(key).get<double>();
}

double read_opt(const nlohmann::json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw InvalidInput(std::string("parameter file: '") + key + "' is not a number");
  return j.at(key).get<double>();
}

}  // namespace

void SystemParams::validate() const {
  require(finite_all(*this), "non-finite value");
  require(omega_x > 0.0 && omega_y > 0.0, "mechanical frequencies must be positive");
  require(theta >= 0.0 && theta < std::numbers::pi / 2.0, "theta must lie in [0, pi/2)");
  require(damping_x >= 0.0 && damping_y >= 0.0, "damping rates must be non-negative");
  require(heating_x >= 0.0 && heating_y >= 0.0, "heating rates must be non-negative");
  require(kappa > 0.0, "kappa must be positive");
  require(eta > 0.0 && eta <= 1.0, "eta must lie in (0, 1]");
  require(g_a >= 0.0 && g_b >= 0.0, "couplings must be non-negative");
  if (omega_b) {
    const double lo = std::min(omega_x, omega_y);
    const double hi = std::max(omega_x, omega_y);
    require(*omega_b >= lo && *omega_b <= hi, "omega_b must lie between omega_x and omega_y");
  }
}

SystemParams SystemParams::best_dataset() {
  SystemParams p;
  p.omega_x = hz(110.6e3);
  p.omega_y = hz(98.4e3);
  p.omega_b = hz(106e3);
  p.theta = std::numbers::pi / 4.0;
  p.heating_x = hz(3.00e3);
  p.heating_y = hz(2.67e3);
  p.kappa = hz(58e3);
  p.eta = 0.283;
  p.g_a = hz(11.7e3);
  p.g_b = hz(6.3e3);
  p.delta_a = -hz(106e3);
  p.delta_b = hz(106e3);
  return p;
}

nlohmann::json to_json(const SystemParams& p) {
  nlohmann::json j;
  j["schema"] = kParamsSchema;
  j["omega_x_hz"] = to_hz(p.omega_x);
  j["omega_y_hz"] = to_hz(p.omega_y);
  if (p.omega_b) j["omega_b_hz"] = to_hz(*p.omega_b);
  j["theta_rad"] = p.theta;
  j["damping_x_hz"] = to_hz(p.damping_x);
  j["damping_y_hz"] = to_hz(p.damping_y);
  j["heating_x_hz"] = to_hz(p.heating_x);
  j["heating_y_hz"] = to_hz(p.heating_y);
  j["kappa_hz"] = to_hz(p.kappa);
  j["eta"] = p.eta;
  j["delta_a_hz"] = to_hz(p.delta_a);
  j["delta_b_hz"] = to_hz(p.delta_b);
  j["g_a_hz"] = to_hz(p.g_a);
  j["g_b_hz"] = to_hz(p.g_b);
  j["phi_a_rad"] = p.phi_a;
  j["phi_b_rad"] = p.phi_b;
  return j;
}

SystemParams params_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidInput("parameter file: expected a JSON object");
  if (!j.contains("schema") || !j.at("schema").is_string() ||
      j.at("schema").get<std::string>() != kParamsSchema) {
    throw InvalidInput(std::string("parameter file: schema must be '") + kParamsSchema + "'");
  }
  SystemParams p;
  p.omega_x = hz(read_hz(j, "omega_x_hz"));
  p.omega_y = hz(read_hz(j, "omega_y_hz"));
  if (j.contains("omega_b_hz")) p.omega_b = hz(read_hz(j, "omega_b_hz"));
  p.theta = read_opt(j, "theta_rad", p.theta);
  p.damping_x = hz(read_opt(j, "damping_x_hz", 0.0));
  p.damping_y = hz(read_opt(j, "damping_y_hz", 0.0));
  p.heating_x = hz(read_hz(j, "heating_x_hz"));
  p.heating_y = hz(read_hz(j, "heating_y_hz"));
  p.kappa = hz(read_hz(j, "kappa_hz"));
  p.eta = read_opt(j, "eta", 1.0);
  p.delta_a = hz(read_hz(j, "delta_a_hz"));
  p.delta_b = hz(read_hz(j, "delta_b_hz"));
  p.g_a = hz(read_hz(j, "g_a_hz"));
  p.g_b = hz(read_hz(j, "g_b_hz"));
  p.phi_a = read_opt(j, "phi_a_rad", 0.0);
  p.phi_b = read_opt(j, "phi_b_rad", 0.0);
  p.validate();
  return p;
}

SystemParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open parameter file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("parameter file " + path.string() + ": " + e.what());
  }
  return params_from_json(j);
}

void save_params(const SystemParams& p, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << to_json(p).dump(2) << '\n';
}

std::string params_hash(const SystemParams& p) {
  return hex64(fnv1a64(to_json(p).dump()));
}

}  // namespace levent
