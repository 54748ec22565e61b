#pragma once

#include <filesystem>
#include <numbers>
#include <optional>

#include <nlohmann/json.hpp>

namespace levent {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Hz (ordinary frequency) to rad/s.
constexpr double hz(double f) { return kTwoPi * f; }
/// rad/s to Hz.
constexpr double to_hz(double w) { return w / kTwoPi; }

/// Physical parameters of the two-field, two-mode levitated system.
///
/// All rates are angular (rad/s). `heating_*` are phonon heating rates
/// Γ_j: an isolated mode's occupation grows by Γ_j per second. `damping_*`
/// are intrinsic mechanical amplitude damping rates (gas damping), zero by
/// default. Detunings follow Δ = ω_drive − ω_cavity, so field A (Δ_A < 0)
/// cools and field B (Δ_B > 0) squeezes.
struct SystemParams {
  double omega_x = 0.0;
  double omega_y = 0.0;
  double theta = std::numbers::pi / 4.0;
  double damping_x = 0.0;
  double damping_y = 0.0;
  double heating_x = 0.0;
  double heating_y = 0.0;
  double kappa = 0.0;
  double eta = 1.0;
  double delta_a = 0.0;
  double delta_b = 0.0;
  double g_a = 0.0;
  double g_b = 0.0;
  double phi_a = 0.0;
  double phi_b = 0.0;
  std::optional<double> omega_b;  ///< defaults to (omega_x + omega_y) / 2

  double bright_frequency() const {
    return omega_b.value_or(0.5 * (omega_x + omega_y));
  }

  /// Throws InvalidInput if any invariant is violated.
  void validate() const;

  /// Best-dataset values: Ω_x, Ω_y from the trap characterization, Ω_b,
  /// couplings and heating rates from the fitted spectra, κ and η from the
  /// independent calibration, and −Δ_A = Δ_B = Ω_b.
  static SystemParams best_dataset();
};

inline constexpr const char* kParamsSchema = "levent-params/1";

/// Parameter file (JSON). Frequencies in the file are in Hz, angles in rad.
nlohmann::json to_json(const SystemParams& p);
SystemParams params_from_json(const nlohmann::json& j);
SystemParams load_params(const std::filesystem::path& path);
void save_params(const SystemParams& p, const std::filesystem::path& path);

/// FNV-1a hash of the canonical JSON form, as 16 hex digits.
std::string params_hash(const SystemParams& p);

}  // namespace levent
