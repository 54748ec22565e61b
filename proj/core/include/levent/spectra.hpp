#pragma once

#include <filesystem>
#include <vector>

#include "levent/model.hpp"

namespace levent {

/// Index of the ladder vector a = (a_A, a_A†, a_B, a_B†).
enum LadderIndex : int { kAA = 0, kAAdag, kAB, kABdag };

enum class SpectralKind { model, measured };

/// Output-field spectral correlation matrix,
/// ⟨a_i(ω) a_j(ω')⟩ = 2π A_ij(ω) δ(ω + ω'), with O(ω) = ∫ O(t) e^{iωt} dt.
///
/// `phase_a`/`phase_b` record the constant detection phases already present
/// in `values` (A^φ = R A Rᵀ); zero means the intracavity reference frame.
struct SpectralMatrix {
  std::vector<double> grid;  ///< rad/s, strictly increasing
  std::vector<Mat4c> values;
  SpectralKind kind = SpectralKind::model;
  double phase_a = 0.0;
  double phase_b = 0.0;

  std::size_t size() const { return grid.size(); }
};

enum class Field { A, B };

/// χ(ω) = 1 / (κ/2 − i(ω + Δ)).
cd susceptibility(double omega, double kappa, double delta);

/// T(ω) = (−iω I − M)⁻¹. Throws SingularMatrix when −iω is an eigenvalue of M.
Mat8c transfer(double omega, const DriftModel& model);

/// Permutation swapping a ↔ a† within each field.
Mat4 ladder_swap();

/// R = diag(e^{iφ_A}, e^{−iφ_A}, e^{iφ_B}, e^{−iφ_B}).
Mat4c phase_matrix(double phi_a, double phi_b);

/// Covariance ⟨v v†⟩ of the heterodyne data vector
/// v(Ω) = (v(Ω_A+Ω), v*(Ω_A−Ω), v(Ω_B+Ω), v*(Ω_B−Ω)) in shot-noise units:
/// H = A P + diag(0, 1, 0, 1). The lower sideband sees A_12(−Ω) = 1 + A_21(Ω).
Mat4c heterodyne_covariance(const Mat4c& a);
/// Inverse of heterodyne_covariance: A = (H − diag(0, 1, 0, 1)) P.
Mat4c spectral_from_heterodyne(const Mat4c& h);

/// Number of noise inputs: (a_in^A, a_in^A†, a_in^B, a_in^B†, f_x, f_y,
/// v^A, v^A†, v^B, v^B†) with v the detection-loss vacua.
inline constexpr int kNoiseInputs = 10;
/// Joint observables: the four detected ladder operators, then x_b, p_b.
inline constexpr int kJointOutputs = 6;

using JointResponse = Eigen::Matrix<cd, kJointOutputs, kNoiseInputs>;
using JointSpectrum = Eigen::Matrix<cd, kJointOutputs, kJointOutputs>;

struct OutputOptions {
  /// Drop field A's direct vacuum terms (reflected input and loss vacuum),
  /// leaving only the part of a_A^out that passes through the dynamics.
  bool drop_meter_noise_a = false;
  /// Apply the constant detection phases φ_A, φ_B from the parameters.
  bool apply_detection_phases = true;
};

/// y(ω) = G(ω) w(ω) for the noise inputs w, in the intracavity reference
/// frame (no detection phases).
JointResponse joint_response(double omega, const DriftModel& model,
                             const OutputOptions& opts = {});

/// Y with ⟨y_i(ω) y_j(ω')⟩ = 2π Y_ij(ω) δ(ω + ω'), computed as
/// Y P = G N_h G† where N_h is the (diagonal) normal form of the inputs.
JointSpectrum joint_spectrum(double omega, const DriftModel& model,
                             const OutputOptions& opts = {});

/// A(ω) at one frequency.
Mat4c output_spectrum(double omega, const DriftModel& model,
                      const OutputOptions& opts = {});

/// Model A(ω) over a grid. Throws UnstableDrift.
SpectralMatrix output_spectral_matrix(const std::vector<double>& grid,
                                      const DriftModel& model,
                                      const OutputOptions& opts = {});

/// Heterodyne PSD of one field in shot-noise units: Re A_12 (field A) or
/// Re A_34 (field B). Unity for vacuum.
std::vector<double> heterodyne_psd(const SpectralMatrix& spec, Field field);

/// A in a different detection frame: R(φ') R(φ)⁻¹ A R(φ)⁻¹ R(φ').
SpectralMatrix with_phases(const SpectralMatrix& spec, double phi_a, double phi_b);

/// Uniform grid from lo to hi (inclusive) with spacing at most `step`.
std::vector<double> uniform_grid(double lo, double hi, double step);

/// Default model grid: ±span around zero with `step` spacing (rad/s).
std::vector<double> default_grid(const SystemParams& p, double span = hz(250e3),
                                 double step = hz(25.0));

/// CSV: header `freq_hz,A_11_re,A_11_im,...,A_44_im`, preceded by one
/// `#` metadata line (schema, kind, convention, frame phases).
void write_spectral_csv(const SpectralMatrix& spec, const std::filesystem::path& path);
SpectralMatrix read_spectral_csv(const std::filesystem::path& path);

/// PSD CSV: `freq_hz,psd_A,psd_B`, frequency relative to the LO. The two-sided
/// convention has unit shot noise; the one-sided (RF) convention doubles it.
void write_psd_csv(const SpectralMatrix& spec, const std::filesystem::path& path,
                   bool one_sided = false);

}  // namespace levent
