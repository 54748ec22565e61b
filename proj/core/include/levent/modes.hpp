#pragma once

#include <optional>

#include "levent/covariance.hpp"
#include "levent/quadrature.hpp"
#include "levent/spectra.hpp"

namespace levent {

enum class FilterShape { rect };

/// Envelope ξ(ω) defining a propagating mode a_ξ = ∫ ξ(ω) a_B^out(ω) dω/2π,
/// normalized so that ∫|ξ|² dω/2π = 1.
struct FilterMode {
  double center = 0.0;  ///< rad/s
  double width = 0.0;   ///< Γ_ξ, rad/s
  FilterShape shape = FilterShape::rect;

  double lower() const { return center - 0.5 * width; }
  double upper() const { return center + 0.5 * width; }
  IntervalSet support() const { return IntervalSet::interval(lower(), upper()); }
  /// ξ(ω); 0 outside the band.
  double value(double omega) const;
  /// Constant in-band amplitude sqrt(2π / Γ_ξ).
  double amplitude() const;
};

/// Throws InvalidInput for non-positive width.
FilterMode make_rect_filter(double center, double width);

struct ModelRouteOptions {
  QuadOptions quad{1e-13, 1e-10, 20000};
};

/// Covariance of (Q_ξ, P_ξ, x_b, p_b) from the model: optical and cross
/// blocks as frequency integrals of model cross-spectra, mechanical block
/// from the Lyapunov solution. Throws UnstableDrift.
CovMatrix covariance_model(const DriftModel& model, const FilterMode& filter,
                           const ModelRouteOptions& opts = {});

/// How x_meas is built from field A on the two mechanical sidebands.
enum class MechReconstruction {
  literal,    ///< a_A^out/(−i√(ηκ) g_A χ_A) on both sidebands
  hermitian,  ///< that on +Ω_b, its Hermitian conjugate on −Ω_b
};

struct DirectRouteOptions {
  double mech_band = hz(60e3);  ///< total width around each ±Ω_b sideband
  MechReconstruction reconstruction = MechReconstruction::literal;
  /// Minimum |χ_A| allowed where it is inverted, relative to the peak 2/κ.
  double chi_floor = 1e-3;
};

/// Model-independent estimate: Q_ξ, P_ξ from field B through ξ; x_b, p_b
/// reconstructed from field A as x_meas = a_A^out / (−i√(ηκ) g_A χ_A) on
/// |ω ∓ Ω_b| ≤ mech_band/2 (see MechReconstruction) and
/// p_meas = −i(ω/Ω_b) x_meas. Integration is a midpoint rule over grid cells,
/// each weighted by its overlap with the relevant bands. Detection phases
/// recorded in `spec` are removed first.
CovMatrix covariance_direct(const SpectralMatrix& spec, const FilterMode& filter,
                            const SystemParams& params,
                            const DirectRouteOptions& opts = {});

/// ⟨a_ξ a_ξ†⟩ − ⟨a_ξ† a_ξ⟩ from the model (should be 1).
double filtered_mode_commutator(const DriftModel& model, const FilterMode& filter,
                                const ModelRouteOptions& opts = {});

}  // namespace levent
