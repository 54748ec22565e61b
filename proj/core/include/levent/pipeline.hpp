#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "levent/spectra.hpp"
#include "levent/synth.hpp"

namespace levent {

/// Single-segment transform, e^{+iωt} convention and two-sided density
/// normalization: white noise of PSD S₀ gives E|v_k|² = S₀.
class SegmentTransform {
 public:
  explicit SegmentTransform(std::size_t length, double sample_rate);
  ~SegmentTransform();
  SegmentTransform(SegmentTransform&&) noexcept;
  SegmentTransform& operator=(SegmentTransform&&) noexcept;

  std::size_t length() const;
  /// Returns bins k = 0..N/2 at frequencies k·fs/N.
  std::vector<cd> operator()(std::span<const double> samples) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Non-overlapping rectangular segments; trailing partial segment dropped.
/// Throws InvalidInput if the trace is shorter than one segment.
std::vector<std::vector<cd>> segment_fft(const HeterodyneTrace& trace, double t_seg = 0.010);

/// Bin bookkeeping for the four-dimensional data vector
/// v(Ω) = (v(Ω_A+Ω), v*(Ω_A−Ω), v(Ω_B+Ω), v*(Ω_B−Ω)).
struct AnalysisWindow {
  double bin_width = 0.0;  ///< rad/s
  std::size_t lo_bin_a = 0;
  std::size_t lo_bin_b = 0;
  double snap_a = 0.0;  ///< |LO − bin centre|, rad/s
  double snap_b = 0.0;
  std::vector<int> offsets;  ///< analysis offsets in bins, increasing, 0 excluded
  double detector_cutoff_hz = 0.0;

  std::vector<double> grid() const;  ///< Ω = offset · bin_width
};

/// Throws InvalidInput if the windows overlap or leave the band, or if an
/// LO is off-grid by more than half a bin while snapping is disabled.
AnalysisWindow make_analysis_window(double sample_rate, std::size_t segment_length,
                                    double lo_a, double lo_b, double half_width,
                                    double detector_cutoff_hz = 0.0, bool snap = true);

using DataVector = Eigen::Vector4cd;

/// v(Ω) for every analysis offset, with the detector phase removed.
std::vector<DataVector> assemble_v(std::span<const cd> spectrum, const AnalysisWindow& win);

enum class CalibrationState { raw, calibrated, noise_subtracted, rotated };

/// Per-bin Hermitian data covariance C(Ω) = ⟨v(Ω) v(Ω)†⟩. Once calibrated to
/// shot-noise units, C = heterodyne_covariance(A^φ).
struct CMatrixGrid {
  std::vector<double> grid;  ///< rad/s
  std::vector<Mat4c> values;
  std::size_t n_segments = 0;
  CalibrationState state = CalibrationState::raw;
  /// Fraction of each window's shot floor contributed by its own LO.
  double own_fraction_a = 1.0;
  double own_fraction_b = 1.0;
  /// Additive floor removed by calibration, per field, in calibrated units;
  /// sets the periodogram variance of the calibrated PSDs.
  std::array<double, 2> removed_floor{0.0, 0.0};
  /// Per-bin relative variance of the unsmoothed vacuum level used as the
  /// calibration gain, per data-vector entry, and the smoothing half width.
  /// Zero when no calibration records were used. Not stored in CSV files.
  std::array<double, 4> gain_rel_var{0.0, 0.0, 0.0, 0.0};
  int gain_half_width = 0;
  /// Extra per-bin variance of each calibrated diagonal entry from the
  /// bin-by-bin dark subtraction.
  std::array<double, 4> dark_var{0.0, 0.0, 0.0, 0.0};
};

/// Running mean of v v†, reduced in insertion order.
class CAccumulator {
 public:
  explicit CAccumulator(std::size_t n_bins);
  void add(std::span<const DataVector> v);
  void merge(const CAccumulator& other);
  std::size_t count() const { return count_; }
  /// Throws InvalidInput with fewer than two segments.
  CMatrixGrid result(const std::vector<double>& grid) const;

 private:
  std::vector<Mat4c> sum_;
  std::size_t count_ = 0;
};

CMatrixGrid accumulate_C(std::span<const std::vector<DataVector>> segments,
                         const std::vector<double>& grid);

/// Streams `n_segments` segments from a synthesizer through the FFT and the
/// accumulator, `workers` threads over fixed chunks (deterministic result).
CMatrixGrid accumulate_stream(const Synthesizer& source, std::size_t n_segments,
                              const AnalysisWindow& win, int workers = 1);

/// Same, over a recorded trace; own-LO fractions from the trace metadata.
CMatrixGrid accumulate_trace(const HeterodyneTrace& trace, const AnalysisWindow& win);

struct CalibrationOptions {
  int smooth_half_width = 25;  ///< bins; 0 uses per-bin shot and dark levels
};

/// Subtracts the electronic (dark) level and the other LO's vacuum floor,
/// then scales each field so its own vacuum maps to 1. The own-LO fractions
/// are taken from `raw`. Throws InvalidInput when the grids are not aligned
/// or the shot level does not exceed the dark level.
CMatrixGrid calibrate(const CMatrixGrid& raw, const CMatrixGrid& shot, const CMatrixGrid& dark,
                      const CalibrationOptions& opts);

struct FitOptions {
  /// Analysis bins used in the fit: |Ω| within this distance of Ω_b.
  double fit_half_band = hz(60e3);
  int max_iterations = 200;
  int multistart = 3;
};

inline constexpr int kFitParams = 8;

struct FitResult {
  SystemParams params;  ///< fixed fields carried over, fitted fields replaced
  std::array<double, kFitParams> values{};  ///< rad/s
  std::array<double, kFitParams> sigma{};   ///< 1σ, rad/s
  double chi2 = 0.0;
  int dof = 0;
  bool converged = false;
  std::string message;
  std::vector<std::string> at_bounds;
  double phi_a = 0.0;
  double phi_b = 0.0;

  double chi2_per_dof() const { return dof > 0 ? chi2 / dof : 0.0; }
  static const std::array<const char*, kFitParams>& names();
};

/// Weighted least squares of the two calibrated heterodyne PSDs against the
/// model, κ and η held fixed. Weights follow averaged-periodogram statistics.
/// Throws NonConvergence if no start converges.
FitResult fit_psd(const CMatrixGrid& cal, const SystemParams& start, const FitOptions& opts = {});

struct PhaseFit {
  double phi_a = 0.0;
  double phi_b = 0.0;
  double cost = 0.0;
  double curvature = 0.0;  ///< smallest Hessian eigenvalue at the minimum
  bool degenerate = false;
};

/// Minimizes Σ|A^φ_data − R A_model R|² over (φ_A, φ_B). The landscape is exactly
/// invariant under (φ_A + π, φ_B + π); the result has φ_A ∈ (−π/2, π/2].
PhaseFit fit_phases(const CMatrixGrid& cal, const FitResult& fit);

/// A(Ω) = R⁻¹ spectral_from_heterodyne(C) R⁻¹, kind = measured, frame phases zero.
SpectralMatrix rotate_to_A(const CMatrixGrid& cal, double phi_a, double phi_b);

void write_cmatrix_csv(const CMatrixGrid& c, const std::filesystem::path& path);
nlohmann::json to_json(const FitResult& fit);

}  // namespace levent
