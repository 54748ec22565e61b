#pragma once
// Helpers shared by the unit tests and the acceptance binary.

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "levent/model.hpp"
#include "levent/pipeline.hpp"
#include "levent/quadrature.hpp"
#include "levent/spectra.hpp"

namespace testsupport {

/// Stationary second moments V = ∫ T(ω) D T(ω)† dω/2π over the whole line,
/// independent of the Lyapunov solver.
inline Eigen::Matrix<double, 8, 8> spectral_covariance(const levent::DriftModel& model,
                                                       double rel_tol = 1e-10) {
  using namespace levent;
  const auto& p = model.params;
  const Mat8c d = model.diffusion.cast<cd>();
  auto f = [&](double w) -> Eigen::VectorXd {
    const Mat8c t = transfer(w, model);
    const Mat8 s = (t * d * t.adjoint()).real();
    return Eigen::Map<const Eigen::VectorXd>(s.data(), 64) / kTwoPi;
  };
  const std::vector<double> breaks{-p.omega_y, -p.omega_x, -std::abs(p.delta_a),
                                   p.omega_x,  p.omega_y,  std::abs(p.delta_a)};
  const double inf = std::numeric_limits<double>::infinity();
  QuadOptions q;
  q.abs_tol = 1e-14;
  q.rel_tol = rel_tol;
  q.max_intervals = 200000;
  const QuadResult r = integrate(f, -inf, inf, breaks, q, p.bright_frequency());
  Mat8 v = Eigen::Map<const Mat8>(r.value.data());
  return 0.5 * (v + v.transpose());
}

/// Signal, shot and dark runs of `n_seg` segments, accumulated and calibrated.
struct CalibratedRun {
  levent::AnalysisWindow win;
  levent::CMatrixGrid raw;
  levent::CMatrixGrid cal;
};

inline CalibratedRun calibrated_run(const levent::SystemParams& truth, std::size_t n_seg,
                                    const levent::SynthConfig& cfg = {}, int workers = 1) {
  using namespace levent;
  const DriftModel model = build_drift(truth);
  CalibratedRun r;
  r.win = make_analysis_window(cfg.sample_rate, cfg.segment_length(), cfg.lo_freq_a, cfg.lo_freq_b,
                               cfg.window, cfg.detector_cutoff_hz);
  r.raw = accumulate_stream(Synthesizer(&model, cfg, TraceKind::signal), n_seg, r.win, workers);
  const CMatrixGrid shot = accumulate_stream(Synthesizer(nullptr, cfg, TraceKind::shot), n_seg, r.win, workers);
  const CMatrixGrid dark = accumulate_stream(Synthesizer(nullptr, cfg, TraceKind::dark), n_seg, r.win, workers);
  r.cal = calibrate(r.raw, shot, dark, {});
  return r;
}

/// Noise-free calibrated grid: C = heterodyne_covariance(A^φ) on the window grid.
inline levent::CMatrixGrid exact_grid(const levent::SystemParams& p, const std::vector<double>& grid,
                                      std::size_t n_segments) {
  using namespace levent;
  const DriftModel m = build_drift(p);
  CMatrixGrid c;
  c.grid = grid;
  c.n_segments = n_segments;
  c.state = CalibrationState::noise_subtracted;
  for (double w : grid) c.values.push_back(heterodyne_covariance(output_spectrum(w, m)));
  return c;
}

/// Random parameters around the best-dataset point that pass validation and
/// give a stable drift matrix. Phases are drawn uniformly.
inline std::vector<levent::SystemParams> random_stable_params(std::size_t count, std::uint64_t seed) {
  using namespace levent;
  std::mt19937_64 rng(seed);
  auto u = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  std::vector<SystemParams> out;
  while (out.size() < count) {
    SystemParams p;
    p.omega_x = hz(u(100e3, 130e3));
    p.omega_y = p.omega_x * u(0.8, 0.97);
    p.theta = u(0.2, 1.35);
    p.heating_x = hz(u(500.0, 5e3));
    p.heating_y = hz(u(500.0, 5e3));
    p.kappa = hz(u(30e3, 100e3));
    p.eta = u(0.05, 1.0);
    const double wb = p.bright_frequency();
    p.delta_a = -wb * u(0.8, 1.2);
    p.delta_b = wb * u(0.8, 1.2);
    p.g_a = hz(u(3e3, 15e3));
    p.g_b = hz(u(0.0, 8e3));
    p.phi_a = u(-std::numbers::pi, std::numbers::pi);
    p.phi_b = u(-std::numbers::pi, std::numbers::pi);
    if (stability(build_drift(p)).is_stable) out.push_back(p);
  }
  return out;
}

inline double max_rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / b.cwiseAbs().maxCoeff();
}

}  // namespace testsupport
