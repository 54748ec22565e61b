#include <cmath>
#include <numbers>

#include <doctest.h>

#include "levent/error.hpp"
#include "levent/model.hpp"
#include "levent/pipeline.hpp"
#include "support.hpp"

using namespace levent;

namespace {

// Start well outside the expected errors.
SystemParams perturbed(const SystemParams& truth) {
  SystemParams s = truth;
  s.omega_x *= 1.003;
  s.omega_y *= 0.997;
  s.heating_x *= 1.3;
  s.heating_y *= 0.8;
  s.g_a *= 0.8;
  s.g_b = truth.g_b > 0.0 ? truth.g_b * 1.2 : hz(1e3);
  s.delta_a *= 1.05;
  s.delta_b *= 0.95;
  return s;
}

std::vector<double> analysis_grid() {
  const SynthConfig cfg;
  return make_analysis_window(cfg.sample_rate, cfg.segment_length(), cfg.lo_freq_a, cfg.lo_freq_b,
                              cfg.window)
      .grid();
}

// Signed angle difference folded into (−π, π].
double angle_diff(double a, double b) { return std::remainder(a - b, 2.0 * std::numbers::pi); }

FitResult truth_fit(const SystemParams& p) {
  FitResult f;
  f.params = p;
  f.params.phi_a = 0.0;
  f.params.phi_b = 0.0;
  return f;
}

}  // namespace

TEST_CASE("fit_psd recovers the truth from noise-free spectra") {
  const SystemParams p = SystemParams::best_dataset();
  CMatrixGrid c = testsupport::exact_grid(p, analysis_grid(), 2000);
  c.removed_floor = {1.5, 1.5};
  const FitResult f = fit_psd(c, perturbed(p));
  CHECK(f.converged);
  CHECK(f.chi2 < 1e-6);
  CHECK(f.params.omega_x == doctest::Approx(p.omega_x).epsilon(1e-6));
  CHECK(f.params.omega_y == doctest::Approx(p.omega_y).epsilon(1e-6));
  CHECK(f.params.heating_x == doctest::Approx(p.heating_x).epsilon(1e-4));
  CHECK(f.params.heating_y == doctest::Approx(p.heating_y).epsilon(1e-4));
  CHECK(f.params.g_a == doctest::Approx(p.g_a).epsilon(1e-4));
  CHECK(f.params.g_b == doctest::Approx(p.g_b).epsilon(1e-4));
  CHECK(f.params.delta_a == doctest::Approx(p.delta_a).epsilon(1e-4));
  CHECK(f.params.delta_b == doctest::Approx(p.delta_b).epsilon(1e-4));
  CHECK(f.params.kappa == p.kappa);
  CHECK(f.params.eta == p.eta);
  for (double s : f.sigma) CHECK(std::isfinite(s));
  CHECK(f.at_bounds.empty());
}

TEST_CASE("fit_psd: guards and non-convergence") {
  const SystemParams p = SystemParams::best_dataset();
  CMatrixGrid c = testsupport::exact_grid(p, analysis_grid(), 2000);
  c.removed_floor = {1.5, 1.5};
  CMatrixGrid raw = c;
  raw.state = CalibrationState::raw;
  CHECK_THROWS_AS(fit_psd(raw, p), InvalidInput);
  FitOptions narrow;
  narrow.fit_half_band = hz(100.0);
  CHECK_THROWS_AS(fit_psd(c, p, narrow), InvalidInput);
  FitOptions starved;
  starved.max_iterations = 1;
  starved.multistart = 1;
  CHECK_THROWS_AS(fit_psd(c, perturbed(p), starved), NonConvergence);
}

TEST_CASE("fit_phases recovers detection phases from noise-free spectra") {
  const SystemParams base = SystemParams::best_dataset();
  const auto grid = analysis_grid();
  for (auto [pa, pb] : {std::pair{0.3, -1.1}, std::pair{0.0, 0.0}, std::pair{-1.2, 0.7}}) {
    SystemParams p = base;
    p.phi_a = pa;
    p.phi_b = pb;
    const PhaseFit ph = fit_phases(testsupport::exact_grid(p, grid, 2000), truth_fit(base));
    CHECK(std::abs(angle_diff(ph.phi_a, pa)) < 1e-6);
    CHECK(std::abs(angle_diff(ph.phi_b, pb)) < 1e-6);
    CHECK(ph.phi_a > -std::numbers::pi / 2);
    CHECK(ph.phi_a <= std::numbers::pi / 2);
    CHECK(!ph.degenerate);
    CHECK(ph.curvature > 0.0);
  }
}

TEST_CASE("fit_phases: a joint pi shift is indistinguishable") {
  const SystemParams base = SystemParams::best_dataset();
  const auto grid = analysis_grid();
  SystemParams p = base, q = base;
  p.phi_a = 0.3;
  p.phi_b = -1.1;
  q.phi_a = 0.3 + std::numbers::pi;
  q.phi_b = -1.1 + std::numbers::pi;
  const PhaseFit a = fit_phases(testsupport::exact_grid(p, grid, 2000), truth_fit(base));
  const PhaseFit b = fit_phases(testsupport::exact_grid(q, grid, 2000), truth_fit(base));
  CHECK(std::abs(angle_diff(a.phi_a, b.phi_a)) < 1e-9);
  CHECK(std::abs(angle_diff(a.phi_b, b.phi_b)) < 1e-9);
  CHECK(a.cost == doctest::Approx(b.cost).epsilon(1e-9));
}

TEST_CASE("closed loop: fitted parameters and phases from 2000 noisy segments") {
  SystemParams truth = SystemParams::best_dataset();
  truth.phi_a = 0.3;
  truth.phi_b = -1.1;
  const auto run = testsupport::calibrated_run(truth, 2000, {}, 4);
  SystemParams start = perturbed(truth);
  start.phi_a = 0.0;
  start.phi_b = 0.0;
  const FitResult f = fit_psd(run.cal, start);
  MESSAGE("chi2/dof " << f.chi2_per_dof());
  CHECK(f.converged);
  CHECK(f.chi2_per_dof() == doctest::Approx(1.0).epsilon(0.1));
  CHECK(std::abs(f.params.omega_x / truth.omega_x - 1.0) < 1e-3);
  CHECK(std::abs(f.params.omega_y / truth.omega_y - 1.0) < 1e-3);
  CHECK(std::abs(f.params.g_a / truth.g_a - 1.0) < 0.05);
  CHECK(std::abs(f.params.g_b / truth.g_b - 1.0) < 0.05);
  CHECK(std::abs(f.params.heating_x / truth.heating_x - 1.0) < 0.05);
  CHECK(std::abs(f.params.heating_y / truth.heating_y - 1.0) < 0.05);
  const PhaseFit ph = fit_phases(run.cal, f);
  MESSAGE("phases " << ph.phi_a << ", " << ph.phi_b);
  CHECK(std::abs(angle_diff(ph.phi_a, truth.phi_a)) < 0.02);
  CHECK(std::abs(angle_diff(ph.phi_b, truth.phi_b)) < 0.02);
}

TEST_CASE("closed loop: uncoupled field B fits a coupling consistent with zero") {
  SystemParams truth = SystemParams::best_dataset();
  truth.g_b = 0.0;
  const auto run = testsupport::calibrated_run(truth, 500, {}, 4);
  const FitResult f = fit_psd(run.cal, perturbed(truth));
  const double g = f.params.g_b, s = f.sigma[5];
  MESSAGE("g_b " << g / kTwoPi << " Hz, sigma " << s / kTwoPi << " Hz");
  // The returned interval is the image of the 1σ interval of g², so compare in g².
  const double sigma_g2 = (g + s) * (g + s) - g * g;
  CHECK(g * g <= 2.0 * sigma_g2);
}
