// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "levent/entanglement.hpp"
#include "levent/model.hpp"
#include "levent/modes.hpp"
#include "levent/pipeline.hpp"
#include "levent/spectra.hpp"
#include "levent/synth.hpp"
#include "oracles/oracles.hpp"
#include "support.hpp"

using namespace levent;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Covariances from the closed-loop run, re-checked by the physicality suite.
std::vector<CovMatrix> g_closed_loop_covs;

Outcome symplectic_oracle() {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    CovMatrix cm;
    cm.v = oracle::random_covariance(rng);
    worst = std::max(worst, std::abs(nu_min_ppt(cm) - oracle::nu_minus_ppt(cm.v)));
  }
  double worst_tmsv = 0.0;
  for (double r : {0.1, 0.35, 1.0}) {
    CovMatrix cm;
    cm.v = oracle::tmsv(r);
    worst_tmsv = std::max(worst_tmsv, std::abs(nu_min_ppt(cm) - std::exp(-2.0 * r)));
  }
  return {worst <= 1e-10 && worst_tmsv <= 1e-12,
          fmt("max |dnu| random %.2e (tol 1e-10), two-mode squeezed %.2e (tol 1e-12)", worst, worst_tmsv)};
}

Outcome lyapunov_vs_spectral() {
  const DriftModel m = build_drift(SystemParams::best_dataset());
  const Mat8 lyap = steady_covariance(m);
  const Mat8 spec = testsupport::spectral_covariance(m);
  const double rel = testsupport::max_rel(spec, lyap);
  return {rel <= 1e-4, fmt("max relative difference %.2e (tol 1e-4)", rel)};
}

Outcome width_scan() {
  const SystemParams p = SystemParams::best_dataset();
  const DriftModel m = build_drift(p);
  double best_nu = 10.0, best_w = 0.0;
  for (double w_hz = 1e3; w_hz <= 120e3 + 1.0; w_hz += 1e3) {
    const double nu = nu_min_ppt(covariance_model(m, make_rect_filter(-p.bright_frequency(), hz(w_hz))));
    if (nu < best_nu) {
      best_nu = nu;
      best_w = w_hz;
    }
  }
  const bool pass = best_nu < 1.0 && std::abs(best_w - 40e3) <= 15e3 && best_nu >= 0.80 && best_nu <= 0.95;
  return {pass, fmt("minimum nu %.4f at %.0f kHz (want [0.80, 0.95] at 40 +- 15 kHz)", best_nu, best_w / 1e3)};
}

Outcome log_negativity_anchors() {
  struct Anchor {
    double nu, en;
  };
  bool pass = true;
  std::ostringstream d;
  for (auto [nu, en] : {Anchor{0.931, 0.103}, Anchor{0.860, 0.218}, Anchor{0.885, 0.176}}) {
    const double got = std::round(log_negativity(nu) * 1000.0) / 1000.0;
    pass = pass && got == en;
    d << fmt("E_N(%.3f) = %.3f ", nu, got);
  }
  return {pass, d.str()};
}

Outcome detuning_sweep() {
  cli::SweepDetuningOptions o;
  o.detunings_hz = cli::parse_hz_list("85e3:130e3:2.5e3");
  o.widths_hz = cli::parse_hz_list("10e3:100e3:5e3");
  o.workers = cli::worker_count();
  const auto rows = cli::sweep_detuning(SystemParams::best_dataset(), o);
  double best_range = 0.0, run_start = NAN;
  double prev = NAN;
  for (const auto& r : rows) {
    const bool ent = r.status == "ok" && r.nu_direct < 1.0;
    if (ent) {
      if (std::isnan(run_start)) run_start = r.detuning_hz;
      prev = r.detuning_hz;
      best_range = std::max(best_range, prev - run_start);
    } else {
      run_start = NAN;
    }
  }
  const auto opt = std::min_element(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    const double x = a.status == "ok" ? a.nu_direct : 1e9, y = b.status == "ok" ? b.nu_direct : 1e9;
    return x < y;
  });
  const bool ordering = opt != rows.end() && opt->status == "ok" && opt->nu_intracavity > opt->nu_direct;
  return {best_range >= 40e3 && ordering,
          fmt("entangled over %.1f kHz (want >= 40); optimum at %.1f kHz: nu %.4f, intracavity %.4f", best_range / 1e3,
              opt->detuning_hz / 1e3, opt->nu_direct, opt->nu_intracavity)};
}

Outcome closed_loop() {
  cli::ClosedLoopOptions o;
  o.segments = 2000;
  o.seed = 1;
  o.workers = cli::worker_count();
  std::optional<cli::StageError> err;
  const nlohmann::json r = cli::closed_loop(SystemParams::best_dataset(), o, err);
  if (err) return {false, "stage " + err->stage + " failed: " + err->message};
  const auto& rel = r.at("fit").at("relative_error");
  auto e = [&](const char* k) { return std::abs(rel.at(k).get<double>()); };
  const double freq = std::max(e("omega_x"), e("omega_y"));
  const double rest = std::max({e("g_a"), e("g_b"), e("heating_x"), e("heating_y")});
  const double dnu = r.at("nu_minus_deviation").get<double>();
  for (const char* k : {"direct_measured", "direct_model", "model_route", "intracavity"})
    g_closed_loop_covs.push_back(cov_from_json(r.at("covariance").at(k)));
  return {freq <= 1e-3 && rest <= 0.05 && std::abs(dnu) <= 0.03,
          fmt("frequencies %.2e (tol 1e-3), couplings and heating %.3f (tol 0.05), nu %.4f vs %.4f (tol 0.03)", freq,
              rest, r.at("nu_minus").get<double>(), r.at("nu_minus_reference").get<double>())};
}

Outcome calibration_floor() {
  SystemParams vac = SystemParams::best_dataset();
  vac.g_a = vac.g_b = 0.0;
  vac.damping_x = vac.damping_y = hz(10.0);
  bool pass = true;
  std::ostringstream d;
  for (bool electronic : {false, true}) {
    SynthConfig cfg;
    cfg.electronic_noise = electronic;
    const auto run = testsupport::calibrated_run(vac, 2000, cfg, cli::worker_count());
    // Band mean of both calibrated PSDs, and the scatter of single bins against
    // the periodogram spread (1 + removed floor)/sqrt(N).
    double worst_mean = 0.0, worst_chi2 = 1.0;
    const std::size_t n = run.cal.values.size();
    const double nseg = static_cast<double>(run.cal.n_segments);
    for (int i : {0, 2}) {
      const double sigma = (1.0 + run.cal.removed_floor[static_cast<std::size_t>(i / 2)]) / std::sqrt(nseg);
      double sum = 0.0, chi2 = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double x = run.cal.values[k](i, i).real();
        sum += x;
        chi2 += std::pow((x - 1.0) / sigma, 2);
      }
      worst_mean = std::max(worst_mean, std::abs(sum / static_cast<double>(n) - 1.0));
      chi2 /= static_cast<double>(n);
      if (std::abs(chi2 - 1.0) > std::abs(worst_chi2 - 1.0)) worst_chi2 = chi2;
    }
    pass = pass && worst_mean <= 0.01 && std::abs(worst_chi2 - 1.0) <= 0.1;
    d << fmt("%s: band mean off by %.4f, per-bin reduced chi2 %.3f; ",
             electronic ? "with -10 dB electronic" : "vacuum only", worst_mean, worst_chi2);
  }
  d << "tol 0.01 and chi2 within 0.1 of 1";
  return {pass, d.str()};
}

Outcome physicality_suite() {
  std::vector<SystemParams> params = testsupport::random_stable_params(25, 99);
  params.push_back(SystemParams::best_dataset());
  const Mat4 swap = ladder_swap();
  double worst_phys = INFINITY, worst_herm = 0.0, worst_comm = 0.0;
  std::size_t n_cov = 0;
  auto check = [&](const CovMatrix& cm) {
    worst_phys = std::min(worst_phys, validate_cm(cm).physicality);
    ++n_cov;
  };
  for (const SystemParams& p : params) {
    const DriftModel m = build_drift(p);
    worst_phys = std::min(worst_phys, physicality_margin(steady_covariance(m)));
    check(intracavity_cov(m));
    const SpectralMatrix spec = output_spectral_matrix(default_grid(p), m);
    for (double w_hz : {5e3, 10e3, 20e3, 40e3, 80e3, 120e3}) {
      const FilterMode f = make_rect_filter(-p.bright_frequency(), hz(w_hz));
      check(covariance_model(m, f));
      check(covariance_direct(spec, f, p));
    }
    for (double w = -hz(250e3); w <= hz(250e3); w += hz(1e3)) {
      const Mat4c a = output_spectrum(w, m), am = output_spectrum(-w, m);
      const Mat4c h = a * swap;
      worst_herm = std::max(worst_herm, (h - h.adjoint()).cwiseAbs().maxCoeff());
      worst_comm = std::max({worst_comm, std::abs(a(kAA, kAAdag) - am(kAAdag, kAA) - 1.0),
                             std::abs(a(kAB, kABdag) - am(kABdag, kAB) - 1.0)});
    }
  }
  for (const CovMatrix& cm : g_closed_loop_covs) check(cm);
  const bool pass = worst_phys >= -1e-9 && worst_herm <= 1e-9 && worst_comm <= 1e-9;
  return {pass, fmt("%zu covariances, min eig(V + i Omega) %.2e; conjugation %.2e, commutator %.2e (tol 1e-9)", n_cov,
                    worst_phys, worst_herm, worst_comm)};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_s;  // 0: no runtime bound
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "symplectic oracle", 5.0, symplectic_oracle},
      {2, "Lyapunov vs spectral integration", 10.0, lyapunov_vs_spectral},
      {3, "filter-width scan, model route", 60.0, width_scan},
      {4, "log-negativity anchors", 0.0, log_negativity_anchors},
      {5, "detuning sweep, direct route", 300.0, detuning_sweep},
      {6, "closed loop, 2000 segments", 600.0, closed_loop},
      {7, "calibration floor", 0.0, calibration_floor},
      {8, "physicality and spectral identities", 0.0, physicality_suite},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.limit_s <= 0.0 || s <= c.limit_s;
    const bool pass = o.pass && in_time;
    failures += pass ? 0 : 1;
    std::printf("criterion %d (%s): %s  %s  [%.1f s%s]\n", c.id, c.name, pass ? "PASS" : "FAIL", o.detail.c_str(), s,
                c.limit_s > 0.0 ? fmt(", limit %.0f s%s", c.limit_s, in_time ? "" : " EXCEEDED").c_str() : "");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
