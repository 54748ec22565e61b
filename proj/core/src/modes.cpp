#include "levent/modes.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "levent/error.hpp"

namespace levent {

namespace {

constexpr cd kI{0.0, 1.0};

// Frequencies where the transfer matrix peaks: ω = ±Im λ(M).
std::vector<double> pole_frequencies(const DriftModel& model) {
  Eigen::EigenSolver<Mat8> es(model.drift, false);
  std::vector<double> out;
  for (int i = 0; i < 8; ++i) {
    out.push_back(es.eigenvalues()(i).imag());
    out.push_back(-es.eigenvalues()(i).imag());
  }
  return out;
}

// Ladder → quadrature map for q = (a, a†, x, p).
Mat4c ladder_to_quadrature() {
  Mat4c t = Mat4c::Zero();
  t(0, 0) = 1.0;
  t(0, 1) = 1.0;
  t(1, 0) = -kI;
  t(1, 1) = kI;
  t(2, 2) = 1.0;
  t(3, 3) = 1.0;
  return t;
}

void require_stable(const DriftModel& model) {
  const Stability st = stability(model);
  if (!st.is_stable) throw UnstableDrift("max Re eig(M) = " + std::to_string(-st.margin) + " rad/s");
}

struct OpticalMoments {
  Mat4c q = Mat4c::Zero();  // ⟨q_i q_j⟩ for q = (a_ξ, a_ξ†, x_b, p_b), mechanics excluded
};

OpticalMoments filtered_moments(const DriftModel& model, const FilterMode& filter,
                                const ModelRouteOptions& opts, bool with_cross) {
  constexpr int ya = kAB, yad = kABdag, yx = 4, yp = 5;
  const double amp = filter.amplitude();
  const auto poles = pole_frequencies(model);

  VectorIntegrand f = [&](double w) -> Eigen::VectorXd {
    const JointSpectrum yp_ = joint_spectrum(w, model);
    const JointSpectrum ym = joint_spectrum(-w, model);
    const double x2 = amp * amp;
    std::vector<cd> vals = {x2 * yp_(ya, yad), x2 * ym(yad, ya)};
    if (with_cross) {
      for (int m : {yx, yp}) {
        vals.push_back(amp * yp_(ya, m));   // ⟨a_ξ y⟩
        vals.push_back(amp * ym(m, ya));    // ⟨y a_ξ⟩
        vals.push_back(amp * ym(yad, m));   // ⟨a_ξ† y⟩
        vals.push_back(amp * yp_(m, yad));  // ⟨y a_ξ†⟩
      }
    }
    Eigen::VectorXd v(2 * vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) {
      v(2 * i) = vals[i].real();
      v(2 * i + 1) = vals[i].imag();
    }
    return v;
  };
  const QuadResult r = integrate(f, filter.lower(), filter.upper(), poles, opts.quad);
  if (!r.converged) {
    throw NonConvergence("filtered-mode integration did not converge (error " +
                         std::to_string(r.error) + ")");
  }
  auto c = [&](int i) { return cd(r.value(2 * i), r.value(2 * i + 1)) / kTwoPi; };

  OpticalMoments out;
  out.q(0, 1) = c(0);
  out.q(1, 0) = c(1);
  if (with_cross) {
    for (int k = 0; k < 2; ++k) {
      const int base = 2 + 4 * k;
      out.q(0, 2 + k) = c(base);
      out.q(2 + k, 0) = c(base + 1);
      out.q(1, 2 + k) = c(base + 2);
      out.q(2 + k, 1) = c(base + 3);
    }
  }

  // ⟨a_ξ a_ξ⟩ needs ξ(ω)ξ(−ω), nonzero only if the band straddles zero.
  const IntervalSet both = filter.support().intersected(filter.support().mirrored());
  for (const auto& piece : both.pieces()) {
    VectorIntegrand g = [&](double w) -> Eigen::VectorXd {
      const JointSpectrum yp_ = joint_spectrum(w, model);
      const JointSpectrum ym = joint_spectrum(-w, model);
      const cd aa = amp * amp * yp_(ya, ya);
      const cd dd = amp * amp * ym(yad, yad);
      Eigen::VectorXd v(4);
      v << aa.real(), aa.imag(), dd.real(), dd.imag();
      return v;
    };
    const QuadResult s = integrate(g, piece.lo, piece.hi, poles, opts.quad);
    if (!s.converged) throw NonConvergence("filtered-mode integration did not converge");
    out.q(0, 0) += cd(s.value(0), s.value(1)) / kTwoPi;
    out.q(1, 1) += cd(s.value(2), s.value(3)) / kTwoPi;
  }
  return out;
}

}  // namespace

double FilterMode::value(double omega) const {
  return (omega >= lower() && omega <= upper()) ? amplitude() : 0.0;
}

double FilterMode::amplitude() const { return std::sqrt(kTwoPi / width); }

FilterMode make_rect_filter(double center, double width) {
  if (!(width > 0.0) || !std::isfinite(width)) throw InvalidInput("filter width must be positive");
  if (!std::isfinite(center)) throw InvalidInput("filter center must be finite");
  FilterMode f;
  f.center = center;
  f.width = width;
  f.shape = FilterShape::rect;
  return f;
}

CovMatrix covariance_model(const DriftModel& model, const FilterMode& filter,
                           const ModelRouteOptions& opts) {
  require_stable(model);
  const Mat8 v8 = steady_covariance(model);
  const auto sel = intracavity_selector(model.params.theta);
  const Mat4 vi = sel * v8 * sel.transpose();

  OpticalMoments m = filtered_moments(model, filter, opts, true);
  // Mechanical block: symmetrized part from Lyapunov plus [x, p] = 2i.
  m.q(2, 2) = vi(2, 2);
  m.q(3, 3) = vi(3, 3);
  m.q(2, 3) = cd(vi(2, 3), 1.0);
  m.q(3, 2) = cd(vi(3, 2), -1.0);

  const Mat4c t = ladder_to_quadrature();
  const Mat4c mu = t * m.q * t.transpose();
  CovMatrix cm;
  cm.v = (0.5 * (mu + mu.transpose())).real();
  cm.provenance = Provenance::model_route;
  cm.params_hash = params_hash(model.params);
  return cm;
}

double filtered_mode_commutator(const DriftModel& model, const FilterMode& filter,
                                const ModelRouteOptions& opts) {
  require_stable(model);
  const OpticalMoments m = filtered_moments(model, filter, opts, false);
  return (m.q(0, 1) - m.q(1, 0)).real();
}

CovMatrix covariance_direct(const SpectralMatrix& spec, const FilterMode& filter,
                            const SystemParams& params, const DirectRouteOptions& opts) {
  if (spec.size() < 2) throw InvalidInput("direct route: spectral grid too short");
  if (!(params.g_a > 0.0)) throw InvalidInput("direct route: g_A must be positive");
  if (!(params.eta > 0.0) || !(params.kappa > 0.0)) throw InvalidInput("direct route: need eta, kappa > 0");
  if (!(opts.mech_band > 0.0)) throw InvalidInput("direct route: mechanical band must be positive");

  const double ob = params.bright_frequency();
  const double half = 0.5 * opts.mech_band;
  const IntervalSet band_f = filter.support();
  const IntervalSet band_m =
      IntervalSet::interval(ob - half, ob + half).united(IntervalSet::interval(-ob - half, -ob + half));
  const double lo = spec.grid.front(), hi = spec.grid.back();
  for (const auto* s : {&band_f, &band_m}) {
    for (const auto& p : s->pieces()) {
      if (p.lo < lo || p.hi > hi) throw InvalidInput("direct route: spectral grid does not cover the bands");
    }
  }
  for (const auto& p : band_f.mirrored().pieces()) {
    if (p.lo < lo || p.hi > hi) throw InvalidInput("direct route: spectral grid does not cover the bands");
  }

  const double peak = 2.0 / params.kappa;
  const double s = std::sqrt(params.eta * params.kappa) * params.g_a;
  auto chi_a = [&](double w) { return susceptibility(w, params.kappa, params.delta_a); };
  const bool hermitian = opts.reconstruction == MechReconstruction::hermitian;
  const IntervalSet band_up = IntervalSet::interval(ob - half, ob + half);
  if (hermitian && half > ob) throw InvalidInput("direct route: Hermitian bands overlap (mech_band > 2 Omega_b)");
  for (const auto& p : (hermitian ? band_up : band_m).pieces()) {
    for (int k = 0; k <= 64; ++k) {
      const double w = p.lo + (p.hi - p.lo) * k / 64.0;
      if (std::abs(chi_a(w)) < opts.chi_floor * peak) {
        throw InvalidInput("direct route: |chi_A| below floor in the mechanical band");
      }
    }
  }

  // Reconstruction weights K_rl(ω) on ladder entry l and their supports.
  // Literal: x_b(ω) from a_A(ω) on both sidebands. Hermitian: a_A(ω) on the
  // upper sideband and, by x(−ω) = x(ω)†, a_A†(ω) on the lower one.
  struct Entry {
    int row, ladder;
    IntervalSet support;
  };
  const double amp = filter.amplitude();
  const IntervalSet band_down = band_up.mirrored();
  std::vector<Entry> entries = {
      {0, kAB, band_f}, {0, kABdag, band_f.mirrored()}, {1, kAB, band_f}, {1, kABdag, band_f.mirrored()}};
  if (hermitian) {
    entries.insert(entries.end(), {{2, kAA, band_up}, {2, kAAdag, band_down}, {3, kAA, band_up}, {3, kAAdag, band_down}});
  } else {
    entries.insert(entries.end(), {{2, kAA, band_m}, {3, kAA, band_m}});
  }
  auto weight = [&](int row, int ladder, double w) -> cd {
    const cd wx = ladder == kAA ? 1.0 / (-kI * s * chi_a(w)) : 1.0 / (kI * s * std::conj(chi_a(-w)));
    switch (row) {
      case 0: return amp;
      case 1: return ladder == kAB ? -kI * amp : kI * amp;
      case 2: return wx;
      default: return -kI * (w / ob) * wx;
    }
  };

  struct Term {
    std::size_t e1, e2;
    IntervalSet support;
  };
  std::vector<Term> terms;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    for (std::size_t j = 0; j < entries.size(); ++j) {
      IntervalSet sup = entries[i].support.intersected(entries[j].support.mirrored());
      if (!sup.empty()) terms.push_back({i, j, std::move(sup)});
    }
  }

  const Mat4c r_inv = phase_matrix(-spec.phase_a, -spec.phase_b);
  Mat4c acc = Mat4c::Zero();
  const std::size_t n = spec.size();
  for (std::size_t k = 0; k < n; ++k) {
    const double w = spec.grid[k];
    const double c_lo = k == 0 ? w : 0.5 * (spec.grid[k - 1] + w);
    const double c_hi = k + 1 == n ? w : 0.5 * (w + spec.grid[k + 1]);
    const Mat4c a = r_inv * spec.values[k] * r_inv;
    for (const auto& t : terms) {
      const double len = t.support.overlap(c_lo, c_hi);
      if (len <= 0.0) continue;
      const Entry& e1 = entries[t.e1];
      const Entry& e2 = entries[t.e2];
      acc(e1.row, e2.row) +=
          weight(e1.row, e1.ladder, w) * a(e1.ladder, e2.ladder) * weight(e2.row, e2.ladder, -w) * len;
    }
  }
  acc /= kTwoPi;

  CovMatrix cm;
  cm.v = (0.5 * (acc + acc.transpose())).real();
  cm.provenance = Provenance::direct_route;
  cm.params_hash = params_hash(params);
  return cm;
}

}  // namespace levent
