#include <algorithm>
#include <cmath>
#include <numbers>

#include <ceres/ceres.h>
#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "levent/error.hpp"
#include "levent/pipeline.hpp"

namespace levent {

namespace {

constexpr double kUnit = kTwoPi * 1e3;  // fit parameters in 2π·kHz
constexpr int kGa = 4, kGb = 5;

// Diagonal of the calibrated 4×4 covariance at each positive offset: field A
// at ±ω, then field B at ±ω. The four periodograms share the mechanical
// fluctuations, so they are fitted jointly rather than as independent bins.
struct PsdData {
  std::vector<double> omega;
  std::vector<std::size_t> index;  // position in the analysis grid
  std::size_t grid_size = 0;
  std::vector<std::array<double, 4>> diag;
  double n_seg = 1.0;
  std::array<double, 2> floor{0.0, 0.0};
  std::array<double, 4> gain_rel_var{0.0, 0.0, 0.0, 0.0};
  int gain_half_width = 0;
  std::array<double, 4> dark_var{0.0, 0.0, 0.0, 0.0};
  std::size_t residual_count() const { return 4 * omega.size(); }
};

std::array<double, kFitParams> pack(const SystemParams& p) {
  return {p.omega_x / kUnit, p.omega_y / kUnit, p.heating_x / kUnit, p.heating_y / kUnit,
          p.g_a / kUnit,     p.g_b / kUnit,     p.delta_a / kUnit,   p.delta_b / kUnit};
}

SystemParams unpack(const double* x, const SystemParams& base) {
  SystemParams p = base;
  p.omega_x = x[0] * kUnit;
  p.omega_y = x[1] * kUnit;
  p.heating_x = x[2] * kUnit;
  p.heating_y = x[3] * kUnit;
  p.g_a = x[4] * kUnit;
  p.g_b = x[5] * kUnit;
  p.delta_a = x[6] * kUnit;
  p.delta_b = x[7] * kUnit;
  return p;
}

// Whitened residuals of the four periodograms at each offset; false if the
// parameters are unphysical or the model is unstable. For circular Gaussian
// data cov(|v_i|², |v_j|²) = |H_ij|²/N, with H the model covariance plus the
// removed floor, plus the dark-subtraction variance on the diagonal.
struct GroupModel {
  Eigen::Vector4d diag;  // model PSDs plus removed floor
  Eigen::Matrix4d chol;  // lower Cholesky factor of the periodogram covariance
};

bool residuals(const PsdData& d, const SystemParams& p, double* r, std::vector<GroupModel>* groups = nullptr) {
  try {
    const DriftModel m = build_drift(p);
    if (!stability(m).is_stable) return false;
    OutputOptions o;
    o.apply_detection_phases = false;
    const std::array<double, 4> floor{d.floor[0], d.floor[0], d.floor[1], d.floor[1]};
    for (std::size_t k = 0; k < d.omega.size(); ++k) {
      const Mat4c h = heterodyne_covariance(output_spectrum(d.omega[k], m, o));
      Eigen::Matrix4d cov;
      Eigen::Vector4d res;
      for (int i = 0; i < 4; ++i) {
        res(i) = d.diag[k][static_cast<std::size_t>(i)] - h(i, i).real();
        for (int j = 0; j < 4; ++j) {
          const cd hij = h(i, j) + (i == j ? floor[static_cast<std::size_t>(i)] : 0.0);
          cov(i, j) = std::norm(hij) / d.n_seg;
        }
        cov(i, i) += d.dark_var[static_cast<std::size_t>(i)];
      }
      const Eigen::LLT<Eigen::Matrix4d> llt(cov);
      if (llt.info() != Eigen::Success) return false;
      const Eigen::Vector4d w = llt.matrixL().solve(res);
      for (int i = 0; i < 4; ++i) r[4 * k + static_cast<std::size_t>(i)] = w(i);
      if (groups) {
        GroupModel g;
        for (int i = 0; i < 4; ++i) g.diag(i) = h(i, i).real() + floor[static_cast<std::size_t>(i)];
        g.chol = llt.matrixL();
        groups->push_back(g);
      }
    }
    return true;
  } catch (const InvalidInput&) {
    return false;
  } catch (const NumericalError&) {
    return false;
  }
}

struct PsdCost {
  const PsdData* data;
  SystemParams base;
  bool operator()(double const* const* x, double* r) const { return residuals(*data, unpack(x[0], base), r); }
};

PsdData extract(const CMatrixGrid& cal, double center, double half_band) {
  PsdData d;
  d.n_seg = static_cast<double>(std::max<std::size_t>(cal.n_segments, 1));
  d.floor = cal.removed_floor;
  d.gain_rel_var = cal.gain_rel_var;
  d.gain_half_width = cal.gain_half_width;
  d.dark_var = cal.dark_var;
  d.grid_size = cal.grid.size();
  for (std::size_t k = 0; k < cal.grid.size(); ++k) {
    const double w = cal.grid[k];
    if (w <= 0.0 || std::abs(w - center) > half_band) continue;
    d.omega.push_back(w);
    d.index.push_back(k);
    const auto& c = cal.values[k];
    d.diag.push_back({c(0, 0).real(), c(1, 1).real(), c(2, 2).real(), c(3, 3).real()});
  }
  return d;
}

// Two strongest local maxima of the folded excess PSD, at least 2 kHz apart.
std::vector<double> detect_peaks(const PsdData& d) {
  std::vector<std::pair<double, double>> folded;  // (|ω|, excess)
  for (std::size_t k = 0; k < d.omega.size(); ++k) {
    const auto& v = d.diag[k];
    folded.emplace_back(d.omega[k], v[0] + v[1] + v[2] + v[3] - 4.0);
  }
  std::sort(folded.begin(), folded.end());
  std::vector<std::pair<double, double>> merged;
  for (const auto& [w, e] : folded) {
    if (!merged.empty() && std::abs(merged.back().first - w) < 1e-6 * w) {
      merged.back().second += e;
    } else {
      merged.emplace_back(w, e);
    }
  }
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(merged.size());
  const std::ptrdiff_t hw = 5;
  std::vector<double> sm(merged.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double s = 0.0;
    int c = 0;
    for (auto j = std::max<std::ptrdiff_t>(0, i - hw); j <= std::min(n - 1, i + hw); ++j, ++c) {
      s += merged[static_cast<std::size_t>(j)].second;
    }
    sm[static_cast<std::size_t>(i)] = s / c;
  }
  std::vector<std::pair<double, double>> peaks;  // (height, ω)
  for (std::ptrdiff_t i = 1; i + 1 < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    if (sm[u] >= sm[u - 1] && sm[u] >= sm[u + 1]) peaks.emplace_back(sm[u], merged[u].first);
  }
  std::sort(peaks.rbegin(), peaks.rend());
  std::vector<double> out;
  for (const auto& [h, w] : peaks) {
    if (std::all_of(out.begin(), out.end(), [&](double o) { return std::abs(o - w) > hz(2e3); })) {
      out.push_back(w);
    }
    if (out.size() == 2) break;
  }
  return out;
}

struct Bounds {
  std::array<double, kFitParams> lo, hi;
};

Bounds bounds_for(const std::array<double, kFitParams>& x0) {
  Bounds b;
  const double wmax = std::max(x0[0], x0[1]);
  b.lo = {0.5 * x0[0], 0.5 * x0[1], 0.0, 0.0, 0.0, 0.0, -3.0 * wmax, 0.0};
  b.hi = {1.5 * x0[0], 1.5 * x0[1], 10.0 * wmax, 10.0 * wmax, 2.0 * wmax, 2.0 * wmax, 0.0, 3.0 * wmax};
  return b;
}

struct Attempt {
  std::array<double, kFitParams> x{};
  double cost = 0.0;
  bool converged = false;
  std::string message;
};

Attempt run_fit(const PsdData& data, const SystemParams& base, std::array<double, kFitParams> x0,
                const Bounds& b, int max_iter) {
  for (int i = 0; i < kFitParams; ++i) x0[i] = std::clamp(x0[i], b.lo[i], b.hi[i]);
  Attempt at;
  at.x = x0;
  ceres::Problem problem;
  auto* cost = new ceres::DynamicNumericDiffCostFunction<PsdCost, ceres::CENTRAL>(new PsdCost{&data, base});
  cost->AddParameterBlock(kFitParams);
  cost->SetNumResiduals(static_cast<int>(data.residual_count()));
  problem.AddResidualBlock(cost, nullptr, at.x.data());
  for (int i = 0; i < kFitParams; ++i) {
    problem.SetParameterLowerBound(at.x.data(), i, b.lo[i]);
    problem.SetParameterUpperBound(at.x.data(), i, b.hi[i]);
  }
  ceres::Solver::Options opt;
  opt.linear_solver_type = ceres::DENSE_QR;
  opt.max_num_iterations = max_iter;
  opt.function_tolerance = 1e-12;
  opt.gradient_tolerance = 1e-12;
  opt.parameter_tolerance = 1e-10;
  opt.logging_type = ceres::SILENT;
  opt.minimizer_progress_to_stdout = false;
  opt.num_threads = 1;
  ceres::Solver::Summary summary;
  ceres::Solve(opt, &problem, &summary);
  at.cost = summary.final_cost;
  at.converged = summary.termination_type == ceres::CONVERGENCE && summary.IsSolutionUsable();
  at.message = summary.message;
  return at;
}

// Parametrization for the covariance: couplings enter through g².
std::array<double, kFitParams> to_fisher(std::array<double, kFitParams> x) {
  x[kGa] = x[kGa] * x[kGa];
  x[kGb] = x[kGb] * x[kGb];
  return x;
}

std::array<double, kFitParams> from_fisher(std::array<double, kFitParams> z) {
  z[kGa] = std::sqrt(std::max(0.0, z[kGa]));
  z[kGb] = std::sqrt(std::max(0.0, z[kGb]));
  return z;
}

// Second moment of Jᵀ δr from the calibration gain. The smoothed vacuum level
// at bin k is the mean of independent per-bin levels over a window, and a
// relative gain error ε moves each calibrated PSD by −(PSD + floor)·ε.
Eigen::MatrixXd gain_information(const PsdData& data, const SystemParams& base,
                                 const std::array<double, kFitParams>& x, const Eigen::MatrixXd& jac) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(kFitParams, kFitParams);
  if (std::all_of(data.gain_rel_var.begin(), data.gain_rel_var.end(), [](double v) { return v <= 0.0; })) return out;
  std::vector<double> r(data.residual_count());
  std::vector<GroupModel> groups;
  if (!residuals(data, unpack(x.data(), base), r.data(), &groups)) return out;
  const auto n = static_cast<std::ptrdiff_t>(data.grid_size);
  const auto hw = static_cast<std::ptrdiff_t>(data.gain_half_width);
  // u[m] accumulates the parameter sensitivity to the level at grid bin m.
  std::vector<Eigen::Matrix<double, kFitParams, 4>> u(data.grid_size, Eigen::Matrix<double, kFitParams, 4>::Zero());
  for (std::size_t k = 0; k < data.omega.size(); ++k) {
    const Eigen::Matrix<double, 4, kFitParams> jk = jac.middleRows(static_cast<Eigen::Index>(4 * k), 4);
    // Sensitivity of the parameters' normal equations to the raw PSD errors.
    const Eigen::Matrix<double, 4, kFitParams> sens = groups[k].chol.transpose().triangularView<Eigen::Upper>().solve(jk);
    const auto c = static_cast<std::ptrdiff_t>(data.index[k]);
    const auto lo = std::max<std::ptrdiff_t>(0, c - hw), hi = std::min(n - 1, c + hw);
    const double w = 1.0 / static_cast<double>(hi - lo + 1);
    Eigen::Matrix<double, kFitParams, 4> col;
    for (int i = 0; i < 4; ++i) col.col(i) = sens.row(i).transpose() * (groups[k].diag(i) * w);
    for (auto m = lo; m <= hi; ++m) u[static_cast<std::size_t>(m)] += col;
  }
  for (const auto& um : u) {
    for (int i = 0; i < 4; ++i) out += data.gain_rel_var[static_cast<std::size_t>(i)] * um.col(i) * um.col(i).transpose();
  }
  return out;
}

std::array<double, kFitParams> uncertainties(const PsdData& data, const SystemParams& base,
                                             const std::array<double, kFitParams>& x, std::string& note) {
  const std::size_t nr = data.residual_count();
  const auto z0 = to_fisher(x);
  Eigen::MatrixXd jac(nr, kFitParams);
  std::vector<double> rp(nr), rm(nr);
  for (int i = 0; i < kFitParams; ++i) {
    const double h = 1e-5 * std::max(std::abs(z0[i]), 1.0);
    auto zp = z0, zm = z0;
    zp[i] += h;
    zm[i] -= h;
    double denom = 2.0 * h;
    if ((i == kGa || i == kGb) && zm[i] < 0.0) {
      zm[i] = z0[i];
      denom = h;
    }
    const bool ok_p = residuals(data, unpack(from_fisher(zp).data(), base), rp.data());
    const bool ok_m = residuals(data, unpack(from_fisher(zm).data(), base), rm.data());
    if (!ok_p || !ok_m) {
      note = "covariance: model undefined next to the optimum";
      std::array<double, kFitParams> nan;
      nan.fill(std::numeric_limits<double>::quiet_NaN());
      return nan;
    }
    for (std::size_t k = 0; k < nr; ++k) jac(static_cast<Eigen::Index>(k), i) = (rp[k] - rm[k]) / denom;
  }
  const Eigen::MatrixXd fisher = jac.transpose() * jac;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fisher);
  const double top = es.eigenvalues().maxCoeff();
  Eigen::VectorXd inv = es.eigenvalues();
  for (Eigen::Index i = 0; i < inv.size(); ++i) {
    if (inv(i) > 1e-12 * top) {
      inv(i) = 1.0 / inv(i);
    } else {
      inv(i) = 0.0;
      note = "covariance: Fisher matrix is rank deficient";
    }
  }
  const Eigen::MatrixXd finv = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  const Eigen::MatrixXd cov = finv + finv * gain_information(data, base, from_fisher(z0), jac) * finv;
  std::array<double, kFitParams> s{};
  for (int i = 0; i < kFitParams; ++i) s[i] = std::sqrt(std::max(0.0, cov(i, i)));
  for (int i : {kGa, kGb}) {
    const double g = x[i];
    s[i] = std::sqrt(g * g + s[i]) - g;
  }
  for (auto& v : s) v *= kUnit;
  return s;
}

}  // namespace

const std::array<const char*, kFitParams>& FitResult::names() {
  static const std::array<const char*, kFitParams> n = {"omega_x", "omega_y", "heating_x", "heating_y",
                                                         "g_a",     "g_b",     "delta_a",   "delta_b"};
  return n;
}

FitResult fit_psd(const CMatrixGrid& cal, const SystemParams& start, const FitOptions& opts) {
  start.validate();
  if (cal.state == CalibrationState::raw) throw InvalidInput("fit_psd: grid is not calibrated");
  const PsdData data = extract(cal, start.bright_frequency(), opts.fit_half_band);
  if (data.residual_count() < 8 * kFitParams) throw InvalidInput("fit_psd: too few bins in the fit band");

  const auto x_start = pack(start);
  const Bounds b = bounds_for(x_start);
  std::vector<std::array<double, kFitParams>> starts{x_start};
  const auto peaks = detect_peaks(data);
  if (peaks.size() == 2) {
    const double hi = std::max(peaks[0], peaks[1]) / kUnit, lo = std::min(peaks[0], peaks[1]) / kUnit;
    auto s1 = x_start;
    const bool x_high = start.omega_x >= start.omega_y;
    s1[0] = x_high ? hi : lo;
    s1[1] = x_high ? lo : hi;
    auto s2 = s1;
    std::swap(s2[0], s2[1]);
    starts.push_back(s1);
    starts.push_back(s2);
  }
  if (static_cast<int>(starts.size()) > opts.multistart) starts.resize(static_cast<std::size_t>(std::max(1, opts.multistart)));

  std::optional<Attempt> best;
  std::string last_message;
  for (const auto& s0 : starts) {
    Attempt a = run_fit(data, start, s0, b, opts.max_iterations);
    last_message = a.message;
    if (!a.converged) continue;
    if (!best || a.cost < best->cost) best = a;
  }
  if (!best) throw NonConvergence("fit_psd: no start converged (" + last_message + ")");
  // At θ = π/4 the labels x and y are interchangeable. Keep the start's ordering on a tie.
  if ((best->x[0] >= best->x[1]) != (x_start[0] >= x_start[1])) {
    auto swapped = best->x;
    std::swap(swapped[0], swapped[1]);
    std::swap(swapped[2], swapped[3]);
    std::vector<double> r(data.residual_count());
    if (residuals(data, unpack(swapped.data(), start), r.data())) {
      double c = 0.0;
      for (double v : r) c += 0.5 * v * v;
      if (std::abs(c - best->cost) <= 1e-9 * best->cost) best->x = swapped;
    }
  }

  FitResult r;
  r.params = unpack(best->x.data(), start);
  for (int i = 0; i < kFitParams; ++i) r.values[i] = best->x[i] * kUnit;
  r.chi2 = 2.0 * best->cost;
  r.dof = static_cast<int>(data.residual_count()) - kFitParams;
  r.converged = true;
  r.message = best->message;
  std::string note;
  r.sigma = uncertainties(data, start, best->x, note);
  if (!note.empty()) r.message += "; " + note;
  for (int i = 0; i < kFitParams; ++i) {
    const double span = b.hi[i] - b.lo[i];
    if (std::abs(best->x[i] - b.lo[i]) < 1e-6 * span || std::abs(best->x[i] - b.hi[i]) < 1e-6 * span) {
      r.at_bounds.push_back(FitResult::names()[static_cast<std::size_t>(i)]);
    }
  }
  r.phi_a = start.phi_a;
  r.phi_b = start.phi_b;
  return r;
}

PhaseFit fit_phases(const CMatrixGrid& cal, const FitResult& fit) {
  SystemParams p = fit.params;
  p.phi_a = 0.0;
  p.phi_b = 0.0;
  const DriftModel model = build_drift(p);
  OutputOptions o;
  o.apply_detection_phases = false;
  const double center = p.bright_frequency();
  const double half = FitOptions{}.fit_half_band;

  // cost(φ) = const − 2 Re Σ_ij S_ij r_i r_j with S_ij = Σ_k conj(D_ij) A_ij.
  Mat4c s = Mat4c::Zero();
  double norm_a = 0.0;
  for (std::size_t k = 0; k < cal.grid.size(); ++k) {
    const double w = cal.grid[k];
    if (std::abs(std::abs(w) - center) > half) continue;
    const Mat4c d = spectral_from_heterodyne(cal.values[k]);
    const Mat4c a = output_spectrum(w, model, o);
    s += d.conjugate().cwiseProduct(a);
    norm_a += a.squaredNorm();
  }
  if (norm_a == 0.0) throw InvalidInput("fit_phases: no bins in the fit band");

  const int sign[4] = {1, -1, 1, -1};
  const int fld[4] = {0, 0, 1, 1};
  auto coeff = [&](int i, int j) {
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    c(fld[i]) += sign[i];
    c(fld[j]) += sign[j];
    return c;
  };
  auto value = [&](const Eigen::Vector2d& phi) {
    double v = 0.0;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) v -= 2.0 * (s(i, j) * std::polar(1.0, coeff(i, j).dot(phi))).real();
    return v;
  };
  auto grad_hess = [&](const Eigen::Vector2d& phi, Eigen::Vector2d& g, Eigen::Matrix2d& h) {
    g.setZero();
    h.setZero();
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        const Eigen::Vector2d c = coeff(i, j);
        const cd t = s(i, j) * std::polar(1.0, c.dot(phi));
        g -= 2.0 * (cd(0.0, 1.0) * t).real() * c;
        h += 2.0 * t.real() * c * c.transpose();
      }
    }
  };

  Eigen::Vector2d best(0.0, 0.0);
  double best_v = value(best);
  const int n = 120;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Eigen::Vector2d phi(-std::numbers::pi + kTwoPi * i / n, -std::numbers::pi + kTwoPi * j / n);
      const double v = value(phi);
      if (v < best_v) {
        best_v = v;
        best = phi;
      }
    }
  }
  Eigen::Vector2d g;
  Eigen::Matrix2d h;
  for (int it = 0; it < 50; ++it) {
    grad_hess(best, g, h);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(h);
    if (es.eigenvalues().minCoeff() <= 0.0) break;
    const Eigen::Vector2d step = h.ldlt().solve(g);
    best -= step;
    if (step.norm() < 1e-14) break;
  }
  grad_hess(best, g, h);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(h);

  PhaseFit out;
  out.curvature = es.eigenvalues().minCoeff() / norm_a;
  out.degenerate = !(out.curvature > 1e-6);
  double pa = best(0), pb = best(1);
  auto wrap = [](double x) { return std::remainder(x, kTwoPi); };
  pa = wrap(pa);
  pb = wrap(pb);
  if (pa <= -0.5 * std::numbers::pi || pa > 0.5 * std::numbers::pi) {
    pa = wrap(pa + std::numbers::pi);
    pb = wrap(pb + std::numbers::pi);
  }
  out.phi_a = pa;
  out.phi_b = pb;
  out.cost = value(Eigen::Vector2d(pa, pb));
  return out;
}

nlohmann::json to_json(const FitResult& fit) {
  nlohmann::json j;
  j["converged"] = fit.converged;
  j["message"] = fit.message;
  j["chi2"] = fit.chi2;
  j["dof"] = fit.dof;
  j["chi2_per_dof"] = fit.chi2_per_dof();
  j["at_bounds"] = fit.at_bounds;
  nlohmann::json vals;
  for (int i = 0; i < kFitParams; ++i) {
    const double s = fit.sigma[static_cast<std::size_t>(i)];
    vals[FitResult::names()[static_cast<std::size_t>(i)]] = {
        {"value_hz", to_hz(fit.values[static_cast<std::size_t>(i)])},
        {"sigma_hz", std::isfinite(s) ? nlohmann::json(to_hz(s)) : nlohmann::json(nullptr)}};
  }
  j["fitted"] = vals;
  j["phi_a_rad"] = fit.phi_a;
  j["phi_b_rad"] = fit.phi_b;
  j["params"] = to_json(fit.params);
  return j;
}

}  // namespace levent
