#include "levent/spectra.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <Eigen/LU>

#include "levent/error.hpp"

namespace levent {

namespace {

constexpr cd kI{0.0, 1.0};

using NoiseMap = Eigen::Matrix<cd, 8, kNoiseInputs>;

// Coupling of the noise inputs into the quadrature equations.
NoiseMap noise_map(const DriftModel& model) {
  NoiseMap l = NoiseMap::Zero();
  const double sk = std::sqrt(model.params.kappa);
  for (int a = 0; a < 2; ++a) {
    l(2 * a, 2 * a) = sk;
    l(2 * a, 2 * a + 1) = sk;
    l(2 * a + 1, 2 * a) = -kI * sk;
    l(2 * a + 1, 2 * a + 1) = kI * sk;
  }
  l(kPx, 4) = 1.0;
  l(kPy, 5) = 1.0;
  return l;
}

// ⟨w w†⟩ for the inputs: vacuum for the fields, symmetric white force noise.
Eigen::Matrix<double, kNoiseInputs, 1> normal_noise(const DriftModel& model) {
  Eigen::Matrix<double, kNoiseInputs, 1> n = Eigen::Matrix<double, kNoiseInputs, 1>::Zero();
  n(0) = 1.0;
  n(2) = 1.0;
  n(4) = model.diffusion(kPx, kPx);
  n(5) = model.diffusion(kPy, kPy);
  n(6) = 1.0;
  n(8) = 1.0;
  return n;
}

JointSpectrum swap_columns(const JointSpectrum& h) {
  JointSpectrum y = h;
  y.col(0) = h.col(1);
  y.col(1) = h.col(0);
  y.col(2) = h.col(3);
  y.col(3) = h.col(2);
  return y;
}

}  // namespace

cd susceptibility(double omega, double kappa, double delta) {
  return 1.0 / cd(0.5 * kappa, -(omega + delta));
}

namespace {

Eigen::PartialPivLU<Mat8c> resolvent_lu(double omega, const DriftModel& model) {
  Mat8c a = -model.drift.cast<cd>();
  a.diagonal().array() += cd(0.0, -omega);
  Eigen::PartialPivLU<Mat8c> lu(a);
  if (!(lu.rcond() > 1e-13)) {
    throw SingularMatrix("transfer: -i*omega is an eigenvalue of the drift at omega = " +
                         std::to_string(omega));
  }
  return lu;
}

}  // namespace

Mat8c transfer(double omega, const DriftModel& model) { return resolvent_lu(omega, model).inverse(); }

Mat4 ladder_swap() {
  Mat4 p = Mat4::Zero();
  p(0, 1) = p(1, 0) = p(2, 3) = p(3, 2) = 1.0;
  return p;
}

Mat4c phase_matrix(double phi_a, double phi_b) {
  Mat4c r = Mat4c::Zero();
  r(0, 0) = std::polar(1.0, phi_a);
  r(1, 1) = std::polar(1.0, -phi_a);
  r(2, 2) = std::polar(1.0, phi_b);
  r(3, 3) = std::polar(1.0, -phi_b);
  return r;
}

Mat4c heterodyne_covariance(const Mat4c& a) {
  Mat4c h = a * ladder_swap();
  h(1, 1) += 1.0;
  h(3, 3) += 1.0;
  return h;
}

Mat4c spectral_from_heterodyne(const Mat4c& h) {
  Mat4c d = h;
  d(1, 1) -= 1.0;
  d(3, 3) -= 1.0;
  return d * ladder_swap();
}

JointResponse joint_response(double omega, const DriftModel& model, const OutputOptions& opts) {
  const auto& p = model.params;
  const NoiseMap u = resolvent_lu(omega, model).solve(noise_map(model));
  const double sk = std::sqrt(p.kappa);
  const double se = std::sqrt(p.eta);
  const double sl = std::sqrt(1.0 - p.eta);
  const double c = std::cos(p.theta), s = std::sin(p.theta);

  JointResponse g = JointResponse::Zero();
  g.row(4) = c * u.row(kXx) + s * u.row(kXy);
  g.row(5) = c * u.row(kPx) + s * u.row(kPy);
  for (int a = 0; a < 2; ++a) {
    const int X = 2 * a, Y = 2 * a + 1;
    Eigen::Matrix<cd, 1, kNoiseInputs> out = sk * 0.5 * (u.row(X) + kI * u.row(Y));
    Eigen::Matrix<cd, 1, kNoiseInputs> outd = sk * 0.5 * (u.row(X) - kI * u.row(Y));
    out(2 * a) -= 1.0;
    outd(2 * a + 1) -= 1.0;
    g.row(2 * a) = se * out;
    g.row(2 * a + 1) = se * outd;
    g(2 * a, 6 + 2 * a) += sl;
    g(2 * a + 1, 6 + 2 * a + 1) += sl;
  }
  if (opts.drop_meter_noise_a) {
    // a_A^out = −i√κ g_A χ_A x_b + (κχ_A − 1) a_in^A exactly; keep the x_b part.
    const cd ga = -kI * sk * p.g_a * susceptibility(omega, p.kappa, p.delta_a);
    const cd gad = kI * sk * p.g_a * std::conj(susceptibility(-omega, p.kappa, p.delta_a));
    g.row(0) = se * ga * g.row(4);
    g.row(1) = se * gad * g.row(4);
  }
  return g;
}

JointSpectrum joint_spectrum(double omega, const DriftModel& model, const OutputOptions& opts) {
  const JointResponse g = joint_response(omega, model, opts);
  const auto n = normal_noise(model);
  const JointSpectrum h = g * n.asDiagonal() * g.adjoint();
  return swap_columns(h);
}

Mat4c output_spectrum(double omega, const DriftModel& model, const OutputOptions& opts) {
  Mat4c a = joint_spectrum(omega, model, opts).topLeftCorner<4, 4>();
  if (opts.apply_detection_phases) {
    const Mat4c r = phase_matrix(model.params.phi_a, model.params.phi_b);
    a = r * a * r;
  }
  return a;
}

SpectralMatrix output_spectral_matrix(const std::vector<double>& grid, const DriftModel& model,
                                      const OutputOptions& opts) {
  const Stability st = stability(model);
  if (!st.is_stable) throw UnstableDrift("max Re eig(M) = " + std::to_string(-st.margin) + " rad/s");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw InvalidInput("frequency grid must be strictly increasing");
  }
  SpectralMatrix spec;
  spec.grid = grid;
  spec.kind = SpectralKind::model;
  if (opts.apply_detection_phases) {
    spec.phase_a = model.params.phi_a;
    spec.phase_b = model.params.phi_b;
  }
  spec.values.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) spec.values[i] = output_spectrum(grid[i], model, opts);
  return spec;
}

std::vector<double> heterodyne_psd(const SpectralMatrix& spec, Field field) {
  const int i = field == Field::A ? kAA : kAB;
  std::vector<double> out(spec.size());
  for (std::size_t k = 0; k < spec.size(); ++k) out[k] = spec.values[k](i, i + 1).real();
  return out;
}

SpectralMatrix with_phases(const SpectralMatrix& spec, double phi_a, double phi_b) {
  SpectralMatrix out = spec;
  const Mat4c r = phase_matrix(phi_a - spec.phase_a, phi_b - spec.phase_b);
  for (auto& a : out.values) a = r * a * r;
  out.phase_a = phi_a;
  out.phase_b = phi_b;
  return out;
}

std::vector<double> uniform_grid(double lo, double hi, double step) {
  if (!(hi > lo) || !(step > 0.0)) throw InvalidInput("uniform_grid: need lo < hi and step > 0");
  const auto n = static_cast<std::size_t>(std::ceil((hi - lo) / step - 1e-9));
  std::vector<double> g(n + 1);
  for (std::size_t i = 0; i <= n; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / n;
  return g;
}

std::vector<double> default_grid(const SystemParams&, double span, double step) {
  return uniform_grid(-span, span, step);
}

void write_spectral_csv(const SpectralMatrix& spec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << std::setprecision(17);
  out << "# schema=levent-spectral/1 kind=" << (spec.kind == SpectralKind::model ? "model" : "measured")
      << " convention=two-sided phase_a=" << spec.phase_a << " phase_b=" << spec.phase_b << '\n';
  out << "freq_hz";
  for (int i = 1; i <= 4; ++i)
    for (int j = 1; j <= 4; ++j) out << ",A_" << i << j << "_re,A_" << i << j << "_im";
  out << '\n';
  for (std::size_t k = 0; k < spec.size(); ++k) {
    out << to_hz(spec.grid[k]);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) out << ',' << spec.values[k](i, j).real() << ',' << spec.values[k](i, j).imag();
    out << '\n';
  }
  if (!out) throw NumericalError("write failed: " + path.string());
}

SpectralMatrix read_spectral_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  SpectralMatrix spec;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string tok;
      while (ss >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "kind") spec.kind = val == "measured" ? SpectralKind::measured : SpectralKind::model;
        if (key == "phase_a") spec.phase_a = std::stod(val);
        if (key == "phase_b") spec.phase_b = std::stod(val);
      }
      continue;
    }
    if (!header) {
      if (line.rfind("freq_hz", 0) != 0) throw InvalidInput("spectral CSV: bad header");
      header = true;
      continue;
    }
    std::istringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() != 33) throw InvalidInput("spectral CSV: expected 33 columns");
    spec.grid.push_back(hz(vals[0]));
    Mat4c a;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) a(i, j) = cd(vals[1 + 2 * (4 * i + j)], vals[2 + 2 * (4 * i + j)]);
    spec.values.push_back(a);
  }
  if (!header) throw InvalidInput("spectral CSV: missing header");
  return spec;
}

void write_psd_csv(const SpectralMatrix& spec, const std::filesystem::path& path, bool one_sided) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  const double f = one_sided ? 2.0 : 1.0;
  const auto pa = heterodyne_psd(spec, Field::A);
  const auto pb = heterodyne_psd(spec, Field::B);
  out << std::setprecision(17);
  out << "# schema=levent-psd/1 convention=" << (one_sided ? "one-sided" : "two-sided")
      << " units=shot-noise\n";
  out << "freq_hz,psd_A,psd_B\n";
  for (std::size_t k = 0; k < spec.size(); ++k)
    out << to_hz(spec.grid[k]) << ',' << f * pa[k] << ',' << f * pb[k] << '\n';
  if (!out) throw NumericalError("write failed: " + path.string());
}

}  // namespace levent
