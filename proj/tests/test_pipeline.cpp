#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include <doctest.h>

#include "levent/error.hpp"
#include "levent/model.hpp"
#include "levent/pipeline.hpp"
#include "levent/spectra.hpp"
#include "levent/synth.hpp"
#include "support.hpp"

using namespace levent;

namespace {

AnalysisWindow default_window(const SynthConfig& cfg = {}) {
  return make_analysis_window(cfg.sample_rate, cfg.segment_length(), cfg.lo_freq_a, cfg.lo_freq_b,
                              cfg.window);
}

CMatrixGrid constant_grid(const std::vector<double>& grid, const Mat4c& value, double own_a = 0.5,
                          double own_b = 0.5) {
  CMatrixGrid c;
  c.grid = grid;
  c.values.assign(grid.size(), value);
  c.n_segments = 100;
  c.own_fraction_a = own_a;
  c.own_fraction_b = own_b;
  return c;
}

// Reduced chi-square of each C entry against its circular-Gaussian periodogram
// variance, real and imaginary parts pooled.
struct EntryChi2 {
  double value[4][4]{};
};

EntryChi2 entry_chi2(const CMatrixGrid& cal, const DriftModel& m) {
  const double n = static_cast<double>(cal.n_segments);
  const double fl[4] = {cal.removed_floor[0], cal.removed_floor[0], cal.removed_floor[1],
                        cal.removed_floor[1]};
  EntryChi2 r;
  double count[4][4]{};
  for (std::size_t k = 0; k < cal.grid.size(); ++k) {
    const Mat4c model = heterodyne_covariance(output_spectrum(cal.grid[k], m));
    Mat4c h = model;
    for (int i = 0; i < 4; ++i) h(i, i) += fl[i];
    for (int i = 0; i < 4; ++i) {
      for (int j = i; j < 4; ++j) {
        const cd d = cal.values[k](i, j) - model(i, j);
        const double hii = h(i, i).real(), hjj = h(j, j).real();
        if (i == j) {
          r.value[i][j] += d.real() * d.real() / (hii * hii / n);
          count[i][j] += 1.0;
        } else {
          const double re2 = std::real(h(i, j) * h(i, j));
          r.value[i][j] += d.real() * d.real() / (0.5 * (hii * hjj + re2) / n);
          r.value[i][j] += d.imag() * d.imag() / (0.5 * (hii * hjj - re2) / n);
          count[i][j] += 2.0;
        }
      }
    }
  }
  for (int i = 0; i < 4; ++i)
    for (int j = i; j < 4; ++j) r.value[i][j] /= count[i][j];
  return r;
}

}  // namespace

TEST_CASE("analysis window: bins, grid and guards") {
  const SynthConfig cfg;
  const AnalysisWindow w = default_window(cfg);
  CHECK(w.bin_width == doctest::Approx(hz(100.0)).epsilon(1e-12));
  CHECK(w.lo_bin_a == 14000);
  CHECK(w.lo_bin_b == 20000);
  CHECK(w.snap_a < 1e-6);
  CHECK(w.offsets.size() == 5000);
  for (std::size_t i = 1; i < w.offsets.size(); ++i) CHECK(w.offsets[i] > w.offsets[i - 1]);
  for (int o : w.offsets) CHECK(o != 0);
  const auto g = w.grid();
  CHECK(g.front() == doctest::Approx(-hz(250e3)));
  CHECK(g.back() == doctest::Approx(hz(250e3)));

  // Windows of 350 kHz half-width around LOs 600 kHz apart overlap.
  CHECK_THROWS_AS(make_analysis_window(5e6, 50000, hz(1.4e6), hz(2.0e6), hz(350e3)), InvalidInput);
  // Leaving the band above Nyquist.
  CHECK_THROWS_AS(make_analysis_window(5e6, 50000, hz(1.4e6), hz(2.4e6), hz(250e3)), InvalidInput);
  CHECK_THROWS_AS(make_analysis_window(5e6, 50000, hz(1.4e6), hz(2.0e6), hz(50.0)), InvalidInput);
  CHECK_THROWS_AS(make_analysis_window(5e6, 50000, hz(2.0e6), hz(1.4e6), hz(250e3)), InvalidInput);

  // Off-grid LO: snapped and recorded, or rejected when snapping is disabled.
  const AnalysisWindow s = make_analysis_window(5e6, 50000, hz(1.4e6 + 30.0), hz(2.0e6), hz(250e3));
  CHECK(s.lo_bin_a == 14000);
  CHECK(s.snap_a == doctest::Approx(hz(30.0)));
  CHECK_THROWS_AS(
      make_analysis_window(5e6, 50000, hz(1.4e6 + 30.0), hz(2.0e6), hz(250e3), 0.0, false),
      InvalidInput);
}

TEST_CASE("assemble_v: a tone above LO A fills only the upper sideband of field A") {
  const SynthConfig cfg;
  const AnalysisWindow w = default_window(cfg);
  const std::size_t n = cfg.segment_length();
  std::vector<double> x(n);
  const double f0 = 1.4e6 + 30e3;  // exactly on bin 14300
  for (std::size_t t = 0; t < n; ++t) x[t] = std::cos(kTwoPi * f0 * static_cast<double>(t) / cfg.sample_rate);
  const SegmentTransform fft(n, cfg.sample_rate);
  const auto v = assemble_v(fft(x), w);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < w.offsets.size(); ++i) {
    if (w.offsets[i] == 300) {
      hit = i;
      // Density normalization: a unit cosine gives |v| = sqrt(T_seg) / 2.
      CHECK(std::abs(v[i](0)) == doctest::Approx(0.5 * std::sqrt(cfg.segment_seconds)).epsilon(1e-12));
    } else {
      CHECK(std::abs(v[i](0)) < 1e-9);
    }
    CHECK(std::abs(v[i](2)) < 1e-9);
    CHECK(std::abs(v[i](3)) < 1e-9);
  }
  // The mirrored offset sees the tone in its conjugated lower-sideband entry.
  const auto mirror = std::find(w.offsets.begin(), w.offsets.end(), -300) - w.offsets.begin();
  CHECK(std::abs(v[static_cast<std::size_t>(mirror)](1)) == doctest::Approx(std::abs(v[hit](0))));
  for (std::size_t i = 0; i < w.offsets.size(); ++i)
    if (static_cast<std::ptrdiff_t>(i) != mirror) CHECK(std::abs(v[i](1)) < 1e-9);

  CHECK_THROWS_AS(assemble_v(std::vector<cd>(100), w), InvalidInput);
}

TEST_CASE("accumulator: a repeated segment gives a rank-one covariance") {
  std::vector<DataVector> v(3);
  v[0] << cd(1, 2), cd(0.5, -1), cd(-2, 0.1), cd(0.3, 0.3);
  v[1] << cd(0, 1), cd(1, 0), cd(2, 2), cd(-1, 0.5);
  v[2] << cd(3, 0), cd(0, -3), cd(0.1, 0.2), cd(1, 1);
  CAccumulator acc(3);
  for (int s = 0; s < 4; ++s) acc.add(v);
  const CMatrixGrid c = acc.result({1.0, 2.0, 3.0});
  CHECK(c.n_segments == 4);
  for (std::size_t k = 0; k < 3; ++k) {
    const Eigen::SelfAdjointEigenSolver<Mat4c> es(c.values[k]);
    CHECK(es.eigenvalues()(3) == doctest::Approx(v[k].squaredNorm()).epsilon(1e-12));
    CHECK(std::abs(es.eigenvalues()(2)) < 1e-12 * v[k].squaredNorm());
  }

  CAccumulator one(3);
  one.add(v);
  CHECK_THROWS_AS(one.result({1.0, 2.0, 3.0}), InvalidInput);
  CHECK_THROWS_AS(one.add(std::vector<DataVector>(2)), InvalidInput);

  // Merge is the same as accumulating everything in one place.
  CAccumulator a(3), b(3), all(3);
  std::vector<DataVector> u = v;
  for (auto& x : u) x *= cd(0.5, 0.25);
  a.add(v);
  a.add(u);
  b.add(u);
  all.add(v);
  all.add(u);
  all.add(u);
  a.merge(b);
  const auto ma = a.result({1.0, 2.0, 3.0}), mall = all.result({1.0, 2.0, 3.0});
  for (std::size_t k = 0; k < 3; ++k) CHECK((ma.values[k] - mall.values[k]).norm() < 1e-14);

  const std::vector<std::vector<DataVector>> segs{v, u};
  const auto direct = accumulate_C(segs, {1.0, 2.0, 3.0});
  CHECK(direct.n_segments == 2);
}

TEST_CASE("accumulator: independent shot segments give no off-diagonal structure") {
  SynthConfig cfg;
  cfg.electronic_noise = false;
  const AnalysisWindow w = default_window(cfg);
  const std::size_t n_seg = 200;
  const CMatrixGrid c = accumulate_stream(Synthesizer(nullptr, cfg, TraceKind::shot), n_seg, w, 2);
  double worst = 0.0;
  for (const auto& m : c.values)
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j) {
        const double sigma = std::sqrt(m(i, i).real() * m(j, j).real() / static_cast<double>(n_seg));
        worst = std::max(worst, std::abs(m(i, j)) / sigma);
      }
  MESSAGE("largest off-diagonal in units of its statistical floor: " << worst);
  CHECK(worst < 5.0);
}

TEST_CASE("accumulate_stream: result does not depend on the worker count") {
  const SystemParams p = SystemParams::best_dataset();
  const DriftModel m = build_drift(p);
  const SynthConfig cfg;
  const AnalysisWindow w = default_window(cfg);
  const Synthesizer s(&m, cfg, TraceKind::signal);
  const CMatrixGrid a = accumulate_stream(s, 12, w, 1);
  const CMatrixGrid b = accumulate_stream(s, 12, w, 3);
  const CMatrixGrid c = accumulate_stream(s, 12, w, 8);
  REQUIRE(a.values.size() == b.values.size());
  for (std::size_t k = 0; k < a.values.size(); ++k) {
    CHECK(a.values[k] == b.values[k]);
    CHECK(a.values[k] == c.values[k]);
  }
}

TEST_CASE("accumulate_trace matches streaming the same segments") {
  const DriftModel m = build_drift(SystemParams::best_dataset());
  const SynthConfig cfg;
  const AnalysisWindow w = default_window(cfg);
  const Synthesizer s(&m, cfg, TraceKind::signal);
  const CMatrixGrid a = accumulate_stream(s, 5, w);
  const CMatrixGrid b = accumulate_trace(s.trace(5), w);
  CHECK(b.n_segments == 5);
  CHECK(b.own_fraction_a == doctest::Approx(cfg.lo_fraction_a));
  double worst = 0.0;
  for (std::size_t k = 0; k < a.values.size(); ++k)
    worst = std::max(worst, (a.values[k] - b.values[k]).cwiseAbs().maxCoeff() /
                                a.values[k].cwiseAbs().maxCoeff());
  CHECK(worst < 1e-10);
}

TEST_CASE("calibrate: shot data map to the identity floor") {
  const std::vector<double> grid{-2.0, -1.0, 1.0, 2.0};
  const Mat4c shot_level = Eigen::Vector4d(2.0, 2.0, 3.0, 3.0).cast<cd>().asDiagonal();
  const Mat4c dark_level = Eigen::Vector4d(0.2, 0.2, 0.3, 0.3).cast<cd>().asDiagonal();
  const CMatrixGrid shot = constant_grid(grid, shot_level);
  const CMatrixGrid zero = constant_grid(grid, Mat4c::Zero());
  const CMatrixGrid dark = constant_grid(grid, dark_level);

  for (const CMatrixGrid* d : {&zero, &dark}) {
    const CMatrixGrid cal = calibrate(shot, shot, *d, {});
    CHECK(cal.state == CalibrationState::noise_subtracted);
    for (const auto& v : cal.values) {
      const Mat4c expect = Eigen::Vector4d(1.0, 1.0, 1.0, 1.0).cast<cd>().asDiagonal();
      CHECK((v - expect).cwiseAbs().maxCoeff() < 1e-14);
    }
  }
  // Other-LO floor plus electronic level, in calibrated units.
  const CMatrixGrid cal = calibrate(shot, shot, dark, {});
  CHECK(cal.removed_floor[0] == doctest::Approx((0.2 + 0.5 * 1.8) / (0.5 * 1.8)));
  CHECK(cal.removed_floor[1] == doctest::Approx((0.3 + 0.5 * 2.7) / (0.5 * 2.7)));
}

TEST_CASE("calibrate: idempotent on calibrated data") {
  const std::vector<double> grid{-2.0, -1.0, 1.0, 2.0};
  Mat4c raw_level = Eigen::Vector4d(2.6, 2.2, 3.5, 3.1).cast<cd>().asDiagonal();
  raw_level(0, 3) = cd(0.3, 0.1);
  raw_level(3, 0) = std::conj(raw_level(0, 3));
  const CMatrixGrid raw = constant_grid(grid, raw_level);
  const CMatrixGrid shot = constant_grid(grid, Eigen::Vector4d(2.0, 2.0, 3.0, 3.0).cast<cd>().asDiagonal());
  const CMatrixGrid dark = constant_grid(grid, Mat4c::Zero());
  const CMatrixGrid once = calibrate(raw, shot, dark, {});
  const CMatrixGrid unit = constant_grid(grid, Mat4c::Identity(), 1.0, 1.0);
  const CMatrixGrid twice = calibrate(once, unit, constant_grid(grid, Mat4c::Zero(), 1.0, 1.0), {});
  for (std::size_t k = 0; k < grid.size(); ++k) CHECK((once.values[k] - twice.values[k]).norm() < 1e-14);
  CHECK(twice.removed_floor[0] == doctest::Approx(once.removed_floor[0]));
}

TEST_CASE("calibrate: guards") {
  const std::vector<double> grid{-2.0, -1.0, 1.0, 2.0};
  const CMatrixGrid shot = constant_grid(grid, Mat4c::Identity());
  const CMatrixGrid dark_hi = constant_grid(grid, 2.0 * Mat4c::Identity());
  CHECK_THROWS_AS(calibrate(shot, shot, dark_hi, {}), InvalidInput);
  CHECK_THROWS_AS(calibrate(shot, shot, shot, {}), InvalidInput);
  const CMatrixGrid shifted = constant_grid({-2.0, -1.0, 1.0, 2.5}, Mat4c::Identity());
  CHECK_THROWS_AS(calibrate(shot, shifted, constant_grid(grid, Mat4c::Zero()), {}), InvalidInput);
  const CMatrixGrid short_grid = constant_grid({-1.0, 1.0}, Mat4c::Identity());
  CHECK_THROWS_AS(calibrate(shot, short_grid, short_grid, {}), InvalidInput);
  CMatrixGrid bad = shot;
  bad.own_fraction_a = 0.0;
  CHECK_THROWS_AS(calibrate(bad, shot, constant_grid(grid, Mat4c::Zero()), {}), InvalidInput);
  CalibrationOptions neg;
  neg.smooth_half_width = -1;
  CHECK_THROWS_AS(calibrate(shot, shot, constant_grid(grid, Mat4c::Zero()), neg), InvalidInput);
}

TEST_CASE("calibrate: vacuum with a -10 dB electronic floor calibrates to 1 within 1%") {
  SynthConfig cfg;
  const AnalysisWindow w = default_window(cfg);
  SynthConfig other = cfg;
  other.seed = 77;
  const std::size_t n = 200;
  const CMatrixGrid raw = accumulate_stream(Synthesizer(nullptr, other, TraceKind::shot), n, w, 2);
  const CMatrixGrid shot = accumulate_stream(Synthesizer(nullptr, cfg, TraceKind::shot), n, w, 2);
  const CMatrixGrid dark = accumulate_stream(Synthesizer(nullptr, cfg, TraceKind::dark), n, w, 2);
  const CMatrixGrid cal = calibrate(raw, shot, dark, {});
  for (int i = 0; i < 4; ++i) {
    double mean = 0.0;
    for (const auto& v : cal.values) mean += v(i, i).real();
    mean /= static_cast<double>(cal.values.size());
    MESSAGE("entry " << i << " mean calibrated floor " << mean);
    CHECK(std::abs(mean - 1.0) < 0.01);
  }
}

TEST_CASE("rotate_to_A: inverts the detection phases") {
  const SystemParams p = SystemParams::best_dataset();
  SystemParams rotated = p;
  rotated.phi_a = 0.3;
  rotated.phi_b = -1.1;
  const std::vector<double> grid = uniform_grid(-hz(200e3), hz(200e3), hz(2e3));
  const CMatrixGrid c = testsupport::exact_grid(rotated, grid, 100);
  const SpectralMatrix a = rotate_to_A(c, 0.3, -1.1);
  CHECK(a.kind == SpectralKind::measured);
  const DriftModel m = build_drift(p);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const Mat4c ref = output_spectrum(grid[k], m);
    CHECK((a.values[k] - ref).cwiseAbs().maxCoeff() < 1e-12 * std::max(1.0, ref.cwiseAbs().maxCoeff()));
  }
  // Zero phases pass through.
  const CMatrixGrid c0 = testsupport::exact_grid(p, grid, 100);
  const SpectralMatrix a0 = rotate_to_A(c0, 0.0, 0.0);
  for (std::size_t k = 0; k < grid.size(); ++k)
    CHECK((a0.values[k] - spectral_from_heterodyne(c0.values[k])).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(rotate_to_A(c0, NAN, 0.0), InvalidInput);
}

TEST_CASE("end to end: calibrated C is an unbiased estimate of the model") {
  // 2000 segments of 10 ms; every entry's reduced chi-square against the
  // periodogram variance must lie in [0.8, 1.2].
  const SystemParams p = SystemParams::best_dataset();
  const auto run = testsupport::calibrated_run(p, 2000, {}, 4);
  const EntryChi2 r = entry_chi2(run.cal, build_drift(p));
  for (int i = 0; i < 4; ++i) {
    for (int j = i; j < 4; ++j) {
      MESSAGE("C(" << i << "," << j << ") reduced chi2 " << r.value[i][j]);
      CHECK(r.value[i][j] > 0.8);
      CHECK(r.value[i][j] < 1.2);
    }
  }

  // Per-bin 5%-level check on the two PSDs: at least 90% of bins pass.
  const DriftModel m = build_drift(p);
  const double n = static_cast<double>(run.cal.n_segments);
  std::size_t pass = 0, total = 0;
  for (std::size_t k = 0; k < run.cal.grid.size(); ++k) {
    const Mat4c model = heterodyne_covariance(output_spectrum(run.cal.grid[k], m));
    for (int i : {0, 2}) {
      const double sigma = (model(i, i).real() + run.cal.removed_floor[i / 2]) / std::sqrt(n);
      const double z = (run.cal.values[k](i, i).real() - model(i, i).real()) / sigma;
      pass += std::abs(z) < 1.96 ? 1 : 0;
      ++total;
    }
  }
  const double frac = static_cast<double>(pass) / static_cast<double>(total);
  MESSAGE("fraction of PSD bins within the 5% band: " << frac);
  CHECK(frac >= 0.9);
}
