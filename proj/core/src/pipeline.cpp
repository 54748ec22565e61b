#include "levent/pipeline.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <thread>

#include "fft.hpp"
#include "levent/error.hpp"

namespace levent {

struct SegmentTransform::Impl {
  std::unique_ptr<detail::RealFft> fft;
  double norm = 1.0;
};

SegmentTransform::SegmentTransform(std::size_t length, double sample_rate)
    : impl_(std::make_unique<Impl>()) {
  if (length < 2 || !(sample_rate > 0.0)) throw InvalidInput("segment transform: bad length or sample rate");
  impl_->fft = std::make_unique<detail::RealFft>(length);
  impl_->norm = 1.0 / std::sqrt(static_cast<double>(length) * sample_rate);
}

SegmentTransform::~SegmentTransform() = default;
SegmentTransform::SegmentTransform(SegmentTransform&&) noexcept = default;
SegmentTransform& SegmentTransform::operator=(SegmentTransform&&) noexcept = default;

std::size_t SegmentTransform::length() const { return impl_->fft->size(); }

std::vector<cd> SegmentTransform::operator()(std::span<const double> samples) const {
  if (samples.size() != length()) throw InvalidInput("segment transform: wrong segment length");
  std::vector<cd> out(impl_->fft->bins());
  impl_->fft->forward(samples.data(), out.data());
  for (auto& z : out) z = std::conj(z) * impl_->norm;
  return out;
}

namespace {

std::size_t samples_per_segment(double sample_rate, double t_seg) {
  if (!(t_seg > 0.0) || !(sample_rate > 0.0)) throw InvalidInput("segment length must be positive");
  const auto n = static_cast<std::size_t>(std::llround(sample_rate * t_seg));
  if (n < 2) throw InvalidInput("segment shorter than two samples");
  return n;
}

// Contiguous segment ranges; fixed count so the reduction order does not
// depend on the number of workers.
constexpr std::size_t kChunks = 32;

template <class SegmentFn>
CMatrixGrid reduce_segments(std::size_t n_segments, std::size_t seg_len, double sample_rate,
                            const AnalysisWindow& win, int workers, SegmentFn&& fill) {
  if (n_segments < 2) throw InvalidInput("need at least two segments to average");
  const SegmentTransform xf(seg_len, sample_rate);
  const std::size_t chunks = std::min(kChunks, n_segments);
  const std::size_t nbins = win.offsets.size();
  std::vector<CAccumulator> partial(chunks, CAccumulator(nbins));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto work = [&] {
    std::vector<double> buf(seg_len);
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= chunks) return;
      try {
        const std::size_t lo = c * n_segments / chunks;
        const std::size_t hi = (c + 1) * n_segments / chunks;
        for (std::size_t i = lo; i < hi; ++i) {
          fill(i, std::span<double>(buf));
          const auto spec = xf(buf);
          const auto v = assemble_v(spec, win);
          partial[c].add(v);
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = chunks;
        return;
      }
    }
  };
  const int nw = std::max(1, std::min<int>(workers, static_cast<int>(chunks)));
  std::vector<std::thread> pool;
  for (int t = 1; t < nw; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);

  CAccumulator total(nbins);
  for (const auto& p : partial) total.merge(p);
  return total.result(win.grid());
}

}  // namespace

std::vector<std::vector<cd>> segment_fft(const HeterodyneTrace& trace, double t_seg) {
  const std::size_t n = samples_per_segment(trace.sample_rate, t_seg);
  if (trace.samples.size() < n) throw InvalidInput("trace is shorter than one segment");
  const SegmentTransform xf(n, trace.sample_rate);
  std::vector<std::vector<cd>> out;
  const std::size_t count = trace.samples.size() / n;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(xf(std::span<const double>(trace.samples.data() + i * n, n)));
  }
  return out;
}

std::vector<double> AnalysisWindow::grid() const {
  std::vector<double> g(offsets.size());
  for (std::size_t i = 0; i < offsets.size(); ++i) g[i] = offsets[i] * bin_width;
  return g;
}

AnalysisWindow make_analysis_window(double sample_rate, std::size_t segment_length, double lo_a,
                                    double lo_b, double half_width, double detector_cutoff_hz,
                                    bool snap) {
  if (segment_length < 2 || !(sample_rate > 0.0)) throw InvalidInput("analysis window: bad segment");
  if (!(half_width > 0.0)) throw InvalidInput("analysis window: half-width must be positive");
  AnalysisWindow w;
  w.bin_width = kTwoPi * sample_rate / static_cast<double>(segment_length);
  w.detector_cutoff_hz = detector_cutoff_hz;
  const double ka = lo_a / w.bin_width, kb = lo_b / w.bin_width;
  if (!(ka > 0.0) || !(kb > ka)) throw InvalidInput("analysis window: need 0 < LO A < LO B");
  w.lo_bin_a = static_cast<std::size_t>(std::llround(ka));
  w.lo_bin_b = static_cast<std::size_t>(std::llround(kb));
  w.snap_a = std::abs(lo_a - static_cast<double>(w.lo_bin_a) * w.bin_width);
  w.snap_b = std::abs(lo_b - static_cast<double>(w.lo_bin_b) * w.bin_width);
  if (!snap && std::max(w.snap_a, w.snap_b) > 1e-6 * w.bin_width) {
    throw InvalidInput("analysis window: LO frequency is off the bin grid and snapping is disabled");
  }
  const auto m = static_cast<std::size_t>(std::floor(half_width / w.bin_width + 1e-9));
  if (m < 1) throw InvalidInput("analysis window narrower than one bin");
  const std::size_t nyq = segment_length / 2;
  if (w.lo_bin_a <= m || w.lo_bin_a + m >= w.lo_bin_b - m || w.lo_bin_b + m >= nyq) {
    throw InvalidInput("analysis windows overlap or extend beyond the usable band");
  }
  for (int o = -static_cast<int>(m); o <= static_cast<int>(m); ++o) {
    if (o != 0) w.offsets.push_back(o);
  }
  return w;
}

std::vector<DataVector> assemble_v(std::span<const cd> s, const AnalysisWindow& win) {
  const std::size_t last = win.lo_bin_b + static_cast<std::size_t>(win.offsets.back());
  if (s.size() <= last) throw InvalidInput("assemble_v: spectrum shorter than the analysis window");
  auto at = [&](std::size_t k) {
    if (win.detector_cutoff_hz > 0.0) {
      const cd h = detector_response(win.bin_width * static_cast<double>(k), win.detector_cutoff_hz);
      return s[k] * std::polar(1.0, -std::arg(h));
    }
    return s[k];
  };
  std::vector<DataVector> out(win.offsets.size());
  const auto ka = static_cast<std::ptrdiff_t>(win.lo_bin_a);
  const auto kb = static_cast<std::ptrdiff_t>(win.lo_bin_b);
  for (std::size_t i = 0; i < win.offsets.size(); ++i) {
    const std::ptrdiff_t o = win.offsets[i];
    out[i] << at(ka + o), std::conj(at(ka - o)), at(kb + o), std::conj(at(kb - o));
  }
  return out;
}

CAccumulator::CAccumulator(std::size_t n_bins) : sum_(n_bins, Mat4c::Zero()) {}

void CAccumulator::add(std::span<const DataVector> v) {
  if (v.size() != sum_.size()) throw InvalidInput("accumulator: bin count mismatch");
  for (std::size_t i = 0; i < v.size(); ++i) sum_[i].noalias() += v[i] * v[i].adjoint();
  ++count_;
}

void CAccumulator::merge(const CAccumulator& other) {
  if (other.sum_.size() != sum_.size()) throw InvalidInput("accumulator: bin count mismatch");
  for (std::size_t i = 0; i < sum_.size(); ++i) sum_[i] += other.sum_[i];
  count_ += other.count_;
}

CMatrixGrid CAccumulator::result(const std::vector<double>& grid) const {
  if (count_ < 2) throw InvalidInput("need at least two segments to average");
  if (grid.size() != sum_.size()) throw InvalidInput("accumulator: grid size mismatch");
  CMatrixGrid c;
  c.grid = grid;
  c.n_segments = count_;
  c.values.resize(sum_.size());
  const double inv = 1.0 / static_cast<double>(count_);
  for (std::size_t i = 0; i < sum_.size(); ++i) c.values[i] = 0.5 * inv * (sum_[i] + sum_[i].adjoint());
  return c;
}

CMatrixGrid accumulate_C(std::span<const std::vector<DataVector>> segments, const std::vector<double>& grid) {
  CAccumulator acc(grid.size());
  for (const auto& v : segments) acc.add(v);
  return acc.result(grid);
}

CMatrixGrid accumulate_stream(const Synthesizer& source, std::size_t n_segments,
                              const AnalysisWindow& win, int workers) {
  const auto& cfg = source.config();
  CMatrixGrid c = reduce_segments(n_segments, source.segment_length(), cfg.sample_rate, win, workers,
                                  [&](std::size_t i, std::span<double> out) { source.segment(i, out); });
  c.own_fraction_a = cfg.lo_fraction_a;
  c.own_fraction_b = 1.0 - cfg.lo_fraction_a;
  return c;
}

CMatrixGrid accumulate_trace(const HeterodyneTrace& trace, const AnalysisWindow& win) {
  const std::size_t n = samples_per_segment(trace.sample_rate, trace.segment_seconds);
  const std::size_t count = trace.samples.size() / n;
  CMatrixGrid c = reduce_segments(count, n, trace.sample_rate, win, 1,
                                  [&](std::size_t i, std::span<double> out) {
                                    std::copy_n(trace.samples.data() + i * n, n, out.data());
                                  });
  c.own_fraction_a = trace.lo_fraction_a;
  c.own_fraction_b = 1.0 - trace.lo_fraction_a;
  return c;
}

CMatrixGrid calibrate(const CMatrixGrid& raw, const CMatrixGrid& shot, const CMatrixGrid& dark,
                      const CalibrationOptions& opts) {
  const std::size_t n = raw.grid.size();
  if (shot.grid.size() != n || dark.grid.size() != n || raw.values.size() != n) {
    throw InvalidInput("calibrate: grids are not aligned");
  }
  for (std::size_t k = 0; k < n; ++k) {
    const double tol = 1e-9 * std::max(1.0, std::abs(raw.grid[k]));
    if (std::abs(shot.grid[k] - raw.grid[k]) > tol || std::abs(dark.grid[k] - raw.grid[k]) > tol) {
      throw InvalidInput("calibrate: grids are not aligned");
    }
  }
  if (opts.smooth_half_width < 0) throw InvalidInput("calibrate: negative smoothing width");
  const double fa = raw.own_fraction_a, fb = raw.own_fraction_b;
  if (!(fa > 0.0 && fa <= 1.0 && fb > 0.0 && fb <= 1.0)) throw InvalidInput("calibrate: bad LO fractions");
  const double f[4] = {fa, fa, fb, fb};

  // Vacuum level per data-vector entry, smoothed over neighbouring bins.
  std::vector<std::array<double, 4>> level(n), floor_dark(n);
  for (std::size_t k = 0; k < n; ++k) {
    for (int i = 0; i < 4; ++i) {
      level[k][i] = shot.values[k](i, i).real() - dark.values[k](i, i).real();
      floor_dark[k][i] = dark.values[k](i, i).real();
    }
  }
  const auto hw = static_cast<std::ptrdiff_t>(opts.smooth_half_width);
  const double ns = static_cast<double>(std::max<std::size_t>(shot.n_segments, 1));
  const double nd = static_cast<double>(std::max<std::size_t>(dark.n_segments, 1));
  std::array<double, 4> rel_var{0.0, 0.0, 0.0, 0.0}, dark_var{0.0, 0.0, 0.0, 0.0};
  std::vector<std::array<double, 4>> sm(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(k) - hw);
    const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n) - 1, static_cast<std::ptrdiff_t>(k) + hw);
    for (int i = 0; i < 4; ++i) {
      double s = 0.0;
      for (auto j = lo; j <= hi; ++j) s += level[static_cast<std::size_t>(j)][i];
      sm[k][i] = s / static_cast<double>(hi - lo + 1);
      if (!(sm[k][i] > 0.0)) {
        throw InvalidInput("calibrate: shot-noise level does not exceed the dark level");
      }
      const double sh = shot.values[k](i, i).real(), dk = floor_dark[k][i];
      rel_var[static_cast<std::size_t>(i)] += (sh * sh / ns + dk * dk / nd) / (sm[k][i] * sm[k][i]);
      dark_var[static_cast<std::size_t>(i)] += dk * dk / nd / (f[i] * sm[k][i] * f[i] * sm[k][i]);
    }
  }

  CMatrixGrid out = raw;
  out.state = CalibrationState::noise_subtracted;
  out.own_fraction_a = 1.0;
  out.own_fraction_b = 1.0;
  std::array<double, 2> removed{0.0, 0.0};
  for (std::size_t k = 0; k < n; ++k) {
    Mat4c h = raw.values[k];
    double scale[4];
    for (int i = 0; i < 4; ++i) {
      const double extra = floor_dark[k][i] + (1.0 - f[i]) * sm[k][i];
      h(i, i) -= extra;
      scale[i] = std::sqrt(f[i] * sm[k][i]);
    }
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) h(i, j) /= scale[i] * scale[j];
    out.values[k] = h;
    removed[0] += (floor_dark[k][0] + (1.0 - f[0]) * sm[k][0]) / (f[0] * sm[k][0]);
    removed[1] += (floor_dark[k][2] + (1.0 - f[2]) * sm[k][2]) / (f[2] * sm[k][2]);
  }
  out.removed_floor = {raw.removed_floor[0] + removed[0] / static_cast<double>(n),
                       raw.removed_floor[1] + removed[1] / static_cast<double>(n)};
  for (auto& v : rel_var) v /= static_cast<double>(n);
  for (auto& v : dark_var) v /= static_cast<double>(n);
  out.gain_rel_var = rel_var;
  out.dark_var = dark_var;
  out.gain_half_width = opts.smooth_half_width;
  return out;
}

SpectralMatrix rotate_to_A(const CMatrixGrid& cal, double phi_a, double phi_b) {
  if (!std::isfinite(phi_a) || !std::isfinite(phi_b)) throw InvalidInput("rotate_to_A: phases must be finite");
  const Mat4c r_inv = phase_matrix(-phi_a, -phi_b);
  SpectralMatrix s;
  s.grid = cal.grid;
  s.kind = SpectralKind::measured;
  s.values.resize(cal.values.size());
  for (std::size_t k = 0; k < cal.values.size(); ++k) s.values[k] = r_inv * spectral_from_heterodyne(cal.values[k]) * r_inv;
  return s;
}

void write_cmatrix_csv(const CMatrixGrid& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  static constexpr const char* states[] = {"raw", "calibrated", "noise_subtracted", "rotated"};
  out << std::setprecision(17);
  out << "# schema=levent-cmatrix/1 state=" << states[static_cast<int>(c.state)]
      << " n_segments=" << c.n_segments << " definition=C_ij=<v_i v_j*>\n";
  out << "freq_hz";
  for (int i = 1; i <= 4; ++i)
    for (int j = 1; j <= 4; ++j) out << ",C_" << i << j << "_re,C_" << i << j << "_im";
  out << '\n';
  for (std::size_t k = 0; k < c.grid.size(); ++k) {
    out << to_hz(c.grid[k]);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) out << ',' << c.values[k](i, j).real() << ',' << c.values[k](i, j).imag();
    out << '\n';
  }
  if (!out) throw NumericalError("write failed: " + path.string());
}

}  // namespace levent
