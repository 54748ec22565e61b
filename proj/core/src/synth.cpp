#include "levent/synth.hpp"

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "fft.hpp"
#include "levent/error.hpp"
#include "levent/spectra.hpp"

namespace levent {

namespace {

using Mat2c = Eigen::Matrix2cd;

std::uint64_t stream_of(TraceKind k) {
  switch (k) {
    case TraceKind::signal: return 0x5349474eULL;
    case TraceKind::shot: return 0x53484f54ULL;
    case TraceKind::dark: return 0x4441524bULL;
  }
  return 0;
}

// Hermitian square root factor L with L L† = K, tolerant of round-off negativity.
template <int N>
Eigen::Matrix<cd, N, N> factor(const Eigen::Matrix<cd, N, N>& k) {
  Eigen::Matrix<cd, N, N> h = 0.5 * (k + k.adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<cd, N, N>> es(h);
  Eigen::Matrix<double, N, 1> ev = es.eigenvalues();
  const double tol = 1e-9 * std::max(1e-300, ev.cwiseAbs().maxCoeff());
  for (int i = 0; i < N; ++i) {
    if (ev(i) < -tol) throw NumericalError("synth: bin covariance is not positive semidefinite");
    ev(i) = std::sqrt(std::max(0.0, ev(i)));
  }
  return es.eigenvectors() * ev.asDiagonal();
}

cd cnormal(std::mt19937_64& rng, std::normal_distribution<double>& nd) {
  constexpr double s = 0.70710678118654752440;
  const double re = nd(rng);
  const double im = nd(rng);
  return {s * re, s * im};
}

}  // namespace

std::string_view to_string(TraceKind k) {
  switch (k) {
    case TraceKind::signal: return "signal";
    case TraceKind::shot: return "shot";
    case TraceKind::dark: return "dark";
  }
  return "signal";
}

TraceKind trace_kind_from_string(std::string_view s) {
  if (s == "signal") return TraceKind::signal;
  if (s == "shot") return TraceKind::shot;
  if (s == "dark") return TraceKind::dark;
  throw InvalidInput("unknown trace kind '" + std::string(s) + "'");
}

cd detector_response(double omega, double cutoff_hz) {
  if (!(cutoff_hz > 0.0)) return 1.0;
  return 1.0 / cd(1.0, -omega / hz(cutoff_hz));
}

std::size_t SynthConfig::segment_length() const {
  return static_cast<std::size_t>(std::llround(sample_rate * segment_seconds));
}

void SynthConfig::validate() const {
  if (!(sample_rate > 0.0) || !(segment_seconds > 0.0)) {
    throw InvalidInput("synth: sample rate and segment length must be positive");
  }
  if (std::abs(sample_rate * segment_seconds - static_cast<double>(segment_length())) > 1e-6) {
    throw InvalidInput("synth: segment must hold a whole number of samples");
  }
  if (!(lo_freq_a > 0.0) || !(lo_freq_b > lo_freq_a)) {
    throw InvalidInput("synth: need 0 < lo_freq_a < lo_freq_b");
  }
  if (!(window > 0.0)) throw InvalidInput("synth: analysis window must be positive");
  if (lo_freq_a - window <= 0.0 || lo_freq_a + window >= lo_freq_b - window) {
    throw InvalidInput("synth: LO analysis windows overlap or touch zero frequency");
  }
  if (!(sample_rate > 2.0 * to_hz(lo_freq_b + window))) {
    throw InvalidInput("synth: Nyquist violation, sample rate " + std::to_string(sample_rate) +
                       " too low for LO B plus sideband window");
  }
  if (!(lo_fraction_a > 0.0 && lo_fraction_a < 1.0)) {
    throw InvalidInput("synth: lo_fraction_a must lie in (0, 1)");
  }
  if (electronic_lowpass_hz < 0.0 || detector_cutoff_hz < 0.0 || shot_psd < 0.0 ||
      carrier_amplitude < 0.0) {
    throw InvalidInput("synth: negative configuration value");
  }
}

struct Synthesizer::Impl {
  SynthConfig cfg;
  TraceKind kind;
  std::size_t n = 0;
  double bin = 0.0;  // rad/s
  std::size_t kA = 0, kB = 0, mw = 0;
  double shot = 0.0;
  std::array<CoherentTone, 2> tones{};
  std::vector<Mat4c> factors;  // offsets 1..mw
  Mat2c carrier_factor = Mat2c::Zero();
  std::vector<double> el_amp;    // sqrt of electronic PSD per bin
  std::vector<cd> response;      // detector response per bin
  std::unique_ptr<detail::RealFft> fft;
};

Synthesizer::Synthesizer(const DriftModel* model, const SynthConfig& cfg, TraceKind kind)
    : impl_(std::make_unique<Impl>()) {
  cfg.validate();
  Impl& s = *impl_;
  s.cfg = cfg;
  s.kind = kind;
  s.n = cfg.segment_length();
  s.bin = kTwoPi * cfg.sample_rate / static_cast<double>(s.n);
  const double ka = cfg.lo_freq_a / s.bin, kb = cfg.lo_freq_b / s.bin;
  if (std::abs(ka - std::round(ka)) > 1e-6 || std::abs(kb - std::round(kb)) > 1e-6) {
    throw InvalidInput("synth: LO frequencies must be integer multiples of the bin width");
  }
  s.kA = static_cast<std::size_t>(std::llround(ka));
  s.kB = static_cast<std::size_t>(std::llround(kb));
  s.mw = static_cast<std::size_t>(std::floor(cfg.window / s.bin + 1e-9));
  s.shot = cfg.effective_shot_psd();
  s.fft = std::make_unique<detail::RealFft>(s.n);

  const std::size_t nb = s.n / 2 + 1;
  s.el_amp.assign(nb, 0.0);
  s.response.assign(nb, 1.0);
  for (std::size_t k = 0; k < nb; ++k) {
    const double w = s.bin * static_cast<double>(k);
    s.response[k] = detector_response(w, cfg.detector_cutoff_hz);
    if (cfg.electronic_noise) {
      double level = s.shot * std::pow(10.0, cfg.electronic_noise_db / 10.0);
      if (cfg.electronic_lowpass_hz > 0.0) level *= std::norm(detector_response(w, cfg.electronic_lowpass_hz));
      s.el_amp[k] = std::sqrt(level);
    }
  }

  if (kind != TraceKind::signal) return;
  if (!model) throw InvalidInput("synth: signal traces need a model");
  const Stability st = stability(*model);
  if (!st.is_stable) throw UnstableDrift("max Re eig(M) = " + std::to_string(-st.margin) + " rad/s");

  const double fa = cfg.lo_fraction_a, fb = 1.0 - fa;
  const Eigen::Vector4d wdiag(std::sqrt(fa), std::sqrt(fa), std::sqrt(fb), std::sqrt(fb));
  const Eigen::Vector4d floor(1.0 - fa, 1.0 - fa, 1.0 - fb, 1.0 - fb);
  auto bin_cov = [&](double omega) -> Mat4c {
    const Mat4c h = heterodyne_covariance(output_spectrum(omega, *model));
    Mat4c k = wdiag.asDiagonal() * h * wdiag.asDiagonal();
    k.diagonal() += floor.cast<cd>();
    return s.shot * k;
  };
  s.factors.resize(s.mw + 1);
  for (std::size_t m = 1; m <= s.mw; ++m) s.factors[m] = factor<4>(bin_cov(s.bin * static_cast<double>(m)));
  const Mat4c k0 = bin_cov(0.0);
  Mat2c c0;
  c0 << k0(0, 0), k0(0, 2), k0(2, 0), k0(2, 2);
  s.carrier_factor = factor<2>(c0);

  const auto& pr = model->params;
  s.tones[0] = {cfg.carrier_amplitude, pr.phi_a};
  s.tones[1] = {cfg.carrier_amplitude, pr.phi_b};
}

Synthesizer::~Synthesizer() = default;
Synthesizer::Synthesizer(Synthesizer&&) noexcept = default;
Synthesizer& Synthesizer::operator=(Synthesizer&&) noexcept = default;

std::size_t Synthesizer::segment_length() const { return impl_->n; }
const SynthConfig& Synthesizer::config() const { return impl_->cfg; }
TraceKind Synthesizer::kind() const { return impl_->kind; }

void Synthesizer::segment(std::size_t index, std::span<double> out) const {
  const Impl& s = *impl_;
  if (out.size() != s.n) throw InvalidInput("synth: output span has the wrong length");
  std::mt19937_64 rng(detail::mix_seed(s.cfg.seed, stream_of(s.kind), index));
  std::normal_distribution<double> nd(0.0, 1.0);
  const std::size_t nb = s.n / 2 + 1;

  // v_k in the e^{+iωt} convention, two-sided density units.
  std::vector<cd> v(nb, cd(0.0, 0.0));
  if (s.kind != TraceKind::dark) {
    const double a = std::sqrt(s.shot);
    for (std::size_t k = 1; k + 1 < nb; ++k) v[k] = a * cnormal(rng, nd);
  }
  if (s.kind == TraceKind::signal) {
    for (std::size_t m = 1; m <= s.mw; ++m) {
      Eigen::Vector4cd z;
      for (int i = 0; i < 4; ++i) z(i) = cnormal(rng, nd);
      const Eigen::Vector4cd x = s.factors[m] * z;
      v[s.kA + m] = x(0);
      v[s.kA - m] = std::conj(x(1));
      v[s.kB + m] = x(2);
      v[s.kB - m] = std::conj(x(3));
    }
    Eigen::Vector2cd z(cnormal(rng, nd), cnormal(rng, nd));
    const Eigen::Vector2cd x = s.carrier_factor * z;
    v[s.kA] = x(0);
    v[s.kB] = x(1);
    // Tone A cos(Ω_LO t − φ) at a bin centre: v = A N e^{iφ} / (2 sqrt(N fs)).
    const double scale = 0.5 * static_cast<double>(s.n) / std::sqrt(static_cast<double>(s.n) * s.cfg.sample_rate);
    v[s.kA] += scale * std::polar(s.tones[0].amplitude, s.tones[0].phase);
    v[s.kB] += scale * std::polar(s.tones[1].amplitude, s.tones[1].phase);
  }
  for (std::size_t k = 1; k + 1 < nb; ++k) {
    v[k] *= s.response[k];
    if (s.el_amp[k] > 0.0) v[k] += s.el_amp[k] * cnormal(rng, nd);
  }

  // FFTW's forward transform uses e^{−iωt}: X_k = conj(v_k) sqrt(N fs).
  const double norm = std::sqrt(static_cast<double>(s.n) * s.cfg.sample_rate);
  std::vector<cd> x(nb);
  for (std::size_t k = 0; k < nb; ++k) x[k] = std::conj(v[k]) * norm;
  x[0] = 0.0;
  x[nb - 1] = 0.0;
  s.fft->inverse(x.data(), out.data());
  const double inv_n = 1.0 / static_cast<double>(s.n);
  for (double& y : out) y *= inv_n;
}

HeterodyneTrace Synthesizer::trace(std::size_t n_segments) const {
  const Impl& s = *impl_;
  HeterodyneTrace t;
  t.sample_rate = s.cfg.sample_rate;
  t.lo_freq_a = s.cfg.lo_freq_a;
  t.lo_freq_b = s.cfg.lo_freq_b;
  t.kind = s.kind;
  t.seed = s.cfg.seed;
  t.lo_fraction_a = s.cfg.lo_fraction_a;
  t.detector_cutoff_hz = s.cfg.detector_cutoff_hz;
  t.segment_seconds = s.cfg.segment_seconds;
  if (s.kind == TraceKind::signal) t.coherent = s.tones;
  t.samples.resize(n_segments * s.n);
  for (std::size_t i = 0; i < n_segments; ++i) {
    segment(i, std::span<double>(t.samples.data() + i * s.n, s.n));
  }
  return t;
}

namespace {

std::size_t segments_for(double duration, const SynthConfig& cfg) {
  cfg.validate();
  if (!(duration >= 0.0) || !std::isfinite(duration)) throw InvalidInput("synth: duration must be >= 0");
  const double n = duration / cfg.segment_seconds;
  const double r = std::round(n);
  if (std::abs(n - r) > 1e-6) throw InvalidInput("synth: duration must be a multiple of the segment length");
  return static_cast<std::size_t>(r);
}

}  // namespace

HeterodyneTrace synthesize(const DriftModel& model, double duration, const SynthConfig& cfg) {
  const std::size_t n = segments_for(duration, cfg);
  return Synthesizer(&model, cfg, TraceKind::signal).trace(n);
}

HeterodyneTrace synthesize_shot(double duration, const SynthConfig& cfg) {
  const std::size_t n = segments_for(duration, cfg);
  return Synthesizer(nullptr, cfg, TraceKind::shot).trace(n);
}

HeterodyneTrace synthesize_dark(double duration, const SynthConfig& cfg) {
  const std::size_t n = segments_for(duration, cfg);
  return Synthesizer(nullptr, cfg, TraceKind::dark).trace(n);
}

}  // namespace levent
