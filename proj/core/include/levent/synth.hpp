#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "levent/model.hpp"
#include "levent/params.hpp"

namespace levent {

enum class TraceKind { signal, shot, dark };

std::string_view to_string(TraceKind k);
TraceKind trace_kind_from_string(std::string_view s);

/// Weak coherent component of one field: tone at the LO beat frequency.
struct CoherentTone {
  double amplitude = 0.0;  ///< peak amplitude in trace units
  double phase = 0.0;      ///< rad, phase of v(Ω_LO)
};

struct SynthConfig {
  double sample_rate = 5e6;       ///< samples/s
  double segment_seconds = 0.010;
  double lo_freq_a = hz(1.4e6);   ///< rad/s
  double lo_freq_b = hz(2.0e6);   ///< rad/s
  double window = hz(250e3);      ///< half-width of each LO analysis window
  double lo_fraction_a = 0.5;     ///< share of the shot floor from LO A
  double shot_psd = 0.0;          ///< two-sided; ≤ 0 selects 1/sample_rate
  bool electronic_noise = true;
  double electronic_noise_db = -10.0;  ///< relative to the shot PSD
  double electronic_lowpass_hz = 0.0;  ///< 0: white electronic noise
  double detector_cutoff_hz = 0.0;     ///< 0: ideal detector response
  double carrier_amplitude = 0.03;     ///< coherent tones, both fields
  std::uint64_t seed = 1;

  double effective_shot_psd() const {
    return shot_psd > 0.0 ? shot_psd : 1.0 / sample_rate;
  }
  std::size_t segment_length() const;
  void validate() const;
};

/// Sampled real photocurrent with acquisition metadata.
struct HeterodyneTrace {
  double sample_rate = 5e6;
  std::vector<double> samples;
  double lo_freq_a = hz(1.4e6);
  double lo_freq_b = hz(2.0e6);
  TraceKind kind = TraceKind::signal;
  std::uint64_t seed = 0;
  std::array<CoherentTone, 2> coherent{};
  double lo_fraction_a = 0.5;
  double detector_cutoff_hz = 0.0;
  double segment_seconds = 0.010;
};

/// Segment-by-segment frequency-domain synthesis. Each segment is an
/// independent draw whose DFT bins have exactly the model covariance, so the
/// segment average of a rectangular-window periodogram is unbiased. Segment
/// `i` depends only on (seed, kind, i).
class Synthesizer {
 public:
  /// `model` is required for TraceKind::signal and ignored otherwise.
  Synthesizer(const DriftModel* model, const SynthConfig& cfg, TraceKind kind);
  ~Synthesizer();
  Synthesizer(Synthesizer&&) noexcept;
  Synthesizer& operator=(Synthesizer&&) noexcept;

  std::size_t segment_length() const;
  void segment(std::size_t index, std::span<double> out) const;
  HeterodyneTrace trace(std::size_t n_segments) const;
  const SynthConfig& config() const;
  TraceKind kind() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Throws UnstableDrift, or InvalidInput for a Nyquist violation or a
/// duration that is not a whole number of segments.
HeterodyneTrace synthesize(const DriftModel& model, double duration, const SynthConfig& cfg);
HeterodyneTrace synthesize_shot(double duration, const SynthConfig& cfg);
HeterodyneTrace synthesize_dark(double duration, const SynthConfig& cfg);

/// Binary trace file: "LEVTRC01", u64 LE header length, JSON header,
/// then little-endian float64 samples.
void write_trace(const HeterodyneTrace& trace, const std::filesystem::path& path);
HeterodyneTrace read_trace(const std::filesystem::path& path);

/// Frequency response of the detector, h(ω) = 1/(1 − iω/ω_c); 1 if cutoff ≤ 0.
cd detector_response(double omega, double cutoff_hz);

}  // namespace levent
