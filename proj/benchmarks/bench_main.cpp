#include <vector>

#include <benchmark/benchmark.h>

#include "levent/entanglement.hpp"
#include "levent/model.hpp"
#include "levent/modes.hpp"
#include "levent/pipeline.hpp"
#include "levent/spectra.hpp"
#include "levent/synth.hpp"

using namespace levent;

namespace {

const DriftModel& preset_model() {
  static const DriftModel m = build_drift(SystemParams::best_dataset());
  return m;
}

void BM_SteadyCovariance(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(steady_covariance(preset_model()));
}
BENCHMARK(BM_SteadyCovariance);

void BM_OutputSpectrum(benchmark::State& st) {
  double w = -hz(110e3);
  for (auto _ : st) {
    benchmark::DoNotOptimize(output_spectrum(w, preset_model()));
    w += 1.0;
  }
}
BENCHMARK(BM_OutputSpectrum);

void BM_NuMinPpt(benchmark::State& st) {
  const CovMatrix cm = intracavity_cov(preset_model());
  for (auto _ : st) benchmark::DoNotOptimize(nu_min_ppt(cm));
}
BENCHMARK(BM_NuMinPpt);

void BM_CovarianceModel(benchmark::State& st) {
  const FilterMode f = make_rect_filter(-preset_model().params.bright_frequency(), hz(40e3));
  for (auto _ : st) benchmark::DoNotOptimize(covariance_model(preset_model(), f));
}
BENCHMARK(BM_CovarianceModel)->Unit(benchmark::kMillisecond);

void BM_CovarianceDirect(benchmark::State& st) {
  const SystemParams& p = preset_model().params;
  const SpectralMatrix spec = output_spectral_matrix(default_grid(p), preset_model());
  const FilterMode f = make_rect_filter(-p.bright_frequency(), hz(40e3));
  for (auto _ : st) benchmark::DoNotOptimize(covariance_direct(spec, f, p));
}
BENCHMARK(BM_CovarianceDirect)->Unit(benchmark::kMillisecond);

// One 10 ms segment: synthesis, transform and accumulation.
void BM_SegmentPipeline(benchmark::State& st) {
  const SynthConfig cfg;
  const Synthesizer s(&preset_model(), cfg, TraceKind::signal);
  const AnalysisWindow win =
      make_analysis_window(cfg.sample_rate, cfg.segment_length(), cfg.lo_freq_a, cfg.lo_freq_b, cfg.window);
  const SegmentTransform fft(cfg.segment_length(), cfg.sample_rate);
  std::vector<double> buf(cfg.segment_length());
  CAccumulator acc(win.offsets.size());
  std::size_t i = 0;
  for (auto _ : st) {
    s.segment(i++, buf);
    acc.add(assemble_v(fft(buf), win));
  }
  st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations()));
}
BENCHMARK(BM_SegmentPipeline)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
