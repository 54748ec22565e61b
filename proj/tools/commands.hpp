#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "levent/modes.hpp"
#include "levent/params.hpp"
#include "levent/synth.hpp"

namespace levent::cli {

// Exit-code contract of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 2;
inline constexpr int kExitNumerical = 3;

/// Worker count from LEVENT_WORKERS, else the hardware concurrency (≥ 1).
int worker_count();

/// Runs fn(i) for i in [0, n) on `workers` threads. The first exception is
/// rethrown after all workers finish.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

/// Writes through `writer` into a temporary sibling, then renames it onto
/// `path`, so a failed command leaves no partial file behind.
void write_atomic(const std::filesystem::path& path,
                  const std::function<void(const std::filesystem::path&)>& writer);

/// FNV-1a hash of a canonical JSON configuration.
std::string config_hash(const nlohmann::json& config);

/// Parameters from a file, or the built-in best-dataset preset when empty.
SystemParams params_or_preset(const std::optional<std::filesystem::path>& file);

struct GridOptions {
  double span_hz = 250e3;
  double step_hz = 25.0;
};

struct SpectraOptions {
  std::optional<std::filesystem::path> params;
  std::filesystem::path out;
  std::optional<std::filesystem::path> psd_out;  ///< default: <out>_psd.csv
  GridOptions grid;
  bool one_sided = false;
};
/// Model A(ω) CSV plus the two heterodyne PSDs.
void cmd_spectra(const SpectraOptions& opts);

struct RouteOptions {
  double mech_band_hz = 60e3;
  MechReconstruction reconstruction = MechReconstruction::literal;
  std::optional<double> filter_center_hz;  ///< default −Ω_b
  DirectRouteOptions direct() const;
  double filter_center(const SystemParams& p) const;
};

struct SweepFilterOptions {
  std::optional<std::filesystem::path> params;
  std::filesystem::path out;
  std::vector<double> widths_hz;
  GridOptions grid;
  RouteOptions route;
  int workers = 1;
};
struct SweepFilterRow {
  double width_hz = 0.0;
  double nu_direct = 0.0;
  double nu_model = 0.0;
  std::string status;  ///< "ok" or the failure reason
};
/// One row per width; both routes from the same model.
std::vector<SweepFilterRow> sweep_filter(const SystemParams& p, const SweepFilterOptions& opts);
void cmd_sweep_filter(const SweepFilterOptions& opts);

struct SweepDetuningOptions {
  std::optional<std::filesystem::path> params;
  std::filesystem::path out;
  std::vector<double> detunings_hz;
  std::vector<double> widths_hz;  ///< candidates for the per-point optimum
  GridOptions grid;
  RouteOptions route;
  int workers = 1;
};
struct SweepDetuningRow {
  double detuning_hz = 0.0;
  double nu_direct = 0.0;
  double width_direct_hz = 0.0;
  double nu_model = 0.0;
  double width_model_hz = 0.0;
  double nu_intracavity = 0.0;
  std::string status;
};
/// −Δ_A = Δ_B = |Δ| at each point; unstable points become flagged rows.
std::vector<SweepDetuningRow> sweep_detuning(const SystemParams& p, const SweepDetuningOptions& opts);
void cmd_sweep_detuning(const SweepDetuningOptions& opts);

struct SynthOptions {
  std::optional<std::filesystem::path> params;
  std::filesystem::path out;
  TraceKind kind = TraceKind::signal;
  double duration_s = 1.0;
  std::uint64_t seed = 1;
};
void cmd_synth(const SynthOptions& opts);

struct ClosedLoopOptions {
  std::optional<std::filesystem::path> params;
  std::optional<std::filesystem::path> out;  ///< stdout when empty
  double duration_s = 20.0;
  std::optional<std::size_t> segments;       ///< overrides duration_s
  std::uint64_t seed = 1;
  double filter_width_hz = 40e3;
  RouteOptions route;
  int workers = 1;
};
/// A pipeline stage failure, tagged with the stage name.
struct StageError {
  std::string stage;
  std::string message;
  int exit_code = kExitNumerical;
};
/// synth → pipeline → fit → direct route → entanglement. On failure the
/// report carries "error": {stage, message} and `error` is set.
nlohmann::json closed_loop(const SystemParams& truth, const ClosedLoopOptions& opts,
                           std::optional<StageError>& error);
/// Returns the exit code.
int cmd_closed_loop(const ClosedLoopOptions& opts);

MechReconstruction reconstruction_from_string(const std::string& s);

/// Hz list "a,b,c" or range "lo:hi:step" (inclusive).
std::vector<double> parse_hz_list(const std::string& text);

}  // namespace levent::cli
