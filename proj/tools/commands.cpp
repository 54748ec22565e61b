#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "levent/entanglement.hpp"
#include "levent/error.hpp"
#include "levent/hash.hpp"
#include "levent/model.hpp"
#include "levent/pipeline.hpp"
#include "levent/spectra.hpp"

namespace levent::cli {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

nlohmann::json num(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

std::vector<double> grid_from(const GridOptions& g) {
  if (!(g.span_hz > 0.0) || !(g.step_hz > 0.0)) throw InvalidInput("grid span and step must be positive");
  if (g.step_hz > g.span_hz) throw InvalidInput("grid step exceeds the span");
  return uniform_grid(-hz(g.span_hz), hz(g.span_hz), hz(g.step_hz));
}

nlohmann::json grid_json(const GridOptions& g) { return {{"span_hz", g.span_hz}, {"step_hz", g.step_hz}}; }

nlohmann::json route_json(const RouteOptions& r) {
  nlohmann::json j = {{"mech_band_hz", r.mech_band_hz},
                      {"reconstruction", r.reconstruction == MechReconstruction::literal ? "literal" : "hermitian"}};
  j["filter_center_hz"] = r.filter_center_hz ? nlohmann::json(*r.filter_center_hz) : nlohmann::json(nullptr);
  return j;
}

std::string csv_num(double x) {
  if (!std::isfinite(x)) return "nan";
  std::ostringstream s;
  s << std::setprecision(12) << x;
  return s.str();
}

void require_widths(const std::vector<double>& widths) {
  for (double w : widths) {
    if (!(w > 0.0)) throw InvalidInput("filter widths must be positive");
  }
}

nlohmann::json cov_report(const CovMatrix& cm) {
  nlohmann::json j = to_json(cm);
  j["entanglement"] = to_json(analyze(cm));
  return j;
}

}  // namespace

int worker_count() {
  if (const char* env = std::getenv("LEVENT_WORKERS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n >= 1 && n <= 1024) return static_cast<int>(n);
    throw InvalidInput(std::string("LEVENT_WORKERS must be an integer in [1, 1024], got '") + env + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), n);
  if (nt <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!first) first = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first) std::rethrow_exception(first);
}

void write_atomic(const std::filesystem::path& path,
                  const std::function<void(const std::filesystem::path&)>& writer) {
  if (path.empty()) throw InvalidInput("output path is empty");
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  try {
    writer(tmp);
    std::filesystem::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw;
  }
}

std::string config_hash(const nlohmann::json& config) { return hex64(fnv1a64(config.dump())); }

SystemParams params_or_preset(const std::optional<std::filesystem::path>& file) {
  SystemParams p = file ? load_params(*file) : SystemParams::best_dataset();
  p.validate();
  return p;
}

DirectRouteOptions RouteOptions::direct() const {
  if (!(mech_band_hz > 0.0)) throw InvalidInput("mechanical band must be positive");
  DirectRouteOptions d;
  d.mech_band = hz(mech_band_hz);
  d.reconstruction = reconstruction;
  return d;
}

double RouteOptions::filter_center(const SystemParams& p) const {
  return filter_center_hz ? hz(*filter_center_hz) : -p.bright_frequency();
}

// ---------------------------------------------------------------- spectra

void cmd_spectra(const SpectraOptions& opts) {
  const SystemParams p = params_or_preset(opts.params);
  const auto grid = grid_from(opts.grid);
  const SpectralMatrix spec = output_spectral_matrix(grid, build_drift(p));
  std::filesystem::path psd = opts.psd_out.value_or(
      opts.out.parent_path() / (opts.out.stem().string() + "_psd" + opts.out.extension().string()));
  write_atomic(opts.out, [&](const auto& tmp) { write_spectral_csv(spec, tmp); });
  write_atomic(psd, [&](const auto& tmp) { write_psd_csv(spec, tmp, opts.one_sided); });
}

// ----------------------------------------------------------- sweep filter

std::vector<SweepFilterRow> sweep_filter(const SystemParams& p, const SweepFilterOptions& opts) {
  require_widths(opts.widths_hz);
  const DriftModel model = build_drift(p);
  const DirectRouteOptions direct = opts.route.direct();
  std::vector<SweepFilterRow> rows(opts.widths_hz.size());
  if (rows.empty()) return rows;
  const SpectralMatrix spec = output_spectral_matrix(grid_from(opts.grid), model);
  const double center = opts.route.filter_center(p);
  parallel_for(rows.size(), opts.workers, [&](std::size_t i) {
    SweepFilterRow& r = rows[i];
    r.width_hz = opts.widths_hz[i];
    r.nu_direct = r.nu_model = kNaN;
    try {
      const FilterMode f = make_rect_filter(center, hz(r.width_hz));
      r.nu_model = nu_min_ppt(covariance_model(model, f));
      r.nu_direct = nu_min_ppt(covariance_direct(spec, f, p, direct));
      r.status = "ok";
    } catch (const std::exception& e) {
      r.status = e.what();
    }
  });
  return rows;
}

void cmd_sweep_filter(const SweepFilterOptions& opts) {
  const SystemParams p = params_or_preset(opts.params);
  const auto rows = sweep_filter(p, opts);
  const nlohmann::json config = {{"command", "sweep-filter"}, {"params", to_json(p)}, {"widths_hz", opts.widths_hz},
                                 {"grid", grid_json(opts.grid)}, {"route", route_json(opts.route)}};
  write_atomic(opts.out, [&](const auto& tmp) {
    std::ofstream out(tmp);
    out << "# schema=levent-sweep-filter/1 config_hash=" << config_hash(config) << '\n';
    out << "width_hz,nu_direct,nu_model,status\n";
    for (const auto& r : rows) {
      out << csv_num(r.width_hz) << ',' << csv_num(r.nu_direct) << ',' << csv_num(r.nu_model) << ",\"" << r.status
          << "\"\n";
    }
    if (!out) throw InvalidInput("cannot write " + opts.out.string());
  });
}

// --------------------------------------------------------- sweep detuning

std::vector<SweepDetuningRow> sweep_detuning(const SystemParams& base, const SweepDetuningOptions& opts) {
  require_widths(opts.widths_hz);
  if (opts.widths_hz.empty() && !opts.detunings_hz.empty()) throw InvalidInput("no candidate filter widths");
  const DirectRouteOptions direct = opts.route.direct();
  const auto grid = grid_from(opts.grid);
  std::vector<SweepDetuningRow> rows(opts.detunings_hz.size());
  parallel_for(rows.size(), opts.workers, [&](std::size_t i) {
    SweepDetuningRow& r = rows[i];
    r.detuning_hz = opts.detunings_hz[i];
    r.nu_direct = r.width_direct_hz = r.nu_model = r.width_model_hz = r.nu_intracavity = kNaN;
    try {
      if (!(r.detuning_hz > 0.0)) throw InvalidInput("detuning magnitude must be positive");
      SystemParams p = base;
      p.delta_a = -hz(r.detuning_hz);
      p.delta_b = hz(r.detuning_hz);
      const DriftModel model = build_drift(p);
      if (!stability(model).is_stable) {
        r.status = "unstable";
        return;
      }
      r.nu_intracavity = nu_min_ppt(intracavity_cov(model));
      const SpectralMatrix spec = output_spectral_matrix(grid, model);
      const double center = opts.route.filter_center(p);
      for (double w : opts.widths_hz) {
        const FilterMode f = make_rect_filter(center, hz(w));
        const double nm = nu_min_ppt(covariance_model(model, f));
        const double nd = nu_min_ppt(covariance_direct(spec, f, p, direct));
        if (!(nm >= r.nu_model)) {
          r.nu_model = nm;
          r.width_model_hz = w;
        }
        if (!(nd >= r.nu_direct)) {
          r.nu_direct = nd;
          r.width_direct_hz = w;
        }
      }
      r.status = "ok";
    } catch (const UnstableDrift&) {
      r.status = "unstable";
    } catch (const std::exception& e) {
      r.status = e.what();
    }
  });
  return rows;
}

void cmd_sweep_detuning(const SweepDetuningOptions& opts) {
  const SystemParams p = params_or_preset(opts.params);
  const auto rows = sweep_detuning(p, opts);
  const nlohmann::json config = {{"command", "sweep-detuning"}, {"params", to_json(p)},
                                 {"detunings_hz", opts.detunings_hz}, {"widths_hz", opts.widths_hz},
                                 {"grid", grid_json(opts.grid)}, {"route", route_json(opts.route)}};
  write_atomic(opts.out, [&](const auto& tmp) {
    std::ofstream out(tmp);
    out << "# schema=levent-sweep-detuning/1 config_hash=" << config_hash(config) << '\n';
    out << "detuning_hz,nu_direct,width_direct_hz,nu_model,width_model_hz,nu_intracavity,status\n";
    for (const auto& r : rows) {
      out << csv_num(r.detuning_hz) << ',' << csv_num(r.nu_direct) << ',' << csv_num(r.width_direct_hz) << ','
          << csv_num(r.nu_model) << ',' << csv_num(r.width_model_hz) << ',' << csv_num(r.nu_intracavity) << ",\""
          << r.status << "\"\n";
    }
    if (!out) throw InvalidInput("cannot write " + opts.out.string());
  });
}

// ------------------------------------------------------------------ synth

void cmd_synth(const SynthOptions& opts) {
  const SystemParams p = params_or_preset(opts.params);
  SynthConfig cfg;
  cfg.seed = opts.seed;
  HeterodyneTrace trace;
  switch (opts.kind) {
    case TraceKind::signal: trace = synthesize(build_drift(p), opts.duration_s, cfg); break;
    case TraceKind::shot: trace = synthesize_shot(opts.duration_s, cfg); break;
    case TraceKind::dark: trace = synthesize_dark(opts.duration_s, cfg); break;
  }
  write_atomic(opts.out, [&](const auto& tmp) { write_trace(trace, tmp); });
}

// ------------------------------------------------------------ closed loop

namespace {

// Deterministic fit start: truth moved well outside the expected errors.
SystemParams perturbed_start(const SystemParams& truth) {
  SystemParams s = truth;
  s.omega_x *= 1.003;
  s.omega_y *= 0.997;
  s.heating_x *= 1.3;
  s.heating_y *= 0.8;
  s.g_a *= 0.8;
  s.g_b = truth.g_b > 0.0 ? truth.g_b * 1.2 : hz(1e3);
  s.delta_a *= 1.05;
  s.delta_b *= 0.95;
  return s;
}

std::array<double, kFitParams> truth_values(const SystemParams& p) {
  return {p.omega_x, p.omega_y, p.heating_x, p.heating_y, p.g_a, p.g_b, p.delta_a, p.delta_b};
}

// Band summary of the calibrated PSDs against the true model.
nlohmann::json psd_summary(const CMatrixGrid& cal, const DriftModel& truth) {
  nlohmann::json j;
  const double n = static_cast<double>(cal.n_segments);
  for (int f = 0; f < 2; ++f) {
    const int d = 2 * f;
    double ratio = 0.0, chi2 = 0.0;
    for (std::size_t k = 0; k < cal.grid.size(); ++k) {
      const Mat4c h = heterodyne_covariance(output_spectrum(cal.grid[k], truth));
      const double model = h(d, d).real();
      const double meas = cal.values[k](d, d).real();
      const double sigma = (model + cal.removed_floor[static_cast<std::size_t>(f)]) / std::sqrt(n);
      ratio += meas / model;
      chi2 += std::pow((meas - model) / sigma, 2);
    }
    const double m = static_cast<double>(cal.grid.size());
    j[f == 0 ? "A" : "B"] = {{"band_mean_ratio", ratio / m}, {"reduced_chi2", chi2 / m}};
  }
  return j;
}

template <class F>
auto stage(const char* name, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const InvalidInput& e) {
    throw StageError{name, e.what(), kExitInvalid};
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError{name, e.what(), kExitNumerical};
  }
}

}  // namespace

nlohmann::json closed_loop(const SystemParams& truth, const ClosedLoopOptions& opts,
                           std::optional<StageError>& error) {
  error.reset();
  nlohmann::json report;
  report["schema"] = "levent-closed-loop/1";
  SynthConfig cfg;
  cfg.seed = opts.seed;
  const std::size_t n_seg =
      opts.segments ? *opts.segments
                    : static_cast<std::size_t>(std::llround(opts.duration_s / cfg.segment_seconds));
  const nlohmann::json config = {{"command", "closed-loop"},     {"params", to_json(truth)},
                                 {"segments", n_seg},            {"seed", opts.seed},
                                 {"filter_width_hz", opts.filter_width_hz}, {"route", route_json(opts.route)}};
  report["config_hash"] = config_hash(config);
  report["config"] = config;
  report["truth"] = to_json(truth);
  try {
    stage("config", [&] {
      if (!opts.segments && !(opts.duration_s >= 2.0)) throw InvalidInput("duration must be at least 2 s");
      if (opts.segments && *opts.segments < 2) throw InvalidInput("need at least 2 segments");
      if (!(opts.filter_width_hz > 0.0)) throw InvalidInput("filter width must be positive");
      cfg.validate();
      return 0;
    });
    const DriftModel model = stage("model", [&] { return build_drift(truth); });
    const AnalysisWindow win = stage("window", [&] {
      return make_analysis_window(cfg.sample_rate, cfg.segment_length(), cfg.lo_freq_a, cfg.lo_freq_b, cfg.window);
    });
    const CMatrixGrid cal = stage("accumulate", [&] {
      const Synthesizer sig(&model, cfg, TraceKind::signal);
      const Synthesizer shot(nullptr, cfg, TraceKind::shot);
      const Synthesizer dark(nullptr, cfg, TraceKind::dark);
      const CMatrixGrid raw = accumulate_stream(sig, n_seg, win, opts.workers);
      const CMatrixGrid c_shot = accumulate_stream(shot, n_seg, win, opts.workers);
      const CMatrixGrid c_dark = accumulate_stream(dark, n_seg, win, opts.workers);
      return stage("calibrate", [&] { return calibrate(raw, c_shot, c_dark, {}); });
    });
    report["segments"] = cal.n_segments;
    report["calibration"] = {{"removed_floor", cal.removed_floor}, {"psd", psd_summary(cal, model)}};

    FitResult fit = stage("fit", [&] { return fit_psd(cal, perturbed_start(truth)); });
    const PhaseFit ph = stage("phases", [&] { return fit_phases(cal, fit); });
    fit.phi_a = ph.phi_a;
    fit.phi_b = ph.phi_b;
    fit.params.phi_a = ph.phi_a;
    fit.params.phi_b = ph.phi_b;
    nlohmann::json fj = to_json(fit);
    const auto tv = truth_values(truth);
    nlohmann::json pulls, rel;
    for (std::size_t i = 0; i < kFitParams; ++i) {
      const char* name = FitResult::names()[i];
      pulls[name] = num((fit.values[i] - tv[i]) / fit.sigma[i]);
      rel[name] = num(tv[i] != 0.0 ? fit.values[i] / tv[i] - 1.0 : kNaN);
    }
    fj["pulls"] = pulls;
    fj["relative_error"] = rel;
    report["fit"] = fj;
    report["phases"] = {{"phi_a_rad", ph.phi_a},         {"phi_b_rad", ph.phi_b},
                        {"truth_phi_a_rad", truth.phi_a}, {"truth_phi_b_rad", truth.phi_b},
                        {"curvature", ph.curvature},     {"degenerate", ph.degenerate}};

    const FilterMode filter =
        stage("config", [&] { return make_rect_filter(opts.route.filter_center(truth), hz(opts.filter_width_hz)); });
    const DirectRouteOptions direct = stage("config", [&] { return opts.route.direct(); });
    const CovMatrix v_meas = stage("direct", [&] {
      return covariance_direct(rotate_to_A(cal, ph.phi_a, ph.phi_b), filter, fit.params, direct);
    });
    const CovMatrix v_ref = stage("reference", [&] {
      SystemParams frame = truth;
      frame.phi_a = frame.phi_b = 0.0;
      return covariance_direct(output_spectral_matrix(win.grid(), build_drift(frame)), filter, truth, direct);
    });
    const CovMatrix v_model = stage("model-route", [&] { return covariance_model(model, filter); });
    const CovMatrix v_intra = stage("model-route", [&] { return intracavity_cov(model); });
    report["covariance"] = stage("entanglement", [&] {
      return nlohmann::json{{"direct_measured", cov_report(v_meas)},
                            {"direct_model", cov_report(v_ref)},
                            {"model_route", cov_report(v_model)},
                            {"intracavity", cov_report(v_intra)}};
    });
    const double nu_meas = report["covariance"]["direct_measured"]["entanglement"]["nu_minus"].get<double>();
    const double nu_ref = report["covariance"]["direct_model"]["entanglement"]["nu_minus"].get<double>();
    report["nu_minus"] = nu_meas;
    report["log_negativity"] = report["covariance"]["direct_measured"]["entanglement"]["E_N"];
    report["nu_minus_reference"] = nu_ref;
    report["nu_minus_deviation"] = nu_meas - nu_ref;
  } catch (const StageError& e) {
    error = e;
    report["error"] = {{"stage", e.stage}, {"message", e.message}};
  }
  return report;
}

int cmd_closed_loop(const ClosedLoopOptions& opts) {
  const SystemParams truth = params_or_preset(opts.params);
  std::optional<StageError> error;
  const nlohmann::json report = closed_loop(truth, opts, error);
  const std::string text = report.dump(2) + "\n";
  if (opts.out) {
    write_atomic(*opts.out, [&](const auto& tmp) {
      std::ofstream out(tmp, std::ios::binary);
      out << text;
      if (!out) throw InvalidInput("cannot write " + opts.out->string());
    });
  } else {
    std::cout << text;
  }
  if (error) {
    std::cerr << "levent: closed-loop failed in stage '" << error->stage << "': " << error->message << '\n';
    return error->exit_code;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- parsing

MechReconstruction reconstruction_from_string(const std::string& s) {
  if (s == "literal") return MechReconstruction::literal;
  if (s == "hermitian") return MechReconstruction::hermitian;
  throw InvalidInput("unknown reconstruction '" + s + "'");
}

std::vector<double> parse_hz_list(const std::string& text) {
  auto to_double = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      throw InvalidInput("bad number '" + s + "' in '" + text + "'");
    }
    if (used != s.size() || !std::isfinite(v)) throw InvalidInput("bad number '" + s + "' in '" + text + "'");
    return v;
  };
  std::vector<double> out;
  if (text.empty()) return out;
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
    if (parts.size() != 3) throw InvalidInput("range must be lo:hi:step, got '" + text + "'");
    const double lo = to_double(parts[0]), hi = to_double(parts[1]), step = to_double(parts[2]);
    if (!(step > 0.0) || hi < lo) throw InvalidInput("range needs lo <= hi and step > 0: '" + text + "'");
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
    for (std::size_t i = 0; i <= n; ++i) out.push_back(lo + static_cast<double>(i) * step);
    return out;
  }
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');) out.push_back(to_double(part));
  return out;
}

}  // namespace levent::cli
