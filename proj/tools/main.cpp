#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "levent/error.hpp"

using namespace levent;
using namespace levent::cli;

namespace {

void add_params(CLI::App* cmd, std::optional<std::filesystem::path>& params) {
  cmd->add_option("--params", params, "Parameter JSON (frequencies in Hz); default: best-dataset preset");
}

void add_grid(CLI::App* cmd, GridOptions& g) {
  cmd->add_option("--grid-span-hz", g.span_hz, "Model grid half-span, Hz")->capture_default_str();
  cmd->add_option("--grid-step-hz", g.step_hz, "Model grid step, Hz")->capture_default_str();
}

void add_route(CLI::App* cmd, RouteOptions& r, std::string& reconstruction) {
  cmd->add_option("--mech-band-hz", r.mech_band_hz, "Mechanical reconstruction band around each sideband, Hz")
      ->capture_default_str();
  cmd->add_option("--filter-center-hz", r.filter_center_hz, "Filter centre, Hz (default: -Omega_b)");
  cmd->add_option("--reconstruction", reconstruction, "Mechanical reconstruction: literal or hermitian")
      ->check(CLI::IsMember({"literal", "hermitian"}))
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "levent: optomechanical entanglement analysis of heterodyne spectra.\n"
      "Frequencies on the command line and in files are in Hz; angular units are used internally.\n"
      "Exit codes: 0 success, 2 invalid input, 3 numerical failure.\n"
      "LEVENT_WORKERS sets the worker-thread count."};
  app.require_subcommand(1);

  SpectraOptions spectra;
  auto* c_spectra = app.add_subcommand("spectra", "Model spectral matrix A(omega) and heterodyne PSDs as CSV");
  add_params(c_spectra, spectra.params);
  c_spectra->add_option("--out", spectra.out, "Spectral matrix CSV")->required();
  c_spectra->add_option("--psd-out", spectra.psd_out, "PSD CSV (default: <out>_psd.csv)");
  c_spectra->add_flag("--one-sided", spectra.one_sided, "Write one-sided (RF) PSDs");
  add_grid(c_spectra, spectra.grid);

  SweepFilterOptions sf;
  std::string sf_widths = "5e3:120e3:5e3";
  auto* c_sf = app.add_subcommand("sweep-filter", "nu_minus against filter width, direct and model routes");
  add_params(c_sf, sf.params);
  c_sf->add_option("--out", sf.out, "CSV output")->required();
  c_sf->add_option("--filter-width-hz,--widths-hz", sf_widths, "Widths, Hz: list a,b,c or range lo:hi:step")
      ->capture_default_str();
  add_grid(c_sf, sf.grid);
  std::string sf_rec = "literal";
  add_route(c_sf, sf.route, sf_rec);

  SweepDetuningOptions sd;
  std::string sd_detunings = "85e3:130e3:2.5e3";
  std::string sd_widths = "10e3:100e3:5e3";
  auto* c_sd = app.add_subcommand("sweep-detuning", "Optimal-width nu_minus against |Delta| with -Delta_A = Delta_B");
  add_params(c_sd, sd.params);
  c_sd->add_option("--out", sd.out, "CSV output")->required();
  c_sd->add_option("--detunings-hz", sd_detunings, "|Delta| values, Hz: list or lo:hi:step")->capture_default_str();
  c_sd->add_option("--filter-width-hz,--widths-hz", sd_widths, "Candidate widths, Hz: list or lo:hi:step")
      ->capture_default_str();
  add_grid(c_sd, sd.grid);
  std::string sd_rec = "literal";
  add_route(c_sd, sd.route, sd_rec);

  SynthOptions sy;
  auto* c_sy = app.add_subcommand("synth", "Write a synthetic heterodyne trace");
  add_params(c_sy, sy.params);
  c_sy->add_option("--out", sy.out, "Trace file")->required();
  c_sy->add_option("--duration-s", sy.duration_s, "Duration, s (whole 10 ms segments)")->capture_default_str();
  c_sy->add_option("--seed", sy.seed, "RNG seed")->capture_default_str();
  std::string sy_kind = "signal";
  c_sy->add_option("--kind", sy_kind, "Trace kind")
      ->check(CLI::IsMember({"signal", "shot", "dark"}))
      ->capture_default_str();

  ClosedLoopOptions cl;
  auto* c_cl = app.add_subcommand("closed-loop", "Synthesize, analyse and fit; JSON report");
  add_params(c_cl, cl.params);
  c_cl->add_option("--out", cl.out, "Report file (default: stdout)");
  c_cl->add_option("--duration-s", cl.duration_s, "Record length, s")->capture_default_str();
  c_cl->add_option("--segments", cl.segments, "Number of 10 ms segments (overrides --duration-s)");
  c_cl->add_option("--seed", cl.seed, "RNG seed")->capture_default_str();
  c_cl->add_option("--filter-width-hz", cl.filter_width_hz, "Optical mode width, Hz")->capture_default_str();
  std::string cl_rec = "literal";
  add_route(c_cl, cl.route, cl_rec);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInvalid;
  }

  try {
    const int workers = worker_count();
    if (*c_spectra) {
      cmd_spectra(spectra);
    } else if (*c_sf) {
      sf.widths_hz = parse_hz_list(sf_widths);
      sf.route.reconstruction = reconstruction_from_string(sf_rec);
      sf.workers = workers;
      cmd_sweep_filter(sf);
    } else if (*c_sd) {
      sd.detunings_hz = parse_hz_list(sd_detunings);
      sd.widths_hz = parse_hz_list(sd_widths);
      sd.route.reconstruction = reconstruction_from_string(sd_rec);
      sd.workers = workers;
      cmd_sweep_detuning(sd);
    } else if (*c_sy) {
      sy.kind = trace_kind_from_string(sy_kind);
      cmd_synth(sy);
    } else if (*c_cl) {
      cl.workers = workers;
      cl.route.reconstruction = reconstruction_from_string(cl_rec);
      return cmd_closed_loop(cl);
    }
  } catch (const InvalidInput& e) {
    std::cerr << "levent: invalid input: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const NumericalError& e) {
    std::cerr << "levent: numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "levent: " << e.what() << '\n';
    return kExitInvalid;
  }
  return kExitOk;
}
