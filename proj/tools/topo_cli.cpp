// Command-line front end: every subcommand reads a JSON config, optionally
// overrides sizes/seeds/threads and writes one CSV table.
#include <CLI11.hpp>

#include <iostream>

#include "topo/calibration.hpp"
#include "topo/harness.hpp"

namespace {

struct Common {
  std::string config;
  std::string out;
  int seeds = 0;
  std::string sizes;
  int threads = 0;
  bool no_runtime = false;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config = true) {
  auto* opt = cmd->add_option("--config", c.config, "JSON run configuration");
  if (needs_config) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "output CSV path (default: config 'output' or stdout)");
  cmd->add_option("--seeds", c.seeds, "disorder realisations per point")->check(CLI::PositiveNumber);
  cmd->add_option("--size", c.sizes, "linear size(s), e.g. 24 or 12,18,24");
  cmd->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_flag("--no-runtime", c.no_runtime, "write runtime_s as 0 so outputs compare byte for byte");
}

topo::SweepConfig load(const Common& c, const std::vector<std::string>& kinds_override) {
  topo::SweepConfig cfg = topo::SweepConfig::from_file(c.config);
  if (c.seeds > 0) cfg.seeds = c.seeds;
  if (!c.sizes.empty()) cfg.sizes = topo::parse_sizes(c.sizes);
  if (c.threads > 0) cfg.threads = c.threads;
  if (!c.out.empty()) cfg.output = c.out;
  if (!kinds_override.empty()) cfg.invariants = kinds_override;
  cfg.record_runtime = !c.no_runtime;
  return cfg;
}

std::string calibration_id(const topo::SweepConfig& cfg) {
  if (cfg.calibration_path.empty()) return topo::calibrate_sign().id;
  return topo::load_or_calibrate(cfg.calibration_path, std::cerr).id;
}

void emit(const std::vector<topo::ResultRow>& rows, const topo::SweepConfig& cfg) {
  if (cfg.output.empty()) {
    topo::write_csv(rows, std::cout, cfg.record_runtime);
  } else {
    topo::write_csv(rows, cfg.output, cfg.record_runtime);
  }
}

/// Picks the parity-appropriate invariant for bulk/boundary/index shortcuts.
std::vector<std::string> by_parity(const Common& c, const char* even, const char* odd) {
  const topo::SweepConfig cfg = topo::SweepConfig::from_file(c.config);
  const topo::PointSetup s = topo::PointSetup::from_document(cfg.document_at(0));
  return {s.spec.dimension % 2 == 0 ? even : odd};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disordered topological invariants: bulk, boundary, index and localization runs"};
  app.require_subcommand(1);

  Common bulk, boundary, index, localize, sweep, converge;
  add_common(app.add_subcommand("bulk", "real-space Chern number of the bulk"), bulk);
  add_common(app.add_subcommand("boundary", "boundary invariant of the half-space model"), boundary);
  add_common(app.add_subcommand("index", "Fedosov evaluation of the Fredholm index"), index);
  add_common(app.add_subcommand("localize", "fractional-moment decay rates"), localize);
  add_common(app.add_subcommand("sweep", "parameter sweep over the invariants in the config"), sweep);
  add_common(app.add_subcommand("converge", "deviation versus system size"), converge);
  auto* cal = app.add_subcommand("calibrate", "sign calibration against the Hofstadter reference");
  std::string cal_out = "calibration.json";
  cal->add_option("--out", cal_out, "calibration record path");

  CLI11_PARSE(app, argc, argv);
  topo::set_blas_threads(1);

  try {
    if (cal->parsed()) {
      const topo::CalibrationRecord r = topo::load_or_calibrate(cal_out, std::cerr);
      std::cout << r.to_json().dump(2) << '\n';
      return 0;
    }
    const std::pair<const char*, Common*> cmds[] = {{"bulk", &bulk},         {"boundary", &boundary},
                                                    {"index", &index},       {"localize", &localize},
                                                    {"sweep", &sweep},       {"converge", &converge}};
    for (const auto& [name, common] : cmds) {
      if (!app.got_subcommand(name)) continue;
      const std::string cmd = name;
      std::vector<std::string> kinds;
      if (cmd == "bulk") kinds = by_parity(*common, "even_chern", "odd_chern");
      if (cmd == "boundary") kinds = by_parity(*common, "boundary_odd_chern", "boundary_even_chern");
      if (cmd == "index") kinds = by_parity(*common, "fredholm_projection", "fredholm_unitary");
      if (cmd == "localize") kinds = {"decay_rate"};
      const topo::SweepConfig cfg = load(*common, kinds);
      const std::string id = calibration_id(cfg);
      if (cmd == "converge") {
        const topo::ConvergenceTable t = topo::convergence_study(cfg, id);
        emit(t.rows, cfg);
        if (!t.monotone) std::cerr << "note: deviations are not monotone in size (rows flagged)\n";
      } else {
        emit(topo::run_sweep(cfg, id), cfg);
      }
    }
  } catch (const topo::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
