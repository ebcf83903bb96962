#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "topo/invariants.hpp"
#include "topo/serialize.hpp"

namespace topo {

/// Everything a run needs, parsed from a JSON document. The model is either
/// a named family with parameters or an inline HoppingSpec.
struct SweepConfig {
  Json document;  // original config; sweep values are substituted into it

  std::vector<int> sizes{24};
  int seeds = 1;
  std::uint64_t base_seed = 1;
  std::vector<std::string> invariants;
  std::string sweep_parameter;  // JSON pointer into `document`, empty for a single point
  std::vector<double> sweep_values;
  int threads = 1;
  std::string output;
  bool record_runtime = true;
  std::string calibration_path;  // empty: calibrate in memory

  static SweepConfig from_json(const Json& j);
  static SweepConfig from_file(const std::string& path);
  std::size_t points() const { return sweep_values.empty() ? 1 : sweep_values.size(); }
  /// Config document with the sweep value of `point` substituted.
  Json document_at(std::size_t point) const;
  void validate() const;
};

/// Model and numerical settings of one sweep point.
struct PointSetup {
  HoppingSpec spec;
  MagneticFlux flux;
  double fermi_level = 0.0;
  int margin = -1;  // -1: L/4
  // boundary
  int depth = 0;    // 0: L/2
  double switch_a = -0.5;
  double switch_b = 0.5;
  bool step_switch = false;
  std::optional<int> strip_halfwidth;
  int gap_probe = 0;  // side of the gap-probe torus; 0 picks one from d and N
  // index
  double radius = 10.0;
  std::vector<double> x0;
  int order = 0;
  // localization
  Complex z{0.0, 1e-3};
  double s = 0.5;
  int fit_min = 1;
  int fit_max = -1;  // -1: L/2 - 1

  static PointSetup from_document(const Json& doc);
};

struct ResultRow {
  std::string model_id;
  int d = 0;
  std::string kind;
  int size = 0;
  int depth = 0;
  std::size_t seed_count = 0;
  double raw = 0.0;
  long nearest = 0;
  double deviation = 0.0;
  double stddev = 0.0;
  double runtime_s = 0.0;
  std::size_t point = 0;
  std::string sweep_parameter;
  double sweep_value = 0.0;
  std::string flag;  // "", "unconverged", "ill_conditioned", ...
  std::string calibration_id;
  InvariantResult result;
};

/// Seed of replica r at sweep point p.
std::uint64_t seed_for(std::uint64_t base_seed, std::size_t point, int replica);

/// Computes one invariant kind for one realisation (or, for decay_rate, the
/// whole seed list at once).
InvariantResult compute_invariant(const std::string& kind, const PointSetup& setup, int size,
                                  const std::vector<std::uint64_t>& seeds);

std::vector<ResultRow> run_sweep(const SweepConfig& config, const std::string& calibration_id);

struct ConvergenceTable {
  std::vector<ResultRow> rows;
  bool monotone = true;  // deviations non-increasing in size up to 2 sigma
};

ConvergenceTable convergence_study(const SweepConfig& config, const std::string& calibration_id);

void write_csv(const std::vector<ResultRow>& rows, std::ostream& out, bool record_runtime);
void write_csv(const std::vector<ResultRow>& rows, const std::string& path, bool record_runtime);

/// Parses "24" or "12,18,24".
std::vector<int> parse_sizes(const std::string& text);

/// Pins the BLAS backend to one thread so parallelism comes from the pool.
void set_blas_threads(int n);

}  // namespace topo
