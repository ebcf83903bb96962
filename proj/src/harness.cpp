#include "topo/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "topo/bloch.hpp"
#include "topo/lattice.hpp"
#include "topo/localization.hpp"
#include "topo/models.hpp"
#include "topo/spectral.hpp"

extern "C" void openblas_set_num_threads(int);

namespace topo {

namespace {

const std::vector<std::string> kKinds{"even_chern",         "odd_chern",           "fredholm_projection",
                                      "fredholm_unitary",   "boundary_odd_chern",  "boundary_even_chern",
                                      "decay_rate"};

bool needs_even(const std::string& kind) {
  return kind == "even_chern" || kind == "fredholm_projection" || kind == "boundary_odd_chern";
}

bool needs_odd(const std::string& kind) {
  return kind == "odd_chern" || kind == "fredholm_unitary" || kind == "boundary_even_chern";
}

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

HoppingSpec spec_from_document(const Json& doc) {
  if (!doc.contains("model")) throw ConfigError("config needs a 'model' section");
  const Json& m = doc.at("model");
  if (m.contains("spec")) return spec_from_json(m.at("spec"));
  const auto family = get_or<std::string>(m, "family", "");
  if (family.empty()) throw ConfigError("model needs 'family' or 'spec'");
  return make_model(family, get_or<std::map<std::string, double>>(m, "params", {}));
}

int margin_for(const PointSetup& s, int size) { return s.margin >= 0 ? s.margin : size / 4; }

std::vector<double> default_x0(const PointSetup& s, int d) {
  return s.x0.empty() ? std::vector<double>(static_cast<std::size_t>(d), 0.5) : s.x0;
}

DisorderConfig disorder_for(const HoppingSpec& spec, std::uint64_t seed, const FiniteGeometry& g,
                            std::optional<int> strip = std::nullopt) {
  // A clean spec still gets a (zero-weight) configuration so provenance is uniform.
  return spec.disorder_amplitude == 0.0 ? DisorderConfig{seed, g, {}, strip} : sample_disorder(seed, g, strip);
}

FermiProjection bulk_projection(const PointSetup& s, const FiniteGeometry& box, std::uint64_t seed) {
  const FiniteModel model = build_bulk(s.spec, s.flux, box, disorder_for(s.spec, seed, box));
  return fermi_projection(decompose(model), s.fermi_level);
}

bool translation_invariant(const PointSetup& s) { return s.spec.disorder_amplitude == 0.0 && s.flux.is_zero(); }

/// Flat-band unitary on a torus. Clean zero-flux models go through the Bloch
/// symbol; otherwise the half-size polar route avoids the full eigensolve.
CMatrix bulk_unitary(const PointSetup& s, const FiniteGeometry& torus, std::uint64_t seed) {
  if (!s.spec.chiral_symmetry) throw ConfigError("odd invariants need a chiral spec");
  if (translation_invariant(s)) return bloch_flat_band_unitary(s.spec, torus.sides)->dense();
  const FiniteModel model = build_bulk(s.spec, s.flux, torus, disorder_for(s.spec, seed, torus));
  return flat_band_unitary_polar(model.matrix, *s.spec.chiral_symmetry, s.spec.fiber_dim);
}

/// Side of the torus used to probe the bulk gap: the largest one with at
/// most ~1024 matrix rows that is compatible with the flux.
int probe_side(const PointSetup& s) {
  if (s.gap_probe > 0) return s.gap_probe;
  const int d = s.spec.dimension;
  const double rows = 1024.0 / s.spec.fiber_dim;
  int side = std::max(2 * s.spec.range() + 1, static_cast<int>(std::floor(std::pow(rows, 1.0 / d) + 1e-9)));
  for (int l = side; l > 2 * s.spec.range(); --l) {
    try {
      s.flux.check_commensurate(FiniteGeometry::torus(d, l));
      return l;
    } catch (const ConfigError&) {
    }
  }
  return side;
}

/// Gap around the Fermi level of the bulk model on a small torus with the
/// same seed; used to decide whether the switch interval is well placed.
std::optional<GapReport> bulk_gap_probe(const PointSetup& s, std::uint64_t seed) {
  const FiniteGeometry torus = FiniteGeometry::torus(s.spec.dimension, probe_side(s));
  const FiniteModel model = build_bulk(s.spec, s.flux, torus, disorder_for(s.spec, seed, torus));
  SpectralDecomposition dec;
  dec.values = hermitian_eigenvalues(model.matrix);
  dec.norm = dec.values.cwiseAbs().maxCoeff();
  return dec.gap_at(s.fermi_level);
}

FiniteGeometry slab_for(const PointSetup& s, int size) {
  const int depth = s.depth > 0 ? s.depth : std::max(2, size / 2);
  return FiniteGeometry::slab(std::vector<int>(static_cast<std::size_t>(s.spec.dimension - 1), size), depth);
}

}  // namespace

// ---------------------------------------------------------------------------

SweepConfig SweepConfig::from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  SweepConfig c;
  c.document = j;
  c.sizes = get_or<std::vector<int>>(j, "sizes", c.sizes);
  c.seeds = get_or<int>(j, "seeds", c.seeds);
  c.base_seed = get_or<std::uint64_t>(j, "base_seed", c.base_seed);
  c.invariants = get_or<std::vector<std::string>>(j, "invariants", {});
  if (j.contains("sweep") && !j.at("sweep").is_null()) {
    c.sweep_parameter = get_or<std::string>(j.at("sweep"), "parameter", "");
    c.sweep_values = get_or<std::vector<double>>(j.at("sweep"), "values", {});
  }
  c.threads = get_or<int>(j, "threads", c.threads);
  c.output = get_or<std::string>(j, "output", "");
  c.calibration_path = get_or<std::string>(j, "calibration", "");
  return c;
}

SweepConfig SweepConfig::from_file(const std::string& path) { return from_json(read_json_file(path)); }

Json SweepConfig::document_at(std::size_t point) const {
  Json doc = document;
  if (!sweep_parameter.empty()) doc[Json::json_pointer(sweep_parameter)] = sweep_values.at(point);
  return doc;
}

void SweepConfig::validate() const {
  if (sizes.empty()) throw ConfigError("config needs at least one size");
  for (int s : sizes) {
    if (s < 2) throw ConfigError("sizes must be >= 2");
  }
  if (seeds < 1) throw ConfigError("seeds must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (invariants.empty()) throw ConfigError("config lists no invariants");
  if (!sweep_parameter.empty()) {
    if (sweep_values.empty()) throw ConfigError("sweep grid is empty");
    const bool up = sweep_values.size() < 2 || sweep_values[1] > sweep_values[0];
    for (std::size_t i = 1; i < sweep_values.size(); ++i) {
      if (up ? !(sweep_values[i] > sweep_values[i - 1]) : !(sweep_values[i] < sweep_values[i - 1]))
        throw ConfigError("sweep grid must be strictly monotone");
    }
    Json::json_pointer ptr;
    try {
      ptr = Json::json_pointer(sweep_parameter);
    } catch (const Json::exception& e) {
      throw ConfigError("sweep parameter is not a JSON pointer: " + std::string(e.what()));
    }
    if (!document.contains(ptr)) throw ConfigError("sweep parameter '" + sweep_parameter + "' not found in config");
  } else if (!sweep_values.empty()) {
    throw ConfigError("sweep values given without a parameter");
  }
  const PointSetup setup = PointSetup::from_document(document_at(0));
  const int d = setup.spec.dimension;
  for (const std::string& k : invariants) {
    if (std::find(kKinds.begin(), kKinds.end(), k) == kKinds.end()) throw ConfigError("unknown invariant '" + k + "'");
    if ((needs_even(k) && d % 2 != 0) || (needs_odd(k) && d % 2 != 1))
      throw ConfigError("invariant '" + k + "' is not defined in d = " + std::to_string(d));
  }
}

PointSetup PointSetup::from_document(const Json& doc) {
  PointSetup s;
  s.spec = spec_from_document(doc);
  s.flux = flux_from_json(doc.contains("flux") ? doc.at("flux") : Json(), s.spec.dimension);
  s.fermi_level = get_or<double>(doc, "fermi_level", 0.0);
  s.margin = get_or<int>(doc, "margin", -1);
  if (doc.contains("boundary")) {
    const Json& b = doc.at("boundary");
    s.depth = get_or<int>(b, "depth", 0);
    const auto sw = get_or<std::vector<double>>(b, "switch", {s.switch_a, s.switch_b});
    if (sw.size() != 2 || !(sw[0] < sw[1])) throw ConfigError("boundary.switch must be [a, b] with a < b");
    s.switch_a = sw[0];
    s.switch_b = sw[1];
    s.step_switch = get_or<bool>(b, "step", false);
    if (b.contains("strip_halfwidth") && !b.at("strip_halfwidth").is_null())
      s.strip_halfwidth = b.at("strip_halfwidth").get<int>();
    s.gap_probe = get_or<int>(b, "gap_probe", s.gap_probe);
  }
  if (doc.contains("index")) {
    const Json& ix = doc.at("index");
    s.radius = get_or<double>(ix, "radius", s.radius);
    s.x0 = get_or<std::vector<double>>(ix, "x0", {});
    s.order = get_or<int>(ix, "order", 0);
  }
  if (doc.contains("localization")) {
    const Json& l = doc.at("localization");
    const auto z = get_or<std::vector<double>>(l, "z", {s.z.real(), s.z.imag()});
    if (z.size() != 2) throw ConfigError("localization.z must be [re, im]");
    s.z = Complex(z[0], z[1]);
    s.s = get_or<double>(l, "s", s.s);
    const auto w = get_or<std::vector<int>>(l, "window", {s.fit_min, s.fit_max});
    if (w.size() != 2) throw ConfigError("localization.window must be [min, max]");
    s.fit_min = w[0];
    s.fit_max = w[1];
  }
  return s;
}

std::uint64_t seed_for(std::uint64_t base_seed, std::size_t point, int replica) {
  return base_seed + static_cast<std::uint64_t>(point) * 1000000ULL + static_cast<std::uint64_t>(replica);
}

InvariantResult compute_invariant(const std::string& kind, const PointSetup& s, int size,
                                  const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("compute_invariant needs a seed");
  const int d = s.spec.dimension;
  const std::uint64_t seed = seeds.front();
  InvariantResult r;

  if (kind == "even_chern" || kind == "fredholm_projection") {
    const FiniteGeometry box = FiniteGeometry::box(d, size);
    const FermiProjection p = bulk_projection(s, box, seed);
    if (kind == "even_chern") {
      r = even_chern(p.matrix, box, s.spec.fiber_dim, central_region(box, margin_for(s, size)));
    } else {
      IndexOptions opt{default_x0(s, d), s.radius, s.order};
      r = fredholm_index_projection(DenseMap(p.matrix), box, s.spec.fiber_dim, CliffordRep::standard(d), opt);
    }
  } else if (kind == "odd_chern" || kind == "fredholm_unitary") {
    const FiniteGeometry torus = FiniteGeometry::torus(d, size);
    const int half = s.spec.fiber_dim / 2;
    if (kind == "odd_chern") {
      r = odd_chern(bulk_unitary(s, torus, seed), torus, half, central_region(torus, margin_for(s, size), true));
    } else {
      IndexOptions opt{default_x0(s, d), s.radius, s.order};
      if (translation_invariant(s)) {
        if (!s.spec.chiral_symmetry) throw ConfigError("odd invariants need a chiral spec");
        r = fredholm_index_unitary(*bloch_flat_band_unitary(s.spec, torus.sides), torus, half,
                                   CliffordRep::standard(d), opt);
      } else {
        r = fredholm_index_unitary(DenseMap(bulk_unitary(s, torus, seed)), torus, half, CliffordRep::standard(d), opt);
      }
    }
  } else if (kind == "boundary_odd_chern") {
    const FiniteGeometry slab = slab_for(s, size);
    const SwitchFunction f = s.step_switch ? SwitchFunction::step(s.fermi_level)
                                           : SwitchFunction::descending(s.fermi_level + s.switch_a,
                                                                        s.fermi_level + s.switch_b);
    if (translation_invariant(s)) {
      r = boundary_odd_chern_bloch(s.spec, BoundaryTerm::none(), size, slab.depth(), f, bulk_gap_probe(s, seed));
    } else {
      const FiniteModel model = build_halfspace(s.spec, BoundaryTerm::none(), s.flux, slab,
                                                disorder_for(s.spec, seed, slab, s.strip_halfwidth));
      const BoundaryUnitary bu = boundary_unitary(decompose(model), f, bulk_gap_probe(s, seed));
      r = boundary_odd_chern(bu.deviation, slab, s.spec.fiber_dim, EdgeRegion::central(slab));
      r.ill_conditioned = bu.ill_conditioned;
    }
  } else if (kind == "boundary_even_chern") {
    if (!s.spec.chiral_symmetry) throw ConfigError("boundary_even_chern needs a chiral spec");
    const FiniteGeometry slab = slab_for(s, size);
    const SwitchFunction f = s.step_switch ? SwitchFunction::step(0.0) : SwitchFunction::odd(s.switch_b);
    if (translation_invariant(s) && d >= 2) {
      r = boundary_even_chern_bloch(s.spec, BoundaryTerm::none(), size, slab.depth(), f, bulk_gap_probe(s, seed));
    } else {
      const FiniteModel model = build_halfspace(s.spec, BoundaryTerm::none(), s.flux, slab,
                                                disorder_for(s.spec, seed, slab, s.strip_halfwidth));
      const BoundaryProjection bp = boundary_projection(decompose(model), f, *s.spec.chiral_symmetry,
                                                        s.spec.fiber_dim, bulk_gap_probe(s, seed));
      r = boundary_even_chern(bp.matrix, bp.reference, slab, s.spec.fiber_dim, EdgeRegion::central(slab));
      r.ill_conditioned = bp.ill_conditioned;
    }
  } else if (kind == "decay_rate") {
    const FiniteGeometry box = FiniteGeometry::box(d, size);
    const MomentProfile prof = resolvent_moments(s.spec, s.flux, box, s.z, s.s, seeds);
    const int dmax = s.fit_max > 0 ? s.fit_max : size / 2 - 1;
    const DecayFit fit = fit_decay(prof, s.fit_min, dmax);
    r.kind = "decay_rate";
    r.dim = d;
    r.raw = fit.beta;
    r.mean = fit.beta;
    r.values = {fit.beta};
    r.nearest = 0;
    r.deviation = fit.beta_stderr;
    r.stddev = fit.beta_stderr;
    r.region = fit.to_json();
    r.geometry = box.describe();
    r.unconverged = fit.quality < 0.8;
    r.seeds = seeds;
    r.model = s.spec.id;
    return r;
  } else {
    throw ConfigError("unknown invariant '" + kind + "'");
  }
  r.model = s.spec.id;
  r.seeds = {seed};
  return r;
}

std::vector<ResultRow> run_sweep(const SweepConfig& config, const std::string& calibration_id) {
  config.validate();
  struct Task {
    std::size_t row;
    std::vector<std::uint64_t> seeds;
  };
  struct Slot {
    std::size_t point;
    int size;
    std::string kind;
    std::vector<std::size_t> tasks;
  };
  std::vector<PointSetup> setups;
  for (std::size_t p = 0; p < config.points(); ++p) setups.push_back(PointSetup::from_document(config.document_at(p)));

  std::vector<Slot> slots;
  std::vector<Task> tasks;
  for (std::size_t p = 0; p < config.points(); ++p)
    for (int size : config.sizes)
      for (const std::string& kind : config.invariants) {
        Slot slot{p, size, kind, {}};
        if (kind == "decay_rate") {
          std::vector<std::uint64_t> seeds;
          for (int r = 0; r < config.seeds; ++r) seeds.push_back(seed_for(config.base_seed, p, r));
          slot.tasks.push_back(tasks.size());
          tasks.push_back({slots.size(), seeds});
        } else {
          for (int r = 0; r < config.seeds; ++r) {
            slot.tasks.push_back(tasks.size());
            tasks.push_back({slots.size(), {seed_for(config.base_seed, p, r)}});
          }
        }
        slots.push_back(std::move(slot));
      }

  std::vector<InvariantResult> results(tasks.size());
  std::vector<double> runtimes(tasks.size(), 0.0);
  std::vector<std::string> failures(tasks.size());
  std::vector<std::exception_ptr> fatal(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < tasks.size(); t = next++) {
      const Slot& slot = slots[tasks[t].row];
      const auto start = std::chrono::steady_clock::now();
      try {
        results[t] = compute_invariant(slot.kind, setups[slot.point], slot.size, tasks[t].seeds);
      } catch (const PreconditionError& e) {
        failures[t] = e.what();
      } catch (const NumericalError& e) {
        failures[t] = e.what();
      } catch (...) {
        fatal[t] = std::current_exception();
      }
      runtimes[t] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
  };
  const int nthreads = std::min<int>(config.threads, static_cast<int>(std::max<std::size_t>(tasks.size(), 1)));
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }
  for (const auto& e : fatal) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<ResultRow> rows;
  for (const Slot& slot : slots) {
    const PointSetup& s = setups[slot.point];
    ResultRow row;
    row.model_id = s.spec.id;
    row.d = s.spec.dimension;
    row.kind = slot.kind;
    row.size = slot.size;
    if (slot.kind.rfind("boundary", 0) == 0) row.depth = slab_for(s, slot.size).depth();
    row.point = slot.point;
    row.sweep_parameter = config.sweep_parameter;
    row.sweep_value = config.sweep_values.empty() ? 0.0 : config.sweep_values[slot.point];
    row.calibration_id = calibration_id;
    std::vector<InvariantResult> ok;
    std::string failure;
    for (std::size_t t : slot.tasks) {
      row.runtime_s += runtimes[t];
      if (failures[t].empty()) {
        ok.push_back(results[t]);
      } else if (failure.empty()) {
        failure = failures[t];
      }
    }
    row.seed_count = slot.kind == "decay_rate" ? static_cast<std::size_t>(config.seeds) : ok.size();
    if (!failure.empty() || ok.empty()) {
      row.raw = std::nan("");
      row.deviation = std::nan("");
      row.stddev = std::nan("");
      row.flag = "failed";
      row.result.kind = slot.kind;
      row.result.region = failure;
      rows.push_back(std::move(row));
      continue;
    }
    row.result = slot.kind == "decay_rate" ? ok.front() : aggregate(ok);
    row.raw = row.result.raw;
    row.nearest = row.result.nearest;
    row.deviation = row.result.deviation;
    row.stddev = row.result.stddev;
    std::vector<std::string> flags;
    if (row.result.unconverged) flags.push_back(slot.kind == "decay_rate" ? "poor_fit" : "unconverged");
    if (row.result.ill_conditioned) flags.push_back("ill_conditioned");
    for (std::size_t i = 0; i < flags.size(); ++i) row.flag += (i ? "|" : "") + flags[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

ConvergenceTable convergence_study(const SweepConfig& config, const std::string& calibration_id) {
  if (config.sizes.size() < 3) throw ConfigError("convergence_study needs at least three sizes");
  if (config.points() != 1) throw ConfigError("convergence_study runs a single model point");
  SweepConfig sorted = config;
  std::sort(sorted.sizes.begin(), sorted.sizes.end());
  ConvergenceTable table;
  table.rows = run_sweep(sorted, calibration_id);
  for (const std::string& kind : sorted.invariants) {
    ResultRow* prev = nullptr;
    for (ResultRow& row : table.rows) {
      if (row.kind != kind) continue;
      if (row.flag == "failed") {
        table.monotone = false;
        continue;
      }
      if (prev && row.deviation > prev->deviation + 2.0 * std::hypot(prev->stddev, row.stddev) + 1e-12) {
        table.monotone = false;
        row.flag += row.flag.empty() ? "nonmonotone" : "|nonmonotone";
      }
      prev = &row;
    }
  }
  return table;
}

void write_csv(const std::vector<ResultRow>& rows, std::ostream& out, bool record_runtime) {
  out << "model_id,d,invariant_kind,L,depth,seed_count,raw,nearest,deviation,std,runtime_s,"
         "sweep_parameter,sweep_value,flag,calibration_id\n";
  out << std::setprecision(17);
  for (const ResultRow& r : rows) {
    out << r.model_id << ',' << r.d << ',' << r.kind << ',' << r.size << ',' << r.depth << ',' << r.seed_count << ','
        << r.raw << ',' << r.nearest << ',' << r.deviation << ',' << r.stddev << ','
        << (record_runtime ? r.runtime_s : 0.0) << ',' << r.sweep_parameter << ',' << r.sweep_value << ',' << r.flag
        << ',' << r.calibration_id << '\n';
  }
}

void write_csv(const std::vector<ResultRow>& rows, const std::string& path, bool record_runtime) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  write_csv(rows, out, record_runtime);
}

std::vector<int> parse_sizes(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("bad size list '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty size list");
  return out;
}

void set_blas_threads(int n) { openblas_set_num_threads(n); }

}  // namespace topo
