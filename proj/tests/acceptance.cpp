// Acceptance checks: one PASS/FAIL line per criterion.
// Usage: acceptance [criterion ...]   (default: all)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "topo/bloch.hpp"
#include "topo/harness.hpp"
#include "topo/invariants.hpp"
#include "topo/localization.hpp"
#include "topo/models.hpp"
#include "topo/spectral.hpp"

using namespace topo;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      note("FAILED " + what);
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---- independent oracles

/// Winding of k -> t1 + t2 e^{ik}.
double ssh_winding(double t1, double t2) {
  const int n = 4096;
  double total = 0.0;
  auto h = [&](int i) { return t1 + t2 * std::polar(1.0, 2 * kPi * i / n); };
  for (int i = 0; i < n; ++i) total += std::arg(h(i + 1) / h(i));
  return total / (2 * kPi);
}

/// Lyapunov exponent of -psi_{n+1} - psi_{n-1} + W omega_n psi_n = E psi_n.
double lyapunov(double w, double e, long steps, unsigned seed) {
  std::mt19937_64 eng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  double a = 1.0, b = 0.0, sum = 0.0;
  for (long n = 0; n < steps; ++n) {
    const double c = (w * u(eng) - e) * a - b;
    b = a;
    a = c;
    const double norm = std::hypot(a, b);
    sum += std::log(norm);
    a /= norm;
    b /= norm;
  }
  return sum / static_cast<double>(steps);
}

// ---- shared computations

CMatrix box_projection(const HoppingSpec& spec, const MagneticFlux& flux, int l, double mu, std::uint64_t seed) {
  const FiniteGeometry box = FiniteGeometry::box(2, l);
  return fermi_projection(decompose(build_bulk(spec, flux, box, sample_disorder(seed, box))), mu).matrix;
}

CMatrix ring_unitary(const HoppingSpec& spec, int cells, std::uint64_t seed) {
  const FiniteGeometry ring = FiniteGeometry::torus(1, cells);
  return flat_band_unitary_polar(build_bulk(spec, MagneticFlux::none(1), ring, sample_disorder(seed, ring)).matrix,
                                 *spec.chiral_symmetry, spec.fiber_dim);
}

InvariantResult ring_chern(const CMatrix& u, int cells) {
  const FiniteGeometry ring = FiniteGeometry::torus(1, cells);
  return odd_chern(u, ring, 1, central_region(ring, cells / 4, true));
}

IndexOptions index_options(std::vector<double> x0, double radius, int order = 0) {
  IndexOptions o;
  o.x0 = std::move(x0);
  o.radius = radius;
  o.order = order;
  return o;
}

std::string rows_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream out;
  write_csv(rows, out, false);
  return out.str();
}

// ---- criteria

Outcome quantization() {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  const FiniteGeometry box = FiniteGeometry::box(2, 24);
  const InvariantResult clean =
      even_chern(box_projection(models::qwz(1.0), MagneticFlux::none(2), 24, 0.0, 1), box, 2, central_region(box, 6));
  o.note("clean Ch=" + fmt("%.6f", clean.raw));
  o.require(clean.deviation < 0.01, "clean |Ch - n| < 0.01");
  o.require(std::abs(clean.nearest) == 1, "clean integer nonzero");

  SweepConfig c = SweepConfig::from_json(Json::parse(
      R"({"model":{"family":"qwz","params":{"m":1,"W":2}},"invariants":["even_chern"],"sizes":[24],"seeds":20,
          "margin":6})"));
  const std::vector<ResultRow> rows = run_sweep(c, "acceptance");
  const ResultRow& r = rows.at(0);
  o.note("W=2 mean=" + fmt("%.5f", r.raw) + " std=" + fmt("%.5f", r.stddev));
  o.require(r.seed_count == 20, "20 seeds");
  o.require(std::abs(r.raw - static_cast<double>(clean.nearest)) < 0.05, "disordered mean within 0.05");
  o.require(r.stddev < 0.05, "disordered std < 0.05");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.note("runtime " + fmt("%.0f s", secs));
  o.require(secs < 300.0, "runtime < 5 min");
  return o;
}

Outcome winding() {
  Outcome o;
  for (double t1 : {0.5, 2.0}) {
    const HoppingSpec s = models::ssh(t1, 1.0);
    const InvariantResult r = ring_chern(ring_unitary(s, 64, 1), 64);
    const double w = ssh_winding(t1, 1.0);
    o.note("t1=" + fmt("%g", t1) + " Ch1=" + fmt("%.9f", r.raw));
    o.require(std::abs(r.raw - static_cast<double>(r.nearest)) < 1e-6, "clean within 1e-6");
    o.require(std::abs(r.nearest) == std::lround(std::abs(w)), "clean integer matches the winding oracle");
    if (t1 != 0.5) continue;
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
      const InvariantResult d = ring_chern(ring_unitary(models::ssh(t1, 1.0, 1.0), 64, seed_for(1, 0, k)), 64);
      worst = std::max(worst, std::abs(d.raw - static_cast<double>(r.nearest)));
    }
    o.note("W=1 worst seed deviation " + fmt("%.2e", worst));
    o.require(worst < 0.02, "disordered within 0.02 for all 20 seeds");
  }
  return o;
}

struct IndexCase {
  std::string name;
  long trace_integer = 0;
  std::function<InvariantResult(const std::vector<double>& x0, double radius)> fedosov;
  double radius = 10.0;
  double x0_radius = 10.0;  // radius used for the random-offset runs
};

std::vector<IndexCase> index_cases() {
  std::vector<IndexCase> out;
  for (const auto& [t1, w] : std::vector<std::pair<double, double>>{{0.0, 0.0}, {0.5, 0.0}, {2.0, 0.0}, {0.5, 1.0}}) {
    const HoppingSpec s = models::ssh(t1, 1.0, w);
    const CMatrix u = ring_unitary(s, 64, 5);
    IndexCase c;
    c.name = s.id;
    c.trace_integer = ring_chern(u, 64).nearest;
    c.fedosov = [u](const std::vector<double>& x0, double radius) {
      return fredholm_index_unitary(DenseMap(u), FiniteGeometry::torus(1, 64), 1, CliffordRep::standard(1),
                                    index_options(x0, radius));
    };
    out.push_back(std::move(c));
  }
  struct Planar {
    HoppingSpec spec;
    MagneticFlux flux;
    double mu;
    int fiber;
  };
  for (const Planar& p : {Planar{models::qwz(1.0), MagneticFlux::none(2), 0.0, 2},
                          Planar{models::qwz(-1.0), MagneticFlux::none(2), 0.0, 2},
                          Planar{models::qwz(3.0), MagneticFlux::none(2), 0.0, 2},
                          Planar{models::qwz(1.0, 2.0), MagneticFlux::none(2), 0.0, 2},
                          Planar{models::hofstadter(), MagneticFlux::planar(2, 0, 1, 1.0 / 3.0), -1.4, 1}}) {
    const FiniteGeometry box = FiniteGeometry::box(2, 24);
    const CMatrix proj = box_projection(p.spec, p.flux, 24, p.mu, 5);
    IndexCase c;
    c.name = p.spec.id + (p.flux.is_zero() ? "" : " flux 1/3");
    c.trace_integer = even_chern(proj, box, p.fiber, central_region(box, 6)).nearest;
    const int fiber = p.fiber;
    c.fedosov = [proj, box, fiber](const std::vector<double>& x0, double radius) {
      return fredholm_index_projection(DenseMap(proj), box, fiber, CliffordRep::standard(2), index_options(x0, radius));
    };
    out.push_back(std::move(c));
  }
  for (double m : {2.0, 4.0}) {
    const HoppingSpec s = models::chiral3d(m);
    const FiniteGeometry small = FiniteGeometry::torus(3, 12);
    IndexCase c;
    c.name = s.id;
    c.trace_integer =
        odd_chern(bloch_flat_band_unitary(s, small.sides)->dense(), small, 2, central_region(small, 4, true)).nearest;
    c.fedosov = [s](const std::vector<double>& x0, double radius) {
      // The radius-10 ball needs a torus of side 22; smaller radii use side 12.
      const FiniteGeometry torus = FiniteGeometry::torus(3, radius > 5.0 ? 22 : 12);
      return fredholm_index_unitary(*bloch_flat_band_unitary(s, torus.sides), torus, 2, CliffordRep::standard(3),
                                    index_options(x0, radius, 3));
    };
    c.x0_radius = 5.0;
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<double> centre(std::size_t d) { return std::vector<double>(d, 0.5); }

std::size_t case_dim(const IndexCase& c) {
  if (c.name.rfind("ssh", 0) == 0) return 1;
  if (c.name.rfind("chiral3d", 0) == 0) return 3;
  return 2;
}

Outcome index_agreement() {
  Outcome o;
  const std::vector<IndexCase> cases = index_cases();
  o.note(std::to_string(cases.size()) + " models");
  o.require(cases.size() >= 10, "at least 10 models");
  for (const IndexCase& c : cases) {
    const InvariantResult r = c.fedosov(centre(case_dim(c)), c.radius);
    o.note(c.name + ": trace " + std::to_string(c.trace_integer) + ", index " + fmt("%.4f", r.raw));
    o.require(r.nearest == c.trace_integer, c.name + " integers agree");
    o.require(r.deviation < 0.05, c.name + " index within 0.05");
  }
  return o;
}

Outcome offset_independence() {
  Outcome o;
  std::mt19937_64 eng(20240601);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  int runs = 0, agree = 0;
  for (const IndexCase& c : index_cases()) {
    for (int k = 0; k < 5; ++k) {
      std::vector<double> x0(case_dim(c));
      for (double& v : x0) v = u(eng);
      const long n = c.fedosov(x0, c.x0_radius).nearest;
      ++runs;
      if (n == c.trace_integer) ++agree;
      else o.note(c.name + " offset run gave " + std::to_string(n));
    }
  }
  o.note(std::to_string(agree) + "/" + std::to_string(runs) + " runs identical");
  o.require(agree == runs, "all offsets give the same integer");
  return o;
}

Outcome bulk_boundary() {
  Outcome o;
  const FiniteGeometry box = FiniteGeometry::box(2, 24);
  for (double m : {1.0, -1.0, 3.0}) {
    const InvariantResult bulk =
        even_chern(box_projection(models::qwz(m), MagneticFlux::none(2), 24, 0.0, 1), box, 2, central_region(box, 6));
    const InvariantResult edge = boundary_odd_chern_bloch(models::qwz(m), BoundaryTerm::none(), 64, 32,
                                                          SwitchFunction::descending(-0.5, 0.5));
    const double diff = std::abs(bulk.raw - edge.raw);
    o.note("QWZ m=" + fmt("%g", m) + " |Ch2 - Ch1~|=" + fmt("%.2e", diff));
    o.require(diff < 0.05, "QWZ bulk-boundary within 0.05");
  }
  for (const auto& [t1, t2] : std::vector<std::pair<double, double>>{{0.0, 1.0}, {1.0, 0.0}}) {
    const HoppingSpec s = models::ssh(t1, t2);
    const double bulk = ring_chern(ring_unitary(s, 64, 1), 64).raw;
    const FiniteGeometry line = FiniteGeometry::slab({}, 40);
    const SpectralDecomposition dec =
        decompose(build_halfspace(s, BoundaryTerm::none(), MagneticFlux::none(1), line, sample_disorder(1, line)));
    const BoundaryProjection bp = boundary_projection(dec, SwitchFunction::odd(0.3), *s.chiral_symmetry, 2);
    const double edge = boundary_even_chern(bp.matrix, bp.reference, line, 2, EdgeRegion::central(line)).raw;
    o.note("SSH (" + fmt("%g", t1) + "," + fmt("%g", t2) + ") bulk " + fmt("%.6f", bulk) + " edge " + fmt("%.6f", edge));
    o.require(std::abs(bulk - edge) < 1e-3, "SSH relative trace within 1e-3");
  }
  return o;
}

Outcome step_limit() {
  Outcome o;
  const SwitchFunction step = SwitchFunction::step(0.0);
  std::vector<std::pair<std::string, double>> values;

  const FiniteGeometry slab2 = FiniteGeometry::slab({12}, 8);
  const FiniteModel q = build_halfspace(models::qwz(1.0, 1.0), BoundaryTerm::none(), MagneticFlux::none(2), slab2,
                                        sample_disorder(3, slab2));
  values.emplace_back("QWZ disordered slab",
                      boundary_odd_chern(boundary_unitary(decompose(q), step).deviation, slab2, 2,
                                         EdgeRegion::central(slab2))
                          .raw);
  values.emplace_back("QWZ edge momenta",
                      boundary_odd_chern_bloch(models::qwz(1.0), BoundaryTerm::none(), 16, 8, step).raw);

  const HoppingSpec ssh = models::ssh(0.5, 1.0, 1.0);
  const FiniteGeometry line = FiniteGeometry::slab({}, 20);
  const BoundaryProjection sp = boundary_projection(
      decompose(build_halfspace(ssh, BoundaryTerm::none(), MagneticFlux::none(1), line, sample_disorder(3, line))), step,
      *ssh.chiral_symmetry, 2);
  values.emplace_back("SSH disordered half-line",
                      boundary_even_chern(sp.matrix, sp.reference, line, 2, EdgeRegion::central(line)).raw);

  const HoppingSpec c3 = models::chiral3d(2.0);
  const FiniteGeometry slab3 = FiniteGeometry::slab({3, 3}, 4);
  const BoundaryProjection bp = boundary_projection(
      decompose(build_halfspace(c3, BoundaryTerm::none(), MagneticFlux::none(3), slab3, sample_disorder(3, slab3))),
      step, *c3.chiral_symmetry, 4);
  values.emplace_back("d=3 slab", boundary_even_chern(bp.matrix, bp.reference, slab3, 4, EdgeRegion::central(slab3)).raw);
  values.emplace_back("d=3 edge momenta", boundary_even_chern_bloch(c3, BoundaryTerm::none(), 6, 6, step).raw);

  for (const auto& [name, v] : values) {
    o.note(name + " " + fmt("%g", v));
    o.require(v == 0.0, name + " exactly zero");
  }
  return o;
}

Outcome localization_probe() {
  Outcome o;
  std::vector<std::uint64_t> seeds;
  for (int k = 0; k < 50; ++k) seeds.push_back(seed_for(1, 0, k));
  const MomentProfile p = resolvent_moments(models::anderson(1, 1.0, 4.0), MagneticFlux::none(1),
                                            FiniteGeometry::box(1, 256), {0.0, 1e-3}, 0.5, seeds);
  const DecayFit fit = fit_decay(p, 1, 127);
  const double gamma = lyapunov(4.0, 0.0, 4000000, 7);
  // E|G|^s decays at rate s * gamma to leading order.
  const double scale = fit.s * gamma;
  o.note("beta=" + fmt("%.4f", fit.beta) + " quality=" + fmt("%.4f", fit.quality) + " gamma=" + fmt("%.4f", gamma) +
         " s*gamma=" + fmt("%.4f", scale));
  o.require(fit.quality > 0.9, "fit quality > 0.9");
  o.require(fit.beta > 0.0, "beta > 0");
  o.require(fit.beta > 0.5 * scale && fit.beta < 2.0 * scale, "beta within a factor 2 of s * gamma");
  return o;
}

Outcome transition_detection() {
  Outcome o;
  const std::vector<double> masses{1.0, 1.4, 1.8, 2.2, 2.6, 3.0};
  SweepConfig c = SweepConfig::from_json(
      Json::parse(R"({"model":{"family":"qwz","params":{"m":1}},"invariants":["even_chern"],"sizes":[24]})"));
  c.sweep_parameter = "/model/params/m";
  c.sweep_values = masses;
  const std::vector<ResultRow> rows = run_sweep(c, "acceptance");
  std::vector<std::size_t> jumps;
  std::string seq;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    seq += (i ? "," : "") + std::to_string(rows[i].nearest);
    if (i > 0 && rows[i].nearest != rows[i - 1].nearest) jumps.push_back(i - 1);
  }
  o.note("integers " + seq);
  o.require(jumps.size() == 1, "exactly one integer jump");

  // Clean gap of each grid cell: smallest band gap over masses in the cell.
  auto gap = [](double m) {
    const HoppingSpec s = models::qwz(m);
    const int n = 64;
    double g = 1e300;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        const RVector e = hermitian_eigensystem(bloch_hamiltonian(s, {2 * kPi * a / n, 2 * kPi * b / n})).values;
        g = std::min(g, e(1) - e(0));
      }
    return g;
  };
  std::size_t smallest = 0;
  double best = 1e300;
  for (std::size_t i = 0; i + 1 < masses.size(); ++i) {
    double g = 1e300;
    for (int k = 0; k <= 8; ++k) g = std::min(g, gap(masses[i] + (masses[i + 1] - masses[i]) * k / 8.0));
    if (g < best) {
      best = g;
      smallest = i;
    }
  }
  o.note("smallest gap " + fmt("%.3g", best) + " in cell [" + fmt("%g", masses[smallest]) + "," +
         fmt("%g", masses[smallest + 1]) + "]");
  o.require(!jumps.empty() && jumps.front() == smallest, "jump cell is the minimal-gap cell");
  return o;
}

Outcome covariance() {
  Outcome o;
  HoppingSpec q = models::qwz(1.0, 2.0);
  for (auto& h : q.hops)
    if (h.disorder.size() == 0) h.disorder = CMatrix::Identity(2, 2) * 0.3;
  struct Case {
    HoppingSpec spec;
    int side;
    double flux;
  };
  double worst = 0.0;
  int shifts = 0;
  for (const Case& c : {Case{q, 6, 1.0 / 3.0}, Case{models::hofstadter(1.0, 1.0), 6, 1.0 / 3.0},
                        Case{models::hofstadter(1.0, 1.0), 8, 1.0 / 4.0}, Case{q, 8, 3.0 / 8.0}}) {
    const FiniteGeometry t = FiniteGeometry::torus(2, c.side);
    const MagneticFlux f = MagneticFlux::planar(2, 0, 1, c.flux);
    const DisorderConfig omega = sample_disorder(99, t);
    const CMatrix h = build_bulk(c.spec, f, t, omega).matrix;
    for (int y1 = 0; y1 < c.side; ++y1)
      for (int y2 = 0; y2 < c.side; ++y2) {
        const Site y{y1, y2};
        const CMatrix u = magnetic_translation(t, c.spec.fiber_dim, f, y);
        const CMatrix shifted = build_bulk(c.spec, f, t, shift_disorder(omega, y)).matrix;
        worst = std::max(worst, max_abs(shifted - u * h * u.adjoint()));
        ++shifts;
      }
  }
  o.note(std::to_string(shifts) + " shifts, max error " + fmt("%.2e", worst));
  o.require(worst < 1e-12, "covariance error < 1e-12");
  return o;
}

Outcome determinism() {
  Outcome o;
  const char* text = R"({"model":{"family":"qwz","params":{"m":1,"W":1}},
                         "invariants":["even_chern","boundary_odd_chern"],
                         "sizes":[10,12],"seeds":3,"base_seed":7,"boundary":{"depth":6},
                         "sweep":{"parameter":"/model/params/m","values":[-1,1]}})";
  SweepConfig serial = SweepConfig::from_json(Json::parse(text));
  serial.record_runtime = false;
  const std::string a = rows_csv(run_sweep(serial, "acceptance"));
  const std::string b = rows_csv(run_sweep(serial, "acceptance"));
  SweepConfig parallel = serial;
  parallel.threads = 4;
  const std::string c = rows_csv(run_sweep(parallel, "acceptance"));
  o.note(std::to_string(a.size()) + " bytes");
  o.require(a == b, "re-run byte-identical");
  o.require(a == c, "serial equals parallel");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"quantization", quantization},
      {"winding", winding},
      {"index/trace agreement", index_agreement},
      {"x0 independence", offset_independence},
      {"bulk-boundary equality", bulk_boundary},
      {"step-limit triviality", step_limit},
      {"localization probe", localization_probe},
      {"transition detection", transition_detection},
      {"covariance identity", covariance},
      {"determinism", determinism},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  if (selected.empty())
    for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) selected.push_back(i);

  set_blas_threads(1);
  int failures = 0;
  for (int n : selected) {
    if (n < 1 || n > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "unknown criterion %d\n", n);
      return 2;
    }
    const auto& [name, run] = criteria[static_cast<std::size_t>(n - 1)];
    Outcome out;
    try {
      out = run();
    } catch (const std::exception& e) {
      out.pass = false;
      out.note(std::string("error: ") + e.what());
    }
    if (!out.pass) ++failures;
    std::printf("criterion %2d %-24s %s  (%s)\n", n, name.c_str(), out.pass ? "PASS" : "FAIL", out.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
