#include "topo/lattice.hpp"

#include "topo/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

namespace topo {

namespace {

constexpr double kCommensurateTol = 1e-9;

bool is_integer(double v) { return std::abs(v - std::round(v)) < kCommensurateTol; }

bool is_zero_displacement(const Site& y) {
  return std::all_of(y.begin(), y.end(), [](int c) { return c == 0; });
}

bool is_forward(const Site& y) {
  for (int c : y) {
    if (c != 0) return c > 0;
  }
  return true;
}

CMatrix or_zero(const CMatrix& m, int n) { return m.size() == 0 ? CMatrix::Zero(n, n) : m; }

// Adds the block M at (row, col) and, unless it sits on the diagonal, its
// Hermitian partner at (col, row).
void add_hermitian(CMatrix& h, std::size_t row, std::size_t col, int n, const CMatrix& m, bool onsite) {
  const auto r = static_cast<Eigen::Index>(row) * n;
  const auto c = static_cast<Eigen::Index>(col) * n;
  if (onsite) {
    h.block(r, r, n, n) += 0.5 * (m + m.adjoint());
  } else {
    h.block(r, c, n, n) += m;
    h.block(c, r, n, n) += m.adjoint();
  }
}

void check_disorder_geometry(const DisorderConfig& disorder, const FiniteGeometry& geometry) {
  if (disorder.values.empty()) return;
  if (!(disorder.geometry == geometry) || disorder.values.size() != geometry.num_sites())
    throw ConfigError("disorder configuration was sampled on a different geometry");
}

CMatrix assemble(const HoppingSpec& spec, const MagneticFlux& flux, const FiniteGeometry& geometry,
                 const DisorderConfig& disorder) {
  spec.validate();
  flux.validate();
  geometry.validate();
  if (spec.dimension != geometry.dim() || flux.dim() != geometry.dim())
    throw ConfigError("spec, flux and geometry dimensions differ");
  check_disorder_geometry(disorder, geometry);
  const int range = spec.range();
  for (int axis = 0; axis < geometry.dim(); ++axis) {
    if (geometry.periodic(axis) && 2 * range >= geometry.sides[static_cast<std::size_t>(axis)])
      throw ConfigError("hopping range " + std::to_string(range) + " too large for periodic side " +
                        std::to_string(geometry.sides[static_cast<std::size_t>(axis)]));
  }
  if (!flux.is_zero()) flux.check_commensurate(geometry);

  const int n = spec.fiber_dim;
  const std::size_t sites = geometry.num_sites();
  CMatrix h = CMatrix::Zero(static_cast<Eigen::Index>(sites) * n, static_cast<Eigen::Index>(sites) * n);
  const double w = spec.disorder_amplitude;
  for (std::size_t a = 0; a < sites; ++a) {
    const Site x = geometry.site(a);
    const double omega = disorder.at(a);
    for (const Hop& hop : spec.hops) {
      Site target = x;
      for (std::size_t i = 0; i < target.size(); ++i) target[i] += hop.displacement[i];
      const auto b = geometry.locate(target);
      if (!b) continue;
      CMatrix m = or_zero(hop.constant, n) + (omega * w) * or_zero(hop.disorder, n);
      const bool onsite = is_zero_displacement(hop.displacement);
      if (!onsite) m *= hop_phase(x, hop.displacement, flux);
      add_hermitian(h, a, *b, n, m, onsite);
    }
  }
  return h;
}

}  // namespace

// ---------------------------------------------------------------------------
// FiniteGeometry
// ---------------------------------------------------------------------------

FiniteGeometry FiniteGeometry::box(int dim, int side) {
  return {std::vector<int>(static_cast<std::size_t>(dim), side),
          std::vector<Boundary>(static_cast<std::size_t>(dim), Boundary::open), false};
}

FiniteGeometry FiniteGeometry::torus(int dim, int side) {
  return {std::vector<int>(static_cast<std::size_t>(dim), side),
          std::vector<Boundary>(static_cast<std::size_t>(dim), Boundary::periodic), false};
}

FiniteGeometry FiniteGeometry::slab(std::vector<int> edge_sides, int depth, Boundary edge) {
  FiniteGeometry g;
  g.boundary.assign(edge_sides.size(), edge);
  g.sides = std::move(edge_sides);
  g.sides.push_back(depth);
  g.boundary.push_back(Boundary::open);
  g.half_space = true;
  return g;
}

std::size_t FiniteGeometry::num_sites() const {
  std::size_t n = 1;
  for (int s : sides) n *= static_cast<std::size_t>(s);
  return n;
}

bool FiniteGeometry::all_periodic() const {
  return std::all_of(boundary.begin(), boundary.end(), [](Boundary b) { return b == Boundary::periodic; });
}

Site FiniteGeometry::site(std::size_t index) const {
  Site x(sides.size());
  for (std::size_t i = sides.size(); i-- > 0;) {
    const auto s = static_cast<std::size_t>(sides[i]);
    x[i] = static_cast<int>(index % s);
    index /= s;
  }
  return x;
}

std::size_t FiniteGeometry::index(const Site& x) const {
  std::size_t idx = 0;
  for (std::size_t i = 0; i < sides.size(); ++i) idx = idx * static_cast<std::size_t>(sides[i]) + static_cast<std::size_t>(x[i]);
  return idx;
}

std::optional<std::size_t> FiniteGeometry::locate(Site x) const {
  for (std::size_t i = 0; i < sides.size(); ++i) {
    const int s = sides[i];
    if (boundary[i] == Boundary::periodic) {
      x[i] = ((x[i] % s) + s) % s;
    } else if (x[i] < 0 || x[i] >= s) {
      return std::nullopt;
    }
  }
  return index(x);
}

int FiniteGeometry::displacement(int axis, int from, int to) const {
  int diff = to - from;
  if (periodic(axis)) {
    const int s = sides[static_cast<std::size_t>(axis)];
    diff = ((diff % s) + s) % s;
    if (2 * diff >= s) diff -= s;
  }
  return diff;
}

double FiniteGeometry::distance(std::size_t a, std::size_t b) const {
  const Site x = site(a);
  const Site y = site(b);
  double sq = 0.0;
  for (int i = 0; i < dim(); ++i) {
    const double d = displacement(i, x[static_cast<std::size_t>(i)], y[static_cast<std::size_t>(i)]);
    sq += d * d;
  }
  return std::sqrt(sq);
}

void FiniteGeometry::validate() const {
  if (sides.empty()) throw ConfigError("geometry needs at least one axis");
  if (sides.size() != boundary.size()) throw ConfigError("geometry: one boundary condition per axis required");
  for (int s : sides) {
    if (s < 1) throw ConfigError("geometry: side lengths must be >= 1");
  }
  if (half_space && boundary.back() != Boundary::open)
    throw ConfigError("half-space geometry requires the last axis to be open");
}

std::string FiniteGeometry::describe() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < sides.size(); ++i) {
    if (i) os << 'x';
    os << sides[i] << (boundary[i] == Boundary::periodic ? 'p' : 'o');
  }
  if (half_space) os << "/half";
  return os.str();
}

// ---------------------------------------------------------------------------
// HoppingSpec
// ---------------------------------------------------------------------------

int HoppingSpec::range() const {
  int r = 0;
  for (const Hop& hop : hops)
    for (int c : hop.displacement) r = std::max(r, std::abs(c));
  return r;
}

void HoppingSpec::validate() const {
  if (dimension < 1) throw ConfigError("spec '" + id + "': dimension must be positive");
  if (fiber_dim < 1) throw ConfigError("spec '" + id + "': fiber_dim must be positive");
  if (!(disorder_amplitude >= 0.0)) throw ConfigError("spec '" + id + "': disorder_amplitude must be >= 0");
  std::set<Site> seen;
  for (const Hop& hop : hops) {
    if (static_cast<int>(hop.displacement.size()) != dimension)
      throw ConfigError("spec '" + id + "': hop displacement has wrong dimension");
    if (!is_forward(hop.displacement))
      throw ConfigError("spec '" + id + "': store only displacements whose first nonzero coordinate is positive");
    if (!seen.insert(hop.displacement).second) throw ConfigError("spec '" + id + "': duplicate hop displacement");
    for (const CMatrix* m : {&hop.constant, &hop.disorder}) {
      if (m->size() != 0 && (m->rows() != fiber_dim || m->cols() != fiber_dim))
        throw ConfigError("spec '" + id + "': hop matrices must be fiber_dim x fiber_dim");
    }
  }
  if (chiral_symmetry) {
    const CMatrix& j = *chiral_symmetry;
    if (j.rows() != fiber_dim || j.cols() != fiber_dim) throw ConfigError("spec '" + id + "': chiral J has wrong size");
    constexpr double tol = 1e-12;
    if (max_abs(j - j.adjoint()) > tol) throw ConfigError("spec '" + id + "': chiral J is not Hermitian");
    if (max_abs(j * j - CMatrix::Identity(fiber_dim, fiber_dim)) > tol)
      throw ConfigError("spec '" + id + "': chiral J does not square to the identity");
    for (const Hop& hop : hops) {
      for (const CMatrix* m : {&hop.constant, &hop.disorder}) {
        if (m->size() != 0 && max_abs(j * (*m) * j + *m) > tol)
          throw ConfigError("spec '" + id + "': a hop breaks the chiral symmetry");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// MagneticFlux
// ---------------------------------------------------------------------------

MagneticFlux MagneticFlux::none(int dim) { return {RMatrix::Zero(dim, dim)}; }

MagneticFlux MagneticFlux::planar(int dim, int i, int j, double flux) {
  MagneticFlux f = none(dim);
  f.phi(i, j) = flux;
  f.phi(j, i) = -flux;
  return f;
}

bool MagneticFlux::is_zero() const { return phi.size() == 0 || phi.cwiseAbs().maxCoeff() == 0.0; }

double MagneticFlux::wedge(const Site& x, const Site& y) const {
  double w = 0.0;
  for (int i = 0; i < dim(); ++i)
    for (int j = i + 1; j < dim(); ++j)
      w += phi(i, j) * (x[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(j)] -
                        x[static_cast<std::size_t>(j)] * y[static_cast<std::size_t>(i)]);
  return w;
}

void MagneticFlux::validate() const {
  if (phi.rows() != phi.cols()) throw ConfigError("flux matrix must be square");
  if (phi.size() != 0 && (phi + phi.transpose()).cwiseAbs().maxCoeff() > 1e-14)
    throw ConfigError("flux matrix must be antisymmetric");
}

void MagneticFlux::check_commensurate(const FiniteGeometry& geometry) const {
  for (int i = 0; i < dim(); ++i) {
    for (int j = i + 1; j < dim(); ++j) {
      const double f = phi(i, j);
      if (f == 0.0) continue;
      const double li = geometry.sides[static_cast<std::size_t>(i)];
      const double lj = geometry.sides[static_cast<std::size_t>(j)];
      const bool ok = (!geometry.periodic(i) || is_integer(f * li)) && (!geometry.periodic(j) || is_integer(f * lj));
      if (!ok) {
        std::ostringstream os;
        os << "flux " << f << " through plane (" << i << "," << j << ") is incommensurate with "
           << geometry.describe();
        throw ConfigError(os.str());
      }
    }
  }
}

Complex translation_phase(const Site& x, const Site& y, const MagneticFlux& flux) {
  return std::polar(1.0, kPi * flux.wedge(x, y));
}

Complex hop_phase(const Site& x, const Site& y, const MagneticFlux& flux) {
  double a = 0.0;
  for (int i = 0; i < flux.dim(); ++i)
    for (int j = i + 1; j < flux.dim(); ++j) {
      const auto ui = static_cast<std::size_t>(i);
      const auto uj = static_cast<std::size_t>(j);
      a += flux.phi(i, j) * (2.0 * y[uj] * x[ui] + static_cast<double>(y[ui]) * y[uj]);
    }
  return std::polar(1.0, -kPi * a);
}

CMatrix magnetic_translation(const FiniteGeometry& geometry, int fiber_dim, const MagneticFlux& flux, const Site& y) {
  geometry.validate();
  if (!geometry.all_periodic()) throw ConfigError("magnetic translations need a torus");
  flux.check_commensurate(geometry);
  const std::size_t sites = geometry.num_sites();
  const Eigen::Index n = fiber_dim;
  CMatrix u = CMatrix::Zero(static_cast<Eigen::Index>(sites) * n, static_cast<Eigen::Index>(sites) * n);
  for (std::size_t a = 0; a < sites; ++a) {
    const Site z = geometry.site(a);
    Site target = z;
    double angle = 0.0;
    for (int i = 0; i < flux.dim(); ++i) {
      target[static_cast<std::size_t>(i)] -= y[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < flux.dim(); ++j) {
        const auto ui = static_cast<std::size_t>(i);
        const auto uj = static_cast<std::size_t>(j);
        angle += flux.phi(i, j) * (static_cast<double>(y[ui]) * y[uj] - 2.0 * y[ui] * z[uj]);
      }
    }
    const auto b = static_cast<Eigen::Index>(*geometry.locate(target));
    const Complex phase = std::polar(1.0, kPi * angle);
    for (Eigen::Index k = 0; k < n; ++k) u(b * n + k, static_cast<Eigen::Index>(a) * n + k) = phase;
  }
  return u;
}

// ---------------------------------------------------------------------------
// Disorder
// ---------------------------------------------------------------------------

DisorderConfig sample_disorder(std::uint64_t seed, const FiniteGeometry& geometry, std::optional<int> strip_halfwidth) {
  geometry.validate();
  if (strip_halfwidth) {
    if (!geometry.half_space) throw ConfigError("strip_halfwidth requires a half-space geometry");
    if (*strip_halfwidth < 0) throw ConfigError("strip_halfwidth must be >= 0");
  }
  DisorderConfig cfg;
  cfg.seed = seed;
  cfg.geometry = geometry;
  cfg.strip_halfwidth = strip_halfwidth;
  const std::size_t sites = geometry.num_sites();
  cfg.values.resize(sites);
  std::vector<std::uint32_t> key;
  for (std::size_t a = 0; a < sites; ++a) {
    const Site x = geometry.site(a);
    if (strip_halfwidth && x.back() > *strip_halfwidth) {
      cfg.values[a] = 0.0;
      continue;
    }
    key.assign({static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                static_cast<std::uint32_t>(x.size())});
    for (int c : x) key.push_back(static_cast<std::uint32_t>(c));
    std::seed_seq seq(key.begin(), key.end());
    std::mt19937_64 engine(seq);
    cfg.values[a] = static_cast<double>(engine() >> 11) * 0x1.0p-53 - 0.5;
  }
  return cfg;
}

DisorderConfig shift_disorder(const DisorderConfig& disorder, const Site& y) {
  const FiniteGeometry& g = disorder.geometry;
  if (!g.all_periodic()) throw ConfigError("disorder shifts are defined on tori only");
  DisorderConfig out = disorder;
  for (std::size_t a = 0; a < g.num_sites(); ++a) {
    Site x = g.site(a);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
    out.values[a] = disorder.values[*g.locate(x)];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

std::string FiniteModel::id() const {
  std::ostringstream os;
  os << provenance.spec_id << '/' << provenance.kind << '/' << geometry.describe() << "/seed=" << provenance.seed;
  return os.str();
}

int BoundaryTerm::reach() const {
  int r = 0;
  for (const LayeredHop& t : terms) r = std::max({r, t.from_layer + 1, t.to_layer + 1});
  return r;
}

BoundaryTerm BoundaryTerm::surface_potential(int dim, int fiber_dim, double shift) {
  BoundaryTerm b;
  b.terms.push_back({0, 0, Site(static_cast<std::size_t>(dim - 1), 0),
                     shift * CMatrix::Identity(fiber_dim, fiber_dim), CMatrix()});
  return b;
}

FiniteModel build_bulk(const HoppingSpec& spec, const MagneticFlux& flux, const FiniteGeometry& geometry,
                       const DisorderConfig& disorder) {
  FiniteModel model;
  model.matrix = assemble(spec, flux, geometry, disorder);
  model.geometry = geometry;
  model.fiber_dim = spec.fiber_dim;
  model.provenance = {spec.id, disorder.seed, flux.phi, "bulk"};
  return model;
}

FiniteModel build_halfspace(const HoppingSpec& spec, const BoundaryTerm& boundary, const MagneticFlux& flux,
                            const FiniteGeometry& geometry, const DisorderConfig& disorder) {
  geometry.validate();
  if (!geometry.half_space) throw ConfigError("build_halfspace needs a half-space geometry");
  FiniteModel model;
  model.matrix = assemble(spec, flux, geometry, disorder);
  model.geometry = geometry;
  model.fiber_dim = spec.fiber_dim;
  model.provenance = {spec.id, disorder.seed, flux.phi, "halfspace"};

  const int depth = geometry.depth();
  const int n = spec.fiber_dim;
  const int d = geometry.dim();
  for (const LayeredHop& t : boundary.terms) {
    if (t.from_layer < 0 || t.to_layer < 0) throw ConfigError("boundary term layers must be >= 0");
    if (t.from_layer >= depth || t.to_layer >= depth)
      throw ConfigError("boundary term reaches layer " + std::to_string(std::max(t.from_layer, t.to_layer)) +
                        " beyond slab depth " + std::to_string(depth));
    if (static_cast<int>(t.edge_displacement.size()) != d - 1)
      throw ConfigError("boundary term edge displacement has wrong dimension");
  }
  for (std::size_t a = 0; a < geometry.num_sites(); ++a) {
    const Site x = geometry.site(a);
    const double omega = disorder.at(a);
    for (const LayeredHop& t : boundary.terms) {
      if (x.back() != t.from_layer) continue;
      Site hop = t.edge_displacement;
      hop.push_back(t.to_layer - t.from_layer);
      Site target = x;
      for (std::size_t i = 0; i < target.size(); ++i) target[i] += hop[i];
      const auto b = geometry.locate(target);
      if (!b) continue;
      CMatrix m = or_zero(t.constant, n) + (omega * spec.disorder_amplitude) * or_zero(t.disorder, n);
      const bool onsite = is_zero_displacement(hop);
      if (!onsite) m *= hop_phase(x, hop, flux);
      add_hermitian(model.matrix, a, *b, n, m, onsite);
    }
  }
  return model;
}

CMatrix chiral_operator(const HoppingSpec& spec, std::size_t num_sites) {
  if (!spec.chiral_symmetry) throw PreconditionError("spec '" + spec.id + "' has no chiral symmetry");
  const CMatrix& j = *spec.chiral_symmetry;
  const Eigen::Index n = j.rows();
  CMatrix out = CMatrix::Zero(static_cast<Eigen::Index>(num_sites) * n, static_cast<Eigen::Index>(num_sites) * n);
  for (Eigen::Index s = 0; s < static_cast<Eigen::Index>(num_sites); ++s) out.block(s * n, s * n, n, n) = j;
  return out;
}

}  // namespace topo
