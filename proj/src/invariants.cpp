#include "topo/invariants.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include <fftw3.h>

#include "topo/bloch.hpp"
#include "topo/models.hpp"

namespace topo {

namespace {

constexpr double kImagTol = 1e-8;
constexpr double kUnconverged = 0.1;

struct Permutation {
  std::vector<int> axes;
  double sign;
};

std::vector<Permutation> permutations(int d) {
  std::vector<int> p(static_cast<std::size_t>(d));
  std::iota(p.begin(), p.end(), 0);
  std::vector<Permutation> out;
  do {
    int inversions = 0;
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j) inversions += p[static_cast<std::size_t>(i)] > p[static_cast<std::size_t>(j)];
    out.push_back({p, inversions % 2 ? -1.0 : 1.0});
  } while (std::next_permutation(p.begin(), p.end()));
  return out;
}

/// Delta(a, b) = x_b - x_a along `axis` for every pair of matrix indices,
/// expanded over the fiber.
RMatrix separation(const FiniteGeometry& g, int fiber_dim, int axis) {
  const auto sites = static_cast<Eigen::Index>(g.num_sites());
  std::vector<int> coord(static_cast<std::size_t>(sites));
  for (Eigen::Index s = 0; s < sites; ++s) coord[static_cast<std::size_t>(s)] = g.site(static_cast<std::size_t>(s))[static_cast<std::size_t>(axis)];
  const Eigen::Index n = sites * fiber_dim;
  RMatrix delta(n, n);
  for (Eigen::Index b = 0; b < n; ++b) {
    const int xb = coord[static_cast<std::size_t>(b / fiber_dim)];
    for (Eigen::Index a = 0; a < n; ++a) delta(a, b) = g.displacement(axis, coord[static_cast<std::size_t>(a / fiber_dim)], xb);
  }
  return delta;
}

std::vector<Eigen::Index> expand(const std::vector<std::size_t>& sites, int fiber_dim) {
  std::vector<Eigen::Index> cols;
  cols.reserve(sites.size() * static_cast<std::size_t>(fiber_dim));
  for (std::size_t s : sites)
    for (int f = 0; f < fiber_dim; ++f) cols.push_back(static_cast<Eigen::Index>(s) * fiber_dim + f);
  return cols;
}

CMatrix unit_columns(Eigen::Index n, const std::vector<Eigen::Index>& cols) {
  CMatrix z = CMatrix::Zero(n, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) z(cols[c], static_cast<Eigen::Index>(c)) = 1.0;
  return z;
}

/// Per region column: sum over permutations of sign * <j| prefix K_{p1} ... K_{pd} |j>.
CVector permutation_trace(int d, Eigen::Index n, const std::vector<Eigen::Index>& cols,
                          const std::function<CMatrix(int, const CMatrix&)>& k_apply,
                          const std::function<CMatrix(const CMatrix&)>& prefix) {
  const CMatrix start = unit_columns(n, cols);
  CVector acc = CVector::Zero(static_cast<Eigen::Index>(cols.size()));
  for (const Permutation& p : permutations(d)) {
    CMatrix z = start;
    for (int k = d - 1; k >= 0; --k) z = k_apply(p.axes[static_cast<std::size_t>(k)], z);
    if (prefix) z = prefix(z);
    for (std::size_t c = 0; c < cols.size(); ++c) acc(static_cast<Eigen::Index>(c)) += p.sign * z(cols[c], static_cast<Eigen::Index>(c));
  }
  return acc;
}

void check_margin(const FiniteGeometry& g, const std::vector<std::size_t>& region) {
  if (region.empty()) throw ConfigError("trace region is empty");
  for (std::size_t s : region) {
    if (s >= g.num_sites()) throw ConfigError("trace region site outside the sample");
    const Site x = g.site(s);
    for (int i = 0; i < g.dim(); ++i) {
      const int c = x[static_cast<std::size_t>(i)];
      if (!g.periodic(i) && (c == 0 || c == g.sides[static_cast<std::size_t>(i)] - 1))
        throw ConfigError("trace region touches the sample edge; increase the margin");
    }
  }
}

std::string describe_sites(const std::vector<std::size_t>& region) {
  return std::to_string(region.size()) + " sites";
}

/// Averages per-site sums, applies the constant and checks the residue.
InvariantResult finish(std::string kind, int dim, const CVector& per_column, int fiber_dim, std::size_t sites,
                       Complex lambda, double normalisation) {
  InvariantResult r;
  r.kind = std::move(kind);
  r.dim = dim;
  r.lambda = lambda;
  Complex total = 0.0;
  r.site_values.resize(sites);
  for (std::size_t s = 0; s < sites; ++s) {
    Complex site = 0.0;
    for (int f = 0; f < fiber_dim; ++f) site += per_column(static_cast<Eigen::Index>(s) * fiber_dim + f);
    total += site;
    r.site_values[s] = (lambda * site).real();
  }
  const Complex value = lambda * total / normalisation;
  r.imag_residue = std::abs(value.imag());
  if (r.imag_residue > kImagTol)
    throw NumericalError(r.kind + ": imaginary residue " + std::to_string(r.imag_residue) + " exceeds tolerance");
  r.set_raw(value.real());
  return r;
}

/// Dirac phase data for the Fedosov traces.
struct DiracFrame {
  std::vector<std::vector<double>> position;  // X + x0 per site
  std::vector<std::size_t> ball;              // sites with |X + x0| <= radius
};

DiracFrame dirac_frame(const FiniteGeometry& g, const IndexOptions& opt) {
  const int d = g.dim();
  if (static_cast<int>(opt.x0.size()) != d) throw ConfigError("x0 must have one entry per axis");
  for (double v : opt.x0) {
    if (!(v > 0.0 && v < 1.0)) throw ConfigError("x0 must lie in the open unit cube");
  }
  for (int i = 0; i < d; ++i) {
    const int l = g.sides[static_cast<std::size_t>(i)];
    const int c = l / 2;
    const double x0 = opt.x0[static_cast<std::size_t>(i)];
    const double room = g.periodic(i) ? 0.5 * l - 1.0 : std::min(c - x0, (l - 1 - c) + x0);
    if (opt.radius > room)
      throw ConfigError("truncation radius " + std::to_string(opt.radius) + " does not fit into the sample");
  }
  DiracFrame f;
  const std::size_t sites = g.num_sites();
  f.position.resize(sites);
  for (std::size_t s = 0; s < sites; ++s) {
    const Site x = g.site(s);
    double r2 = 0.0;
    f.position[s].resize(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      const double v = g.displacement(i, g.sides[ui] / 2, x[ui]) + opt.x0[ui];
      f.position[s][ui] = v;
      r2 += v * v;
    }
    if (r2 == 0.0) throw NumericalError("Dirac phase evaluated at its singularity");
    if (std::sqrt(r2) <= opt.radius) f.ball.push_back(s);
  }
  return f;
}

CMatrix dirac_phase(const CliffordRep& rep, const std::vector<double>& pos) {
  double r2 = 0.0;
  for (double v : pos) r2 += v * v;
  const double r = std::sqrt(r2);
  CMatrix dm = CMatrix::Zero(rep.size(), rep.size());
  for (std::size_t i = 0; i < pos.size(); ++i) dm += (pos[i] / r) * rep.gamma[i];
  return dm;
}

/// Extended vectors on C^n (x) C^c are stored as n*c rows, component slowest.
CMatrix apply_big(const LinearMap& m, bool adjoint, const CMatrix& block, int c) {
  const Eigen::Index n = m.size();
  Eigen::Map<const CMatrix> flat(block.data(), n, c * block.cols());
  CMatrix out = adjoint ? m.apply_adjoint(flat) : m.apply(flat);
  return Eigen::Map<CMatrix>(out.data(), n * c, block.cols());
}

/// Site-diagonal operator: on every (site, fiber) slot the c components are
/// multiplied by ops[site] (c_out x c_in).
class LocalOp {
 public:
  LocalOp(const std::vector<CMatrix>& ops, int fiber_dim)
      : c_out_(ops.front().rows()), c_in_(ops.front().cols()),
        n_(static_cast<Eigen::Index>(ops.size()) * fiber_dim) {
    weights_.assign(static_cast<std::size_t>(c_out_ * c_in_), CVector::Zero(n_));
    for (Eigen::Index row = 0; row < n_; ++row) {
      const CMatrix& op = ops[static_cast<std::size_t>(row / fiber_dim)];
      for (Eigen::Index o = 0; o < c_out_; ++o)
        for (Eigen::Index i = 0; i < c_in_; ++i) weights_[static_cast<std::size_t>(o * c_in_ + i)](row) = op(o, i);
    }
  }

  CMatrix operator()(const CMatrix& block) const {
    CMatrix out = CMatrix::Zero(n_ * c_out_, block.cols());
    for (Eigen::Index o = 0; o < c_out_; ++o)
      for (Eigen::Index i = 0; i < c_in_; ++i) {
        const CVector& w = weights_[static_cast<std::size_t>(o * c_in_ + i)];
        if (w.isZero(0.0)) continue;
        out.middleRows(o * n_, n_).noalias() += w.asDiagonal() * block.middleRows(i * n_, n_);
      }
    return out;
  }

 private:
  Eigen::Index c_out_, c_in_, n_;
  std::vector<CVector> weights_;
};

using BlockOp = std::function<CMatrix(const CMatrix&)>;

/// Start vectors of the restricted trace. Column j is the unit vector at
/// `rows[j]`, or, with a local basis, sum_k values[j][k] |rows[j][k]>.
struct StartVectors {
  Eigen::Index dim = 0;
  std::vector<std::vector<Eigen::Index>> rows;
  std::vector<std::vector<Complex>> values;

  std::size_t size() const { return rows.size(); }
  CMatrix block(std::size_t begin, std::size_t end) const {
    CMatrix z = CMatrix::Zero(dim, static_cast<Eigen::Index>(end - begin));
    for (std::size_t j = begin; j < end; ++j)
      for (std::size_t k = 0; k < rows[j].size(); ++k) z(rows[j][k], static_cast<Eigen::Index>(j - begin)) = values[j][k];
    return z;
  }
};

/// Tr_R (Q - Q W^dagger Q W Q)^n - Tr_R (Q - Q W Q W^dagger Q)^n, the trace
/// taken over the start vectors. Both operators are Hermitian, so
/// <s|A^n|s> = <A^{n/2} s|A^{n - n/2} s> halves the number of applications.
Complex fedosov_trace(const BlockOp& q, const BlockOp& w, const BlockOp& wadj, const StartVectors& starts, int order,
                      Eigen::Index chunk) {
  auto a_op = [&](const CMatrix& v) {
    const CMatrix qv = q(v);
    return CMatrix(qv - q(wadj(q(w(qv)))));
  };
  auto b_op = [&](const CMatrix& v) {
    const CMatrix qv = q(v);
    return CMatrix(qv - q(w(q(wadj(qv)))));
  };
  auto half_trace = [&](const std::function<CMatrix(const CMatrix&)>& op, const CMatrix& s) {
    CMatrix lo = s;
    for (int k = 0; k < order / 2; ++k) lo = op(lo);
    CMatrix hi = order % 2 ? op(lo) : lo;
    return (lo.conjugate().cwiseProduct(hi)).sum();
  };
  Complex total = 0.0;
  for (std::size_t begin = 0; begin < starts.size(); begin += static_cast<std::size_t>(chunk)) {
    const std::size_t end = std::min(starts.size(), begin + static_cast<std::size_t>(chunk));
    const CMatrix s = starts.block(begin, end);
    total += half_trace(a_op, s) - half_trace(b_op, s);
  }
  return total;
}

StartVectors unit_starts(const std::vector<std::size_t>& ball, int fiber_dim, Eigen::Index n, int c) {
  StartVectors out;
  out.dim = n * c;
  for (int comp = 0; comp < c; ++comp)
    for (Eigen::Index col : expand(ball, fiber_dim)) {
      out.rows.push_back({comp * n + col});
      out.values.push_back({1.0});
    }
  return out;
}

/// Orthonormal basis of the range of the site-local projection e[site],
/// lifted to the extended layout. The complement contributes nothing to a
/// trace of Q M Q.
StartVectors range_starts(const std::vector<std::size_t>& ball, const std::vector<CMatrix>& e, int fiber_dim,
                          Eigen::Index n) {
  StartVectors out;
  const Eigen::Index c = e.front().rows();
  out.dim = n * c;
  for (std::size_t site : ball) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(e[site]);
    for (Eigen::Index k = 0; k < c; ++k) {
      if (es.eigenvalues()(k) < 0.5) continue;
      for (int f = 0; f < fiber_dim; ++f) {
        const Eigen::Index row = static_cast<Eigen::Index>(site) * fiber_dim + f;
        std::vector<Eigen::Index> rows;
        std::vector<Complex> values;
        for (Eigen::Index comp = 0; comp < c; ++comp) {
          rows.push_back(comp * n + row);
          values.push_back(es.eigenvectors()(comp, k));
        }
        out.rows.push_back(std::move(rows));
        out.values.push_back(std::move(values));
      }
    }
  }
  return out;
}

InvariantResult index_result(std::string kind, int d, Complex value, const DiracFrame& frame, const FiniteGeometry& g,
                             const IndexOptions& opt) {
  InvariantResult r;
  r.kind = std::move(kind);
  r.dim = d;
  r.lambda = 1.0;
  r.imag_residue = std::abs(value.imag());
  r.geometry = g.describe();
  std::ostringstream os;
  os << "ball r=" << opt.radius << " (" << frame.ball.size() << " sites) x0=(";
  for (std::size_t i = 0; i < opt.x0.size(); ++i) os << (i ? "," : "") << opt.x0[i];
  os << ")";
  r.region = os.str();
  r.set_raw(value.real());
  r.unconverged = r.deviation > kUnconverged;
  return r;
}

std::vector<Eigen::Index> slab_columns(const FiniteGeometry& slab, int fiber_dim, const EdgeRegion& edge,
                                       std::vector<int>* layer_of_site) {
  const int near = slab.depth() / 2;
  if (near < 1) throw ConfigError("slab too shallow for a boundary invariant");
  std::vector<std::size_t> sites;
  for (const Site& cell : edge.cells) {
    if (static_cast<int>(cell.size()) != slab.dim() - 1) throw ConfigError("edge cell has wrong dimension");
    for (int layer = 0; layer < near; ++layer) {
      Site x = cell;
      x.push_back(layer);
      const auto s = slab.locate(x);
      if (!s) throw ConfigError("edge cell outside the slab");
      sites.push_back(*s);
      layer_of_site->push_back(layer);
    }
  }
  return expand(sites, fiber_dim);
}

/// Orients, normalises per edge cell and estimates the depth-truncation tail.
InvariantResult finish_boundary(std::string kind, int dim, const CVector& per_column, const std::vector<int>& layer,
                                int fiber_dim, const FiniteGeometry& slab, const EdgeRegion& edge, Complex lambda) {
  const int near = slab.depth() / 2;
  std::vector<Complex> per_layer(static_cast<std::size_t>(near), 0.0);
  for (Eigen::Index c = 0; c < per_column.size(); ++c)
    per_layer[static_cast<std::size_t>(layer[static_cast<std::size_t>(c / fiber_dim)])] += per_column(c);
  const double cells = static_cast<double>(edge.cells.size());
  Complex total = 0.0;
  Complex tail = 0.0;
  for (int l = 0; l < near; ++l) {
    total += per_layer[static_cast<std::size_t>(l)];
    if (l >= near - 4) tail += per_layer[static_cast<std::size_t>(l)];
  }
  const double sign = boundary_orientation(slab.dim());
  const Complex value = sign * lambda * total / cells;
  InvariantResult r;
  r.kind = std::move(kind);
  r.dim = dim;
  r.lambda = lambda;
  r.imag_residue = std::abs(value.imag());
  if (r.imag_residue > kImagTol)
    throw NumericalError(r.kind + ": imaginary residue " + std::to_string(r.imag_residue) + " exceeds tolerance");
  r.geometry = slab.describe();
  r.region = std::to_string(edge.cells.size()) + " edge cells x " + std::to_string(near) + " layers";
  for (const Complex& v : per_layer) r.site_values.push_back((sign * lambda * v / cells).real());
  r.set_raw(value.real());
  r.tail = std::abs(lambda * tail / cells);
  r.unconverged = r.tail > 1e-3 * std::max(1.0, std::abs(r.raw)) || r.deviation > kUnconverged;
  return r;
}

void check_slab(const FiniteGeometry& slab, const CMatrix& m, int fiber_dim) {
  slab.validate();
  if (!slab.half_space) throw ConfigError("boundary invariants need a half-space slab");
  if (m.rows() != static_cast<Eigen::Index>(slab.num_sites()) * fiber_dim || m.rows() != m.cols())
    throw ConfigError("operator does not match the slab geometry");
}

}  // namespace

// ---------------------------------------------------------------------------

void InvariantResult::set_raw(double v) {
  raw = v;
  nearest = std::lround(v);
  deviation = std::abs(v - static_cast<double>(nearest));
  mean = v;
  if (values.empty()) values.push_back(v);
}

double boundary_orientation(int bulk_dim) {
  if (bulk_dim < 1) throw PreconditionError("boundary_orientation: d must be positive");
  return bulk_dim >= 3 ? 1.0 : -1.0;
}

Complex chern_constant(int d) {
  if (d < 1) throw PreconditionError("chern_constant: d must be positive");
  const Complex I(0.0, 1.0);
  if (d % 2 == 0) {
    double fact = 1.0;
    for (int k = 2; k <= d / 2; ++k) fact *= k;
    return std::pow(2.0 * kPi * I, d / 2) / fact;
  }
  double dfact = 1.0;
  for (int k = d; k > 1; k -= 2) dfact *= k;
  return I * std::pow(I * kPi, (d - 1) / 2) / dfact;
}

CliffordRep CliffordRep::standard(int d) {
  CliffordRep rep;
  rep.dim = d;
  switch (d) {
    case 1:
      rep.gamma = {-CMatrix::Identity(1, 1)};
      break;
    case 2:
      rep.gamma = {pauli(1), pauli(2)};
      rep.grading = pauli(3);
      break;
    case 3:
      rep.gamma = {pauli(1), pauli(2), pauli(3)};
      break;
    case 4:
      rep.gamma = {kron(pauli(1), pauli(1)), kron(pauli(1), pauli(2)), kron(pauli(1), pauli(3)), kron(pauli(2), pauli(0))};
      rep.grading = kron(pauli(3), pauli(0));
      break;
    default:
      throw ConfigError("Clifford representations are provided for d = 1..4");
  }
  rep.validate();
  return rep;
}

void CliffordRep::validate() const {
  if (static_cast<int>(gamma.size()) != dim) throw ConfigError("Clifford rep needs d generators");
  const int n = size();
  const CMatrix id = CMatrix::Identity(n, n);
  for (int i = 0; i < dim; ++i) {
    const CMatrix& gi = gamma[static_cast<std::size_t>(i)];
    if (max_abs(gi - gi.adjoint()) > 1e-14) throw ConfigError("Clifford generators must be Hermitian");
    for (int j = 0; j < dim; ++j) {
      const CMatrix& gj = gamma[static_cast<std::size_t>(j)];
      if (max_abs(gi * gj + gj * gi - (i == j ? 2.0 : 0.0) * id) > 1e-14)
        throw ConfigError("Clifford relations violated");
    }
    if (dim % 2 == 0 && max_abs(grading * gi + gi * grading) > 1e-14)
      throw ConfigError("grading must anticommute with the generators");
  }
  if (dim % 2 == 0 && (max_abs(grading * grading - id) > 1e-14 || max_abs(grading - grading.adjoint()) > 1e-14))
    throw ConfigError("grading must be a Hermitian involution");
}

std::vector<std::size_t> central_region(const FiniteGeometry& g, int margin, bool all_axes) {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < g.num_sites(); ++s) {
    const Site x = g.site(s);
    bool inside = true;
    for (int i = 0; i < g.dim() && inside; ++i) {
      if (g.periodic(i) && !all_axes) continue;
      const int c = x[static_cast<std::size_t>(i)];
      inside = c >= margin && c < g.sides[static_cast<std::size_t>(i)] - margin;
    }
    if (inside) out.push_back(s);
  }
  return out;
}

InvariantResult even_chern(const CMatrix& p, const FiniteGeometry& g, int fiber_dim,
                           const std::vector<std::size_t>& region) {
  const int d = g.dim();
  if (d % 2 != 0) throw PreconditionError("even_chern needs an even dimension, got d = " + std::to_string(d));
  if (p.rows() != static_cast<Eigen::Index>(g.num_sites()) * fiber_dim || p.rows() != p.cols())
    throw ConfigError("projection does not match the geometry");
  check_margin(g, region);
  std::vector<CMatrix> k(static_cast<std::size_t>(d));
  const Complex I(0.0, 1.0);
  for (int i = 0; i < d; ++i) {
    // i [X_i, P]_{ab} = i (x_a - x_b) P_ab
    k[static_cast<std::size_t>(i)] = (-I) * p.cwiseProduct(separation(g, fiber_dim, i).cast<Complex>());
  }
  const auto cols = expand(region, fiber_dim);
  const CVector per = permutation_trace(
      d, p.rows(), cols, [&](int axis, const CMatrix& z) { return CMatrix(k[static_cast<std::size_t>(axis)] * z); },
      [&](const CMatrix& z) { return CMatrix(p * z); });
  InvariantResult r = finish("even_chern", d, per, fiber_dim, region.size(), chern_constant(d),
                             static_cast<double>(region.size()));
  r.geometry = g.describe();
  r.region = describe_sites(region);
  return r;
}

InvariantResult odd_chern(const CMatrix& u, const FiniteGeometry& g, int fiber_dim,
                          const std::vector<std::size_t>& region) {
  const int d = g.dim();
  if (d % 2 != 1) throw PreconditionError("odd_chern needs an odd dimension, got d = " + std::to_string(d));
  if (u.rows() != static_cast<Eigen::Index>(g.num_sites()) * fiber_dim || u.rows() != u.cols())
    throw ConfigError("unitary does not match the geometry");
  check_margin(g, region);
  const Complex I(0.0, 1.0);
  std::vector<CMatrix> comm(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) {
    // [U, X_i]_{ab} = U_ab (x_b - x_a)
    comm[static_cast<std::size_t>(i)] = u.cwiseProduct(separation(g, fiber_dim, i).cast<Complex>());
  }
  const CMatrix uadj = u.adjoint();
  const auto cols = expand(region, fiber_dim);
  const CVector per = permutation_trace(
      d, u.rows(), cols,
      [&](int axis, const CMatrix& z) { return CMatrix(I * (uadj * (comm[static_cast<std::size_t>(axis)] * z))); },
      nullptr);
  InvariantResult r = finish("odd_chern", d, per, fiber_dim, region.size(), chern_constant(d),
                             static_cast<double>(region.size()));
  r.geometry = g.describe();
  r.region = describe_sites(region);
  return r;
}

InvariantResult fredholm_index_projection(const LinearMap& p, const FiniteGeometry& g, int fiber_dim,
                                          const CliffordRep& rep, const IndexOptions& opt) {
  const int d = g.dim();
  if (d % 2 != 0) throw PreconditionError("fredholm_index_projection needs an even dimension");
  if (rep.dim != d) throw ConfigError("Clifford representation has the wrong dimension");
  if (p.size() != static_cast<Eigen::Index>(g.num_sites()) * fiber_dim)
    throw ConfigError("projection does not match the geometry");
  const int order = opt.order > 0 ? opt.order : d / 2 + 1;
  if (2 * order <= d) throw ConfigError("Fedosov order must exceed d/2");
  const DiracFrame frame = dirac_frame(g, opt);

  // Basis in which the grading is diag(+1, -1); u is the (-, +) block.
  const EigenSystem grading = hermitian_eigensystem(rep.grading);
  const int h = rep.size() / 2;
  const CMatrix plus = grading.vectors.rightCols(h);
  const CMatrix minus = grading.vectors.leftCols(h);
  std::vector<CMatrix> u(frame.position.size());
  std::vector<CMatrix> uadj(frame.position.size());
  for (std::size_t s = 0; s < u.size(); ++s) {
    u[s] = minus.adjoint() * dirac_phase(rep, frame.position[s]) * plus;
    uadj[s] = u[s].adjoint();
  }
  const Eigen::Index n = p.size();
  const BlockOp q = [&](const CMatrix& v) { return apply_big(p, false, v, h); };
  const LocalOp u_op(u, fiber_dim), uadj_op(uadj, fiber_dim);
  const BlockOp w = [&](const CMatrix& v) { return u_op(v); };
  const BlockOp wadj = [&](const CMatrix& v) { return uadj_op(v); };
  const Complex value = fedosov_trace(q, w, wadj, unit_starts(frame.ball, fiber_dim, n, h), order, opt.chunk);
  return index_result("fredholm_projection", d, value, frame, g, opt);
}

InvariantResult fredholm_index_unitary(const LinearMap& u, const FiniteGeometry& g, int fiber_dim,
                                       const CliffordRep& rep, const IndexOptions& opt) {
  const int d = g.dim();
  if (d % 2 != 1) throw PreconditionError("fredholm_index_unitary needs an odd dimension");
  if (rep.dim != d) throw ConfigError("Clifford representation has the wrong dimension");
  if (u.size() != static_cast<Eigen::Index>(g.num_sites()) * fiber_dim)
    throw ConfigError("unitary does not match the geometry");
  const int order = opt.order > 0 ? opt.order : d / 2 + 1;
  if (2 * order <= d) throw ConfigError("Fedosov order must exceed d/2");
  const DiracFrame frame = dirac_frame(g, opt);
  const int c = rep.size();
  std::vector<CMatrix> e(frame.position.size());
  for (std::size_t s = 0; s < e.size(); ++s)
    e[s] = 0.5 * (CMatrix::Identity(c, c) + dirac_phase(rep, frame.position[s]));
  const Eigen::Index n = u.size();
  const LocalOp e_op(e, fiber_dim);
  const BlockOp q = [&](const CMatrix& v) { return e_op(v); };
  const BlockOp w = [&](const CMatrix& v) { return apply_big(u, false, v, c); };
  const BlockOp wadj = [&](const CMatrix& v) { return apply_big(u, true, v, c); };
  const Complex value = fedosov_trace(q, w, wadj, range_starts(frame.ball, e, fiber_dim, n), order, opt.chunk);
  return index_result("fredholm_unitary", d, value, frame, g, opt);
}

EdgeRegion EdgeRegion::central(const FiniteGeometry& slab) {
  EdgeRegion r;
  const int e = slab.dim() - 1;
  std::vector<std::pair<int, int>> ranges;
  for (int i = 0; i < e; ++i) {
    const int l = slab.sides[static_cast<std::size_t>(i)];
    if (slab.periodic(i)) {
      ranges.emplace_back(0, l);
    } else {
      ranges.emplace_back(l / 4, l - l / 4);
    }
  }
  Site cell(static_cast<std::size_t>(e));
  std::function<void(int)> fill = [&](int axis) {
    if (axis == e) {
      r.cells.push_back(cell);
      return;
    }
    for (int v = ranges[static_cast<std::size_t>(axis)].first; v < ranges[static_cast<std::size_t>(axis)].second; ++v) {
      cell[static_cast<std::size_t>(axis)] = v;
      fill(axis + 1);
    }
  };
  fill(0);
  return r;
}

InvariantResult boundary_odd_chern(const CMatrix& deviation, const FiniteGeometry& slab, int fiber_dim,
                                   const EdgeRegion& edge) {
  check_slab(slab, deviation, fiber_dim);
  const int e = slab.dim() - 1;
  if (e % 2 != 1) throw PreconditionError("boundary_odd_chern needs an even bulk dimension");
  const Complex I(0.0, 1.0);
  std::vector<CMatrix> comm(static_cast<std::size_t>(e));
  for (int i = 0; i < e; ++i)
    comm[static_cast<std::size_t>(i)] = deviation.cwiseProduct(separation(slab, fiber_dim, i).cast<Complex>());
  std::vector<int> layer;
  const auto cols = slab_columns(slab, fiber_dim, edge, &layer);
  // i U~* [U~, X] with U~ = I + D and [U~, X] = [D, X].
  const CVector per = permutation_trace(
      e, deviation.rows(), cols,
      [&](int axis, const CMatrix& z) {
        const CMatrix cz = comm[static_cast<std::size_t>(axis)] * z;
        return CMatrix(I * (cz + deviation.adjoint() * cz));
      },
      nullptr);
  return finish_boundary("boundary_odd_chern", e, per, layer, fiber_dim, slab, edge, chern_constant(e));
}

InvariantResult boundary_even_chern(const CMatrix& p_tilde, const CMatrix& reference, const FiniteGeometry& slab,
                                    int fiber_dim, const EdgeRegion& edge) {
  check_slab(slab, p_tilde, fiber_dim);
  if (reference.rows() != p_tilde.rows() || reference.cols() != p_tilde.cols())
    throw ConfigError("reference projection has the wrong size");
  const int e = slab.dim() - 1;
  if (e % 2 != 0) throw PreconditionError("boundary_even_chern needs an odd bulk dimension");
  std::vector<int> layer;
  const auto cols = slab_columns(slab, fiber_dim, edge, &layer);
  if (e == 0) {
    // Relative trace: the permutation product is empty.
    CVector per(static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c)
      per(static_cast<Eigen::Index>(c)) = p_tilde(cols[c], cols[c]) - reference(cols[c], cols[c]);
    return finish_boundary("boundary_relative_trace", 0, per, layer, fiber_dim, slab, edge, 1.0);
  }
  const Complex I(0.0, 1.0);
  std::vector<CMatrix> k(static_cast<std::size_t>(e));
  for (int i = 0; i < e; ++i) {
    // i [P~, X_i]_{ab} = i (x_b - x_a) P~_ab
    k[static_cast<std::size_t>(i)] = I * p_tilde.cwiseProduct(separation(slab, fiber_dim, i).cast<Complex>());
  }
  const CVector per = permutation_trace(
      e, p_tilde.rows(), cols, [&](int axis, const CMatrix& z) { return CMatrix(k[static_cast<std::size_t>(axis)] * z); },
      [&](const CMatrix& z) { return CMatrix(p_tilde * z); });
  return finish_boundary("boundary_even_chern", e, per, layer, fiber_dim, slab, edge, chern_constant(e));
}

namespace {

/// Edge-momentum symbols of a clean slab, read off a real-space build on a
/// small edge torus that resolves every in-plane hop exactly once.
struct EdgeSlab {
  FiniteGeometry geometry;  // the large slab being described
  int fiber_dim = 0;
  Eigen::Index n = 0;  // depth * fiber_dim
  std::size_t volume = 0;
  std::vector<CMatrix> h;
};

EdgeSlab edge_slab(const HoppingSpec& spec, const BoundaryTerm& boundary, int edge_side, int depth) {
  spec.validate();
  if (spec.disorder_amplitude != 0.0) throw PreconditionError("edge-momentum route needs a clean spec");
  const int e = spec.dimension - 1;
  if (e < 1) throw PreconditionError("edge-momentum route needs a bulk dimension of at least 2");
  int reach = spec.range();
  for (const LayeredHop& t : boundary.terms)
    for (int c : t.edge_displacement) reach = std::max(reach, std::abs(c));
  if (edge_side < 2 * reach + 1) throw ConfigError("edge side too small for the hopping range");

  EdgeSlab out;
  out.geometry = FiniteGeometry::slab(std::vector<int>(static_cast<std::size_t>(e), edge_side), depth);
  out.geometry.validate();
  out.fiber_dim = spec.fiber_dim;
  out.n = static_cast<Eigen::Index>(depth) * spec.fiber_dim;
  out.volume = out.geometry.num_sites() / static_cast<std::size_t>(depth);

  const FiniteGeometry small = FiniteGeometry::slab(std::vector<int>(static_cast<std::size_t>(e), 2 * reach + 1), depth);
  const FiniteModel model = build_halfspace(spec, boundary, MagneticFlux::none(spec.dimension), small,
                                            sample_disorder(0, small));
  const std::size_t cells = small.num_sites() / static_cast<std::size_t>(depth);
  std::vector<Site> offsets(cells);
  for (std::size_t c = 0; c < cells; ++c) {
    Site x = small.site(c * static_cast<std::size_t>(depth));
    x.pop_back();
    for (int i = 0; i < e; ++i) x[static_cast<std::size_t>(i)] = small.displacement(i, 0, x[static_cast<std::size_t>(i)]);
    offsets[c] = std::move(x);
  }
  std::vector<int> sides(static_cast<std::size_t>(e), edge_side);
  out.h.resize(out.volume);
  for (std::size_t m = 0; m < out.volume; ++m) {
    const std::vector<double> k = grid_momentum(sides, m);
    CMatrix hk = CMatrix::Zero(out.n, out.n);
    for (std::size_t c = 0; c < cells; ++c) {
      double phase = 0.0;
      for (int i = 0; i < e; ++i) phase -= k[static_cast<std::size_t>(i)] * offsets[c][static_cast<std::size_t>(i)];
      hk += std::polar(1.0, phase) * model.matrix.block(static_cast<Eigen::Index>(c) * out.n, 0, out.n, out.n);
    }
    out.h[m] = std::move(hk);
  }
  return out;
}

/// Column-major n x n matrices stacked over the edge torus, transformed over
/// the torus axes. forward: kernel(r) -> symbol(k); backward includes 1/V.
void edge_fft(const EdgeSlab& es, std::vector<Complex>& data, bool forward) {
  const int e = es.geometry.dim() - 1;
  const int howmany = static_cast<int>(es.n * es.n);
  auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
  fftw_plan plan = fftw_plan_many_dft(e, es.geometry.sides.data(), howmany, ptr, nullptr, howmany, 1, ptr, nullptr,
                                      howmany, 1, forward ? FFTW_FORWARD : FFTW_BACKWARD, FFTW_ESTIMATE);
  if (!plan) throw NumericalError("FFTW plan creation failed");
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  if (!forward)
    for (Complex& v : data) v /= static_cast<double>(es.volume);
}

std::vector<Complex> stack(const std::vector<CMatrix>& ms) {
  const std::size_t nn = static_cast<std::size_t>(ms.front().size());
  std::vector<Complex> out(ms.size() * nn);
  for (std::size_t m = 0; m < ms.size(); ++m) std::copy(ms[m].data(), ms[m].data() + nn, out.begin() + m * nn);
  return out;
}

/// Symbols of the kernels i^power (x_b - x_a) S(x_a - x_b) along each edge axis.
std::vector<std::vector<CMatrix>> position_commutators(const EdgeSlab& es, const std::vector<CMatrix>& symbol,
                                                       Complex factor) {
  const int e = es.geometry.dim() - 1;
  std::vector<Complex> kernel = stack(symbol);
  edge_fft(es, kernel, false);
  const std::size_t nn = static_cast<std::size_t>(es.n * es.n);
  std::vector<std::vector<CMatrix>> out(static_cast<std::size_t>(e));
  for (int i = 0; i < e; ++i) {
    std::vector<Complex> buf(kernel.size());
    for (std::size_t m = 0; m < es.volume; ++m) {
      Site r = es.geometry.site(m * static_cast<std::size_t>(es.geometry.depth()));
      const double sep = es.geometry.displacement(i, r[static_cast<std::size_t>(i)], 0);
      for (std::size_t j = 0; j < nn; ++j) buf[m * nn + j] = factor * sep * kernel[m * nn + j];
    }
    edge_fft(es, buf, true);
    auto& sym = out[static_cast<std::size_t>(i)];
    sym.resize(es.volume);
    for (std::size_t m = 0; m < es.volume; ++m) sym[m] = Eigen::Map<const CMatrix>(buf.data() + m * nn, es.n, es.n);
  }
  return out;
}

/// Per near-half column: (1/V) sum_k sum_rho sign <j| prefix(k) F_rho1(k) ... F_rhoe(k) |j>.
InvariantResult finish_edge(std::string kind, const EdgeSlab& es, const std::vector<std::vector<CMatrix>>& factor,
                            const std::vector<CMatrix>* prefix) {
  const int e = es.geometry.dim() - 1;
  const int near = es.geometry.depth() / 2;
  if (near < 1) throw ConfigError("slab too shallow for a boundary invariant");
  const Eigen::Index cols = static_cast<Eigen::Index>(near) * es.fiber_dim;
  CVector per = CVector::Zero(cols);
  const auto perms = permutations(e);
  for (std::size_t m = 0; m < es.volume; ++m) {
    for (const Permutation& p : perms) {
      CMatrix z = factor[static_cast<std::size_t>(p.axes.back())][m].leftCols(cols);
      for (int k = e - 2; k >= 0; --k) z = factor[static_cast<std::size_t>(p.axes[static_cast<std::size_t>(k)])][m] * z;
      if (prefix) z = (*prefix)[m] * z;
      per += p.sign * z.diagonal().head(cols);
    }
  }
  per /= static_cast<double>(es.volume);
  std::vector<int> layer(static_cast<std::size_t>(near));
  std::iota(layer.begin(), layer.end(), 0);
  EdgeRegion one;
  one.cells.push_back(Site(static_cast<std::size_t>(e), 0));
  InvariantResult r = finish_boundary(std::move(kind), e, per, layer, es.fiber_dim, es.geometry, one, chern_constant(e));
  r.region = "all " + std::to_string(es.volume) + " edge cells (edge momenta) x " + std::to_string(near) + " layers";
  return r;
}

}  // namespace

InvariantResult boundary_odd_chern_bloch(const HoppingSpec& spec, const BoundaryTerm& boundary, int edge_side,
                                         int depth, const SwitchFunction& f,
                                         const std::optional<GapReport>& bulk_gap) {
  const EdgeSlab es = edge_slab(spec, boundary, edge_side, depth);
  if ((es.geometry.dim() - 1) % 2 != 1) throw PreconditionError("boundary_odd_chern needs an even bulk dimension");
  std::vector<CMatrix> dev(es.volume);
  bool ill = false;
  for (std::size_t m = 0; m < es.volume; ++m) {
    BoundaryUnitary bu = boundary_unitary(decompose(es.h[m]), f, bulk_gap);
    ill = ill || bu.ill_conditioned;
    dev[m] = std::move(bu.deviation);
  }
  // i U~* [U~, X] with U~ = I + D, symbol i (I + D(k)^dagger) C(k).
  const Complex I(0.0, 1.0);
  auto factor = position_commutators(es, dev, 1.0);
  for (auto& axis : factor)
    for (std::size_t m = 0; m < es.volume; ++m) axis[m] = I * (axis[m] + dev[m].adjoint() * axis[m]);
  InvariantResult r = finish_edge("boundary_odd_chern", es, factor, nullptr);
  r.ill_conditioned = ill;
  return r;
}

InvariantResult boundary_even_chern_bloch(const HoppingSpec& spec, const BoundaryTerm& boundary, int edge_side,
                                          int depth, const SwitchFunction& f,
                                          const std::optional<GapReport>& bulk_gap) {
  if (!spec.chiral_symmetry) throw PreconditionError("boundary_even_chern needs a chiral spec");
  const EdgeSlab es = edge_slab(spec, boundary, edge_side, depth);
  if ((es.geometry.dim() - 1) % 2 != 0) throw PreconditionError("boundary_even_chern needs an odd bulk dimension");
  std::vector<CMatrix> proj(es.volume);
  bool ill = false;
  for (std::size_t m = 0; m < es.volume; ++m) {
    BoundaryProjection bp = boundary_projection(decompose(es.h[m]), f, *spec.chiral_symmetry, spec.fiber_dim, bulk_gap);
    ill = ill || bp.ill_conditioned;
    proj[m] = std::move(bp.matrix);
  }
  const auto factor = position_commutators(es, proj, Complex(0.0, 1.0));
  InvariantResult r = finish_edge("boundary_even_chern", es, factor, &proj);
  r.ill_conditioned = ill;
  return r;
}

BulkBoundaryReport check_bulk_boundary(const InvariantResult& bulk, const InvariantResult& boundary, double tolerance) {
  if (bulk.model != boundary.model)
    throw ConfigError("bulk and boundary results come from different models ('" + bulk.model + "' vs '" +
                      boundary.model + "')");
  if (boundary.dim != bulk.dim - 1) throw ConfigError("boundary invariant must have dimension d - 1");
  BulkBoundaryReport rep;
  rep.difference = std::abs(bulk.raw - boundary.raw);
  rep.bulk_deviation = bulk.deviation;
  rep.boundary_deviation = boundary.deviation;
  rep.pass = rep.difference < tolerance;
  return rep;
}

InvariantResult aggregate(const std::vector<InvariantResult>& runs) {
  if (runs.empty()) throw ConfigError("aggregate needs at least one result");
  InvariantResult out = runs.front();
  out.values.clear();
  out.seeds.clear();
  out.site_values.clear();
  double sum = 0.0;
  for (const InvariantResult& r : runs) {
    if (r.kind != out.kind || r.model != out.model) throw ConfigError("aggregate: mixed invariant kinds or models");
    sum += r.raw;
    out.values.push_back(r.raw);
    out.seeds.insert(out.seeds.end(), r.seeds.begin(), r.seeds.end());
    out.imag_residue = std::max(out.imag_residue, r.imag_residue);
    out.tail = std::max(out.tail, r.tail);
    out.ill_conditioned = out.ill_conditioned || r.ill_conditioned;
  }
  const double n = static_cast<double>(runs.size());
  const double mean = sum / n;
  double var = 0.0;
  for (double v : out.values) var += (v - mean) * (v - mean);
  out.stddev = runs.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  out.set_raw(mean);
  out.unconverged = out.deviation > kUnconverged ||
                    std::any_of(runs.begin(), runs.end(), [](const InvariantResult& r) { return r.unconverged; });
  return out;
}

}  // namespace topo
