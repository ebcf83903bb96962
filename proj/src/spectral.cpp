#include "topo/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace topo {

namespace {

constexpr double kGapRelTol = 1e-8;

void check_involution(const CMatrix& j) {
  if (j.rows() != j.cols()) throw PreconditionError("chiral J must be square");
  if (j.rows() % 2 != 0) throw PreconditionError("chiral models need an even fiber dimension");
  const CMatrix id = CMatrix::Identity(j.rows(), j.cols());
  if (max_abs(j - j.adjoint()) > 1e-12 || max_abs(j * j - id) > 1e-12)
    throw PreconditionError("J is not a Hermitian involution");
  if (std::abs(j.trace().real()) > 1e-9) throw PreconditionError("J must have balanced +1/-1 eigenspaces");
}

/// (I_sites (x) basis)^dagger * m, where basis is N x r.
CMatrix fiber_project(const CMatrix& basis, const CMatrix& m) {
  const Eigen::Index n = basis.rows();
  const Eigen::Index r = basis.cols();
  const Eigen::Index sites = m.rows() / n;
  CMatrix out(sites * r, m.cols());
  const CMatrix badj = basis.adjoint();
  for (Eigen::Index s = 0; s < sites; ++s) out.middleRows(s * r, r).noalias() = badj * m.middleRows(s * n, n);
  return out;
}

CMatrix per_site(const CMatrix& block, Eigen::Index sites) {
  const Eigen::Index n = block.rows();
  CMatrix out = CMatrix::Zero(sites * n, sites * n);
  for (Eigen::Index s = 0; s < sites; ++s) out.block(s * n, s * n, n, n) = block;
  return out;
}

double matrix_scale(const CMatrix& h) { return std::max(1.0, max_abs(h)); }

}  // namespace

// ---------------------------------------------------------------------------

std::optional<GapReport> SpectralDecomposition::gap_at(double mu) const {
  const double tol = kGapRelTol * std::max(norm, 1.0);
  GapReport g;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const double v = values(i);
    if (std::abs(v - mu) <= tol) return std::nullopt;
    if (v < mu) g.lower = v;
    if (v > mu) {
      g.upper = v;
      break;
    }
  }
  return g;
}

Eigen::Index SpectralDecomposition::count_below(double mu) const {
  return static_cast<Eigen::Index>(std::upper_bound(values.data(), values.data() + values.size(), mu) - values.data());
}

double SpectralDecomposition::reconstruction_error(const CMatrix& h) const {
  return max_abs(h - vectors * values.cast<Complex>().asDiagonal() * vectors.adjoint());
}

double SpectralDecomposition::unitarity_error() const {
  return max_abs(vectors.adjoint() * vectors - CMatrix::Identity(vectors.cols(), vectors.cols()));
}

SwitchFunction SwitchFunction::descending(double a, double b) {
  if (!(a < b)) throw ConfigError("switch function needs a < b");
  return {Kind::descending_unit, a, b};
}

SwitchFunction SwitchFunction::odd(double b) {
  if (!(b > 0.0)) throw ConfigError("odd switch function needs b > 0");
  return {Kind::odd_sign, -b, b};
}

SwitchFunction SwitchFunction::step(double at) { return {Kind::step, at, at}; }

double SwitchFunction::profile(double t) {
  if (t <= 0.0) return 1.0;
  if (t >= 1.0) return 0.0;
  const double t4 = t * t * t * t;
  return 1.0 - t4 * (35.0 - t * (84.0 - t * (70.0 - 20.0 * t)));
}

double SwitchFunction::operator()(double x) const {
  switch (kind) {
    case Kind::descending_unit:
      return profile((x - a) / (b - a));
    case Kind::odd_sign:
      // 1 - 2p is odd about the centre of [a, b] because p(1 - t) = 1 - p(t).
      return 1.0 - 2.0 * profile((x - a) / (b - a));
    case Kind::step:
      return x < a ? 1.0 : 0.0;
  }
  return 0.0;
}

// ---------------------------------------------------------------------------

SpectralDecomposition decompose(const CMatrix& h, std::string provenance) {
  if (h.rows() != h.cols()) throw PreconditionError("decompose: matrix is not square");
  const double defect = hermiticity_defect(h);
  if (defect > 1e-12 * matrix_scale(h))
    throw PreconditionError("decompose: matrix is not Hermitian (defect " + std::to_string(defect) + ")");
  EigenSystem es = hermitian_eigensystem(h);
  SpectralDecomposition dec;
  dec.values = std::move(es.values);
  dec.vectors = std::move(es.vectors);
  dec.provenance = std::move(provenance);
  if (dec.values.size() > 0) dec.norm = std::max(std::abs(dec.values(0)), std::abs(dec.values(dec.values.size() - 1)));
  return dec;
}

SpectralDecomposition decompose(const FiniteModel& model) { return decompose(model.matrix, model.id()); }

FermiProjection fermi_projection(const SpectralDecomposition& dec, double mu) {
  FermiProjection out;
  out.rank = dec.count_below(mu);
  for (Eigen::Index i = 0; i < dec.values.size(); ++i) {
    if (std::abs(dec.values(i) - mu) < 1e-12) out.ambiguous = true;
  }
  const auto occ = dec.vectors.leftCols(out.rank);
  out.matrix = occ * occ.adjoint();
  return out;
}

ChiralGrading ChiralGrading::from(const CMatrix& j) {
  check_involution(j);
  EigenSystem es = hermitian_eigensystem(j);
  const Eigen::Index half = j.rows() / 2;
  // Eigenvalues come sorted ascending: -1 eigenvectors first.
  return {es.vectors.rightCols(half), es.vectors.leftCols(half)};
}

CMatrix flat_band_unitary(const SpectralDecomposition& dec, const CMatrix& h, const CMatrix& j_fiber, int fiber_dim) {
  if (j_fiber.rows() != fiber_dim) throw PreconditionError("J does not match the fiber dimension");
  const ChiralGrading g = ChiralGrading::from(j_fiber);
  const CMatrix hp = fiber_project(g.plus, h);  // <+|H
  const double scale = matrix_scale(h);
  if (max_abs(fiber_project(g.plus, hp.adjoint())) > 1e-10 * scale ||
      max_abs(fiber_project(g.minus, fiber_project(g.minus, h).adjoint())) > 1e-10 * scale)
    throw PreconditionError("Hamiltonian is not chiral with respect to J");
  const double gap_tol = kGapRelTol * std::max(dec.norm, 1.0);
  RVector sign(dec.values.size());
  for (Eigen::Index i = 0; i < dec.values.size(); ++i) {
    if (std::abs(dec.values(i)) <= gap_tol) throw PreconditionError("flat_band_unitary: no spectral gap at 0");
    sign(i) = dec.values(i) > 0 ? 1.0 : -1.0;
  }
  const CMatrix vp = fiber_project(g.plus, dec.vectors);
  const CMatrix vm = fiber_project(g.minus, dec.vectors);
  return vm * sign.cast<Complex>().asDiagonal() * vp.adjoint();
}

CMatrix flat_band_unitary_polar(const CMatrix& h, const CMatrix& j_fiber, int fiber_dim) {
  if (j_fiber.rows() != fiber_dim) throw PreconditionError("J does not match the fiber dimension");
  const ChiralGrading g = ChiralGrading::from(j_fiber);
  const CMatrix hp = fiber_project(g.plus, h);
  const double scale = matrix_scale(h);
  if (max_abs(fiber_project(g.plus, hp.adjoint())) > 1e-10 * scale)
    throw PreconditionError("Hamiltonian is not chiral with respect to J");
  const CMatrix off = fiber_project(g.minus, hp.adjoint());  // <-|H|+>
  const EigenSystem es = hermitian_eigensystem(off.adjoint() * off);
  const double tol = kGapRelTol * scale;
  if (es.values.size() > 0 && !(es.values(0) > tol * tol))
    throw PreconditionError("flat_band_unitary: no spectral gap at 0");
  RVector inv_sqrt = es.values.cwiseSqrt().cwiseInverse();
  return off * es.vectors * inv_sqrt.cast<Complex>().asDiagonal() * es.vectors.adjoint();
}

CMatrix BoundaryUnitary::unitary() const {
  return deviation + CMatrix::Identity(deviation.rows(), deviation.cols());
}

BoundaryUnitary boundary_unitary(const SpectralDecomposition& dec, const SwitchFunction& f,
                                 const std::optional<GapReport>& bulk_gap) {
  if (f.kind == SwitchFunction::Kind::odd_sign) throw ConfigError("boundary_unitary needs a descending switch function");
  BoundaryUnitary out;
  if (bulk_gap) out.ill_conditioned = !bulk_gap->contains(f.a, f.b);
  const Eigen::Index n = dec.values.size();
  CVector g(n);
  bool trivial = true;
  for (Eigen::Index i = 0; i < n; ++i) {
    double v = f(dec.values(i));
    v -= std::round(v);  // exp(2 pi i k) = 1 exactly for integers k
    g(i) = v == 0.0 ? Complex(0.0) : std::polar(1.0, 2.0 * kPi * v) - 1.0;
    trivial = trivial && v == 0.0;
  }
  if (trivial) {
    out.deviation = CMatrix::Zero(n, n);
  } else {
    out.deviation = dec.vectors * g.asDiagonal() * dec.vectors.adjoint();
  }
  return out;
}

BoundaryProjection boundary_projection(const SpectralDecomposition& dec, const SwitchFunction& f,
                                       const CMatrix& j_fiber, int fiber_dim, const std::optional<GapReport>& bulk_gap) {
  if (f.kind == SwitchFunction::Kind::descending_unit)
    throw ConfigError("boundary_projection needs an odd switch function");
  if (j_fiber.rows() != fiber_dim) throw PreconditionError("J does not match the fiber dimension");
  if (dec.norm == 0.0) throw PreconditionError("boundary_projection: Hamiltonian has no gap at 0");
  const ChiralGrading g = ChiralGrading::from(j_fiber);
  const Eigen::Index n = dec.values.size();
  const Eigen::Index sites = n / fiber_dim;
  const CMatrix id = CMatrix::Identity(fiber_dim, fiber_dim);

  BoundaryProjection out;
  out.reference = per_site(0.5 * (id - j_fiber), sites);
  if (bulk_gap) out.ill_conditioned = !bulk_gap->contains(f.a, f.b);
  if (f.kind == SwitchFunction::Kind::step) {
    // f = sgn(H): exp(-i pi/2 S) R exp(i pi/2 S) = S R S = (1 - J)/2, since S anticommutes with J.
    out.matrix = out.reference;
    return out;
  }
  CVector phase(n);
  for (Eigen::Index i = 0; i < n; ++i) phase(i) = std::polar(1.0, 0.5 * kPi * f(dec.values(i)));
  const CMatrix vp = fiber_project(g.plus, dec.vectors);
  CMatrix m = phase.conjugate().asDiagonal() * (vp.adjoint() * vp) * phase.asDiagonal();
  out.matrix = dec.vectors * m * dec.vectors.adjoint();
  return out;
}

void write_spectrum_csv(const SpectralDecomposition& dec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << "index,eigenvalue\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < dec.values.size(); ++i) out << i << ',' << dec.values(i) << '\n';
}

}  // namespace topo
