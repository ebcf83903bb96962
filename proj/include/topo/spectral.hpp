#pragma once

#include <limits>
#include <optional>
#include <string>

#include "topo/lattice.hpp"
#include "topo/linalg.hpp"

namespace topo {

/// Open interval (lower, upper) free of spectrum. Infinite ends mean the
/// query energy lies outside the whole spectrum on that side.
struct GapReport {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  double width() const { return upper - lower; }
  bool contains(double a, double b) const { return lower < a && b < upper; }
};

struct SpectralDecomposition {
  RVector values;
  CMatrix vectors;
  std::string provenance;
  double norm = 0.0;  // spectral radius of the decomposed matrix

  /// The gap containing mu; nullopt if mu sits in the spectrum, i.e. the
  /// neighbouring eigenvalues are closer than 1e-8 * norm.
  std::optional<GapReport> gap_at(double mu) const;
  /// Number of eigenvalues <= mu.
  Eigen::Index count_below(double mu) const;
  double reconstruction_error(const CMatrix& h) const;
  double unitarity_error() const;
};

/// Smooth weight f. descending_unit: 1 below a, 0 above b. odd_sign: -1
/// below -b, +1 above b, odd. step: the sharp limit at (a + b) / 2; the
/// consumer decides whether it stands for a descending or a sign profile.
struct SwitchFunction {
  enum class Kind { descending_unit, odd_sign, step };
  Kind kind = Kind::descending_unit;
  double a = 0.0;
  double b = 0.0;

  static SwitchFunction descending(double a, double b);
  static SwitchFunction odd(double b);
  static SwitchFunction step(double at = 0.0);

  /// Degree-7 profile p on [0, 1] with p(0) = 1, p(1) = 0 and three
  /// vanishing derivatives at both ends.
  static double profile(double t);
  double operator()(double x) const;
  double center() const { return 0.5 * (a + b); }
};

SpectralDecomposition decompose(const CMatrix& h, std::string provenance = {});
SpectralDecomposition decompose(const FiniteModel& model);

struct FermiProjection {
  CMatrix matrix;
  Eigen::Index rank = 0;
  bool ambiguous = false;  // mu within 1e-12 of an eigenvalue
};

FermiProjection fermi_projection(const SpectralDecomposition& dec, double mu);

/// J on C^N (x) l^2(sites) as a per-site involution, together with the
/// orthonormal eigenbases used for the block decomposition.
struct ChiralGrading {
  CMatrix plus;   // N x N/2, J = +1 eigenvectors
  CMatrix minus;  // N x N/2
  static ChiralGrading from(const CMatrix& j);
};

/// Lower-left block of sgn(H) in the grading of J (+1 block first); it is
/// an operator on C^{N/2} (x) l^2(sites). Requires JHJ = -H and a gap at 0.
CMatrix flat_band_unitary(const SpectralDecomposition& dec, const CMatrix& h, const CMatrix& j_fiber, int fiber_dim);

/// Same operator by polar decomposition of the off-diagonal block
/// h = <-|H|+>: U = h (h^dagger h)^{-1/2}. Only one half-size eigensolve.
CMatrix flat_band_unitary_polar(const CMatrix& h, const CMatrix& j_fiber, int fiber_dim);

/// exp(2 pi i f(H^)) represented as deviation = U~ - I, which keeps the
/// boundary-localised part exact in floating point.
struct BoundaryUnitary {
  CMatrix deviation;
  bool ill_conditioned = false;
  CMatrix unitary() const;
};

BoundaryUnitary boundary_unitary(const SpectralDecomposition& dec, const SwitchFunction& f,
                                 const std::optional<GapReport>& bulk_gap = std::nullopt);

/// P~ = exp(-i pi/2 f(H^)) diag(I, 0) exp(i pi/2 f(H^)) in the grading of J.
/// `reference` is the step-limit value, (1 - J)/2 per site, against which
/// relative traces are taken.
struct BoundaryProjection {
  CMatrix matrix;
  CMatrix reference;
  bool ill_conditioned = false;
};

BoundaryProjection boundary_projection(const SpectralDecomposition& dec, const SwitchFunction& f,
                                       const CMatrix& j_fiber, int fiber_dim,
                                       const std::optional<GapReport>& bulk_gap = std::nullopt);

void write_spectrum_csv(const SpectralDecomposition& dec, const std::string& path);

}  // namespace topo
