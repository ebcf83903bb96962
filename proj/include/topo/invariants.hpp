#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topo/lattice.hpp"
#include "topo/linalg.hpp"
#include "topo/spectral.hpp"

namespace topo {

/// Irreducible representation of the complex Clifford algebra in d
/// dimensions. Even d carries the grading Gamma_0.
struct CliffordRep {
  int dim = 0;
  std::vector<CMatrix> gamma;
  CMatrix grading;  // empty for odd d

  /// Pauli-based representation. The orientation is chosen so that the
  /// Fedosov index and the Chern trace formula agree in sign.
  static CliffordRep standard(int d);
  int size() const { return gamma.empty() ? 0 : static_cast<int>(gamma.front().rows()); }
  void validate() const;
};

struct InvariantResult {
  std::string kind;     // even_chern, odd_chern, fredholm_projection, ...
  std::string model;    // spec id the value was computed from
  int dim = 0;          // dimension of the formula (d for bulk, d - 1 for boundary)
  double raw = 0.0;
  long nearest = 0;
  double deviation = 0.0;
  Complex lambda{0.0, 0.0};
  double imag_residue = 0.0;
  std::string geometry;
  std::string region;
  std::vector<double> site_values;  // per trace-region site, before the constant
  std::vector<double> values;       // per realisation
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<std::uint64_t> seeds;
  double tail = 0.0;       // boundary: contribution of the deepest layers summed
  bool unconverged = false;
  bool ill_conditioned = false;  // switch interval not inside the bulk gap

  void set_raw(double v);
};

/// Lambda_d of the even (projection) or odd (unitary) Chern formula.
Complex chern_constant(int d);

/// Sites at least `margin` away from every open face; with `all_axes` the
/// same window is applied along periodic axes too.
std::vector<std::size_t> central_region(const FiniteGeometry& geometry, int margin, bool all_axes = false);

/// Real-space Chern number of a projection, d even. Commutators with the
/// position operator use minimum-image separations on periodic axes.
InvariantResult even_chern(const CMatrix& p, const FiniteGeometry& geometry, int fiber_dim,
                           const std::vector<std::size_t>& region);

/// Real-space odd Chern number of a unitary, d odd.
InvariantResult odd_chern(const CMatrix& u, const FiniteGeometry& geometry, int fiber_dim,
                          const std::vector<std::size_t>& region);

/// The Dirac phase is (X + x0) . Gamma / |X + x0| with X measured from the
/// sample centre floor(L_i / 2); traces run over |X + x0| <= radius.
struct IndexOptions {
  std::vector<double> x0;  // in (0,1)^d
  double radius = 10.0;
  int order = 0;           // 0 selects floor(d/2) + 1
  Eigen::Index chunk = 64;
};

/// Fedosov estimate Tr_R (P - G^dagger G)^n - Tr_R (P - G G^dagger)^n with
/// G = P u P, u the lower-left block of the Dirac phase in the grading.
InvariantResult fredholm_index_projection(const LinearMap& p, const FiniteGeometry& geometry, int fiber_dim,
                                          const CliffordRep& rep, const IndexOptions& options);

/// Fedosov estimate of Ind(E U E), E the positive spectral projection of the
/// Dirac phase.
InvariantResult fredholm_index_unitary(const LinearMap& u, const FiniteGeometry& geometry, int fiber_dim,
                                       const CliffordRep& rep, const IndexOptions& options);

/// Trace region of a boundary invariant: edge cells (indices into the edge
/// lattice Z^{d-1} of the slab) crossed with the layers 0 <= x_d < depth/2.
/// The far face of a finite slab carries the opposite contribution, so
/// only the half nearest to the boundary is summed.
struct EdgeRegion {
  std::vector<Site> cells;
  static EdgeRegion central(const FiniteGeometry& slab);
};

/// Boundary odd Chern number of U~ = I + deviation (bulk d even).
InvariantResult boundary_odd_chern(const CMatrix& deviation, const FiniteGeometry& slab, int fiber_dim,
                                   const EdgeRegion& edge);

/// Boundary invariant of P~ (bulk d odd). For d = 1 this is the relative
/// trace Tr(P~ - reference) over the near half-line; for d = 3 the even
/// Chern number of P~ with the normal direction summed.
InvariantResult boundary_even_chern(const CMatrix& p_tilde, const CMatrix& reference, const FiniteGeometry& slab,
                                    int fiber_dim, const EdgeRegion& edge);

/// Clean half-space (no disorder, no flux) on an edge torus of side
/// edge_side: the traces of boundary_odd_chern / boundary_even_chern over
/// all edge cells, evaluated per edge momentum. Equal to the real-space
/// result on the same slab, at cost edge_side^(d-1) (depth N)^3.
InvariantResult boundary_odd_chern_bloch(const HoppingSpec& spec, const BoundaryTerm& boundary, int edge_side,
                                         int depth, const SwitchFunction& f,
                                         const std::optional<GapReport>& bulk_gap = std::nullopt);
InvariantResult boundary_even_chern_bloch(const HoppingSpec& spec, const BoundaryTerm& boundary, int edge_side,
                                          int depth, const SwitchFunction& f,
                                          const std::optional<GapReport>& bulk_gap = std::nullopt);

/// Sign multiplying the boundary trace so that it reproduces the bulk
/// invariant: -1 for the U~ route (d = 2) and the d = 1 relative trace,
/// +1 for the P~ route in d = 3.
double boundary_orientation(int bulk_dim);

struct BulkBoundaryReport {
  bool pass = false;
  double difference = 0.0;
  double bulk_deviation = 0.0;
  double boundary_deviation = 0.0;
};

BulkBoundaryReport check_bulk_boundary(const InvariantResult& bulk, const InvariantResult& boundary, double tolerance);

/// Combines per-seed results: raw = mean, stddev over seeds, seeds collected.
InvariantResult aggregate(const std::vector<InvariantResult>& runs);

}  // namespace topo
