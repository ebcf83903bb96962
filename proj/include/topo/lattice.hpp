#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "topo/common.hpp"

namespace topo {

enum class Boundary { periodic, open };

/// Finite region of Z^d. Sites are ordered lexicographically with the
/// first axis slowest; inside a FiniteModel the fiber index runs fastest.
/// A half-space geometry has its boundary at x_d = 0 and keeps the sites
/// 0 <= x_d < depth().
struct FiniteGeometry {
  std::vector<int> sides;
  std::vector<Boundary> boundary;
  bool half_space = false;

  static FiniteGeometry box(int dim, int side);
  static FiniteGeometry torus(int dim, int side);
  /// Half-space slab: edge axes with the given sides and boundary, then an
  /// open normal axis of the given depth.
  static FiniteGeometry slab(std::vector<int> edge_sides, int depth, Boundary edge = Boundary::periodic);

  int dim() const { return static_cast<int>(sides.size()); }
  std::size_t num_sites() const;
  int depth() const { return sides.back(); }
  bool periodic(int axis) const { return boundary[static_cast<std::size_t>(axis)] == Boundary::periodic; }
  bool all_periodic() const;

  Site site(std::size_t index) const;
  std::size_t index(const Site& x) const;
  /// Folds periodic axes back into range; nullopt if an open axis is left.
  std::optional<std::size_t> locate(Site x) const;

  /// Signed separation to - from along an axis: plain difference on open
  /// axes, minimum image in [-L/2, L/2) on periodic ones.
  int displacement(int axis, int from, int to) const;
  double distance(std::size_t a, std::size_t b) const;

  void validate() const;
  std::string describe() const;
  bool operator==(const FiniteGeometry&) const = default;
};

/// One stored hop: the matrix <x|H|x+y> = constant + omega_x * W * disorder.
struct Hop {
  Site displacement;
  CMatrix constant;
  CMatrix disorder;
};

/// Finite-range covariant Hamiltonian with affine Anderson-type disorder.
/// Only y = 0 and displacements whose first nonzero coordinate is positive
/// are stored; builders add the Hermitian conjugate partners.
struct HoppingSpec {
  std::string id = "model";
  int dimension = 1;
  int fiber_dim = 1;
  std::vector<Hop> hops;
  double disorder_amplitude = 0.0;
  std::optional<CMatrix> chiral_symmetry;

  int range() const;
  void validate() const;
};

/// Uniform magnetic field as an antisymmetric matrix; translations obey
/// U_x U_y = exp(i pi x^y) U_{x+y} with x^y = sum_{i<j} phi_ij (x_i y_j - x_j y_i).
/// phi_ij is the flux per (i,j) plaquette in flux quanta.
struct MagneticFlux {
  RMatrix phi;

  static MagneticFlux none(int dim);
  static MagneticFlux planar(int dim, int i, int j, double flux);

  int dim() const { return static_cast<int>(phi.rows()); }
  bool is_zero() const;
  double wedge(const Site& x, const Site& y) const;
  void validate() const;
  /// Rejects tori on which the Landau-gauge phases are not periodic.
  void check_commensurate(const FiniteGeometry& geometry) const;
};

/// One realisation of the disorder field on a geometry. Values are i.i.d.
/// uniform on [-1/2, 1/2]; with a strip half-width L every site with
/// x_d > L carries exactly zero.
struct DisorderConfig {
  std::uint64_t seed = 0;
  FiniteGeometry geometry;
  std::vector<double> values;
  std::optional<int> strip_halfwidth;

  double at(std::size_t site) const { return values.empty() ? 0.0 : values[site]; }
};

/// A concrete Hermitian matrix and the data it was built from.
struct Provenance {
  std::string spec_id;
  std::uint64_t seed = 0;
  RMatrix flux;
  std::string kind;  // "bulk" or "halfspace"
};

struct FiniteModel {
  CMatrix matrix;
  FiniteGeometry geometry;
  int fiber_dim = 1;
  Provenance provenance;

  Eigen::Index dimension() const { return matrix.rows(); }
  std::string id() const;
};

/// Layer-resolved boundary term <x,n|H~|x+y,m> = constant + omega_{x,n} W disorder.
struct LayeredHop {
  int from_layer = 0;
  int to_layer = 0;
  Site edge_displacement;
  CMatrix constant;
  CMatrix disorder;
};

struct BoundaryTerm {
  std::vector<LayeredHop> terms;
  /// Number of layers touched, i.e. R_b.
  int reach() const;
  static BoundaryTerm none() { return {}; }
  static BoundaryTerm surface_potential(int dim, int fiber_dim, double shift);
};

/// Counter-based: each value depends only on (seed, site coordinates), so
/// generation order and thread count do not matter.
DisorderConfig sample_disorder(std::uint64_t seed, const FiniteGeometry& geometry,
                               std::optional<int> strip_halfwidth = std::nullopt);

/// Shifted configuration (tau_y omega)_x = omega_{x+y} on a torus.
DisorderConfig shift_disorder(const DisorderConfig& disorder, const Site& y);

/// exp(i pi x^y).
Complex translation_phase(const Site& x, const Site& y, const MagneticFlux& flux);

/// Landau-gauge Peierls factor of the hop from x to x+y.
Complex hop_phase(const Site& x, const Site& y, const MagneticFlux& flux);

/// Matrix of the magnetic translation U_y on a torus; it commutes with
/// every covariant Hamiltonian up to the disorder shift:
/// U_y H(omega) U_y^dagger = H(tau_y omega).
CMatrix magnetic_translation(const FiniteGeometry& geometry, int fiber_dim, const MagneticFlux& flux, const Site& y);

FiniteModel build_bulk(const HoppingSpec& spec, const MagneticFlux& flux, const FiniteGeometry& geometry,
                       const DisorderConfig& disorder);

/// Dirichlet restriction to x_d >= 0 plus the boundary term.
FiniteModel build_halfspace(const HoppingSpec& spec, const BoundaryTerm& boundary, const MagneticFlux& flux,
                            const FiniteGeometry& geometry, const DisorderConfig& disorder);

/// I_sites (x) J for the spec's chiral involution.
CMatrix chiral_operator(const HoppingSpec& spec, std::size_t num_sites);

}  // namespace topo
