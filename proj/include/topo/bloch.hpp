#pragma once

#include <memory>
#include <vector>

#include "topo/lattice.hpp"
#include "topo/linalg.hpp"

namespace topo {

/// H(k) = sum_y A_y e^{i k.y} + h.c. of the disorder-free part of a spec
/// (the y = 0 term enters as (A_0 + A_0^dagger)/2).
CMatrix bloch_hamiltonian(const HoppingSpec& spec, const std::vector<double>& k);

/// Momentum k_m = 2 pi m / L on a torus grid, row-major index m.
std::vector<double> grid_momentum(const std::vector<int>& sides, std::size_t index);

/// Translation-invariant operator on a torus, applied through FFTW:
/// (T psi)^(k) = S(k) psi^(k). Vectors use the site ordering of
/// FiniteGeometry with the fiber fastest.
class BlochOperator final : public LinearMap {
 public:
  BlochOperator(std::vector<int> sides, int fiber_dim, std::vector<CMatrix> symbol);
  ~BlochOperator() override;
  BlochOperator(const BlochOperator&) = delete;
  BlochOperator& operator=(const BlochOperator&) = delete;

  Eigen::Index size() const override { return size_; }
  CMatrix apply(const CMatrix& block) const override;
  CMatrix apply_adjoint(const CMatrix& block) const override;

  const std::vector<CMatrix>& symbol() const { return symbol_; }
  int fiber_dim() const { return fiber_; }
  /// Dense matrix, for tests on small tori.
  CMatrix dense() const;

 private:
  CMatrix transform(const CMatrix& block, bool adjoint) const;

  std::vector<int> sides_;
  int fiber_;
  Eigen::Index size_;
  std::vector<CMatrix> symbol_;
  struct Plans;
  std::unique_ptr<Plans> plans_;
};

/// Clean Hamiltonian of a spec on an all-periodic torus (no flux).
std::unique_ptr<BlochOperator> bloch_operator(const HoppingSpec& spec, const std::vector<int>& sides);

/// Flat-band unitary of a clean chiral spec: U(k) = h(k) (h(k)^dagger h(k))^{-1/2},
/// h(k) the (-,+) block of H(k) in the grading of J. Throws if some h(k) is singular.
std::unique_ptr<BlochOperator> bloch_flat_band_unitary(const HoppingSpec& spec, const std::vector<int>& sides);

}  // namespace topo
