#pragma once

#include <memory>

#include "topo/common.hpp"

namespace topo {

struct EigenSystem {
  RVector values;   // ascending
  CMatrix vectors;  // columns are eigenvectors
};

/// Dense Hermitian eigensolve (LAPACK zheevd). Only the lower triangle is read.
EigenSystem hermitian_eigensystem(const CMatrix& h);

/// Eigenvalues only; much cheaper than the full system for large matrices.
RVector hermitian_eigenvalues(const CMatrix& h);

/// max |H - H^dagger| over all entries.
double hermiticity_defect(const CMatrix& h);

/// Largest absolute entry, used as the scale for relative tolerances.
double max_abs(const CMatrix& m);

/// V f(Lambda) V^dagger for a precomputed eigensystem.
template <class F>
CMatrix apply_function(const EigenSystem& es, F&& f) {
  CVector diag(es.values.size());
  for (Eigen::Index i = 0; i < es.values.size(); ++i) diag(i) = f(es.values(i));
  return es.vectors * diag.asDiagonal() * es.vectors.adjoint();
}

/// A linear operator on C^N (x) l^2(sites) that can be applied to blocks
/// of column vectors. Dense matrices and translation-invariant (Bloch)
/// operators share this interface so index computations do not need to
/// materialise huge matrices.
class LinearMap {
 public:
  virtual ~LinearMap() = default;
  virtual Eigen::Index size() const = 0;
  virtual CMatrix apply(const CMatrix& block) const = 0;
  virtual CMatrix apply_adjoint(const CMatrix& block) const = 0;
  /// Matrix elements of the requested columns.
  virtual CMatrix columns(const std::vector<Eigen::Index>& cols) const;
};

class DenseMap final : public LinearMap {
 public:
  explicit DenseMap(CMatrix m);
  Eigen::Index size() const override { return m_.rows(); }
  CMatrix apply(const CMatrix& block) const override { return m_ * block; }
  CMatrix apply_adjoint(const CMatrix& block) const override { return m_.adjoint() * block; }
  CMatrix columns(const std::vector<Eigen::Index>& cols) const override;
  const CMatrix& matrix() const { return m_; }

 private:
  CMatrix m_;
};

}  // namespace topo
