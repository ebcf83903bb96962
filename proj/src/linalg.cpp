#include "topo/linalg.hpp"

#include <lapacke.h>

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

namespace topo {

namespace {

// zheevr rather than zheevd: the divide-and-conquer driver shipped with the
// OpenBLAS LAPACK here returns wrong eigenvectors from n of a few hundred.
EigenSystem zheevr(const CMatrix& h, char jobz) {
  if (h.rows() != h.cols()) throw PreconditionError("eigensolve: matrix is not square");
  const lapack_int n = static_cast<lapack_int>(h.rows());
  EigenSystem out;
  out.values.resize(n);
  if (n == 0) return out;
  CMatrix a = h;
  CMatrix z(jobz == 'V' ? n : 1, jobz == 'V' ? n : 1);
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(n));
  lapack_int found = 0;
  const lapack_int info = LAPACKE_zheevr(
      LAPACK_COL_MAJOR, jobz, 'A', 'L', n, reinterpret_cast<lapack_complex_double*>(a.data()), n, 0.0, 0.0, 0, 0,
      0.0, &found, out.values.data(), reinterpret_cast<lapack_complex_double*>(z.data()), z.rows(), support.data());
  if (info != 0 || found != n) throw NumericalError("zheevr failed with info = " + std::to_string(info));
  if (jobz == 'V') out.vectors = std::move(z);
  return out;
}

}  // namespace

EigenSystem hermitian_eigensystem(const CMatrix& h) { return zheevr(h, 'V'); }

RVector hermitian_eigenvalues(const CMatrix& h) { return zheevr(h, 'N').values; }

double hermiticity_defect(const CMatrix& h) {
  if (h.rows() != h.cols()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (Eigen::Index j = 0; j < h.cols(); ++j)
    for (Eigen::Index i = j; i < h.rows(); ++i) worst = std::max(worst, std::abs(h(i, j) - std::conj(h(j, i))));
  return worst;
}

double max_abs(const CMatrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

CMatrix LinearMap::columns(const std::vector<Eigen::Index>& cols) const {
  CMatrix unit = CMatrix::Zero(size(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) unit(cols[c], static_cast<Eigen::Index>(c)) = 1.0;
  return apply(unit);
}

DenseMap::DenseMap(CMatrix m) : m_(std::move(m)) {
  if (m_.rows() != m_.cols()) throw PreconditionError("DenseMap: matrix is not square");
}

CMatrix DenseMap::columns(const std::vector<Eigen::Index>& cols) const { return m_(Eigen::all, cols); }

}  // namespace topo
