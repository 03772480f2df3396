#pragma once

#include <complex>

#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include "scarkit/errors.hpp"
#include "scarkit/types.hpp"

namespace scarkit {

/// Dense symmetric eigensolve (divide and conquer). On return a holds the
/// eigenvectors; eigenvalues ascending.
inline VectorXr eigh_inplace(MatrixXr& a) {
  const lapack_int n = static_cast<lapack_int>(a.rows());
  VectorXr w(n);
  if (n == 0) return w;
  const lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'U', n, a.data(), n, w.data());
  if (info != 0) throw ConvergenceError("dsyevd failed with info " + std::to_string(info), static_cast<double>(info));
  return w;
}

inline VectorXr eigh_inplace(MatrixXc& a) {
  const lapack_int n = static_cast<lapack_int>(a.rows());
  VectorXr w(n);
  if (n == 0) return w;
  const lapack_int info = LAPACKE_zheevd(LAPACK_COL_MAJOR, 'V', 'U', n, a.data(), n, w.data());
  if (info != 0) throw ConvergenceError("zheevd failed with info " + std::to_string(info), static_cast<double>(info));
  return w;
}

/// Eigenvalues only of a small Hermitian matrix.
inline VectorXr eigvalsh(const MatrixXc& a) {
  Eigen::SelfAdjointEigenSolver<MatrixXc> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

}  // namespace scarkit
