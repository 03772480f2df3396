#pragma once

#include <complex>
#include <cstdint>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace scarkit {

using cplx = std::complex<double>;
using Index = std::int64_t;

using VectorXc = Eigen::VectorXcd;
using MatrixXc = Eigen::MatrixXcd;
using VectorXr = Eigen::VectorXd;
using MatrixXr = Eigen::MatrixXd;
using SparseXc = Eigen::SparseMatrix<cplx, Eigen::RowMajor, Index>;
using Triplet = Eigen::Triplet<cplx, Index>;

inline constexpr cplx kI{0.0, 1.0};

/// Entries below this magnitude are never stored.
inline constexpr double kDropTolerance = 1e-14;

}  // namespace scarkit
