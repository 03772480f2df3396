#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scarkit/errors.hpp"
#include "scarkit/types.hpp"

namespace scarkit {

/// Which space an operator acts on: the full product space or the
/// constrained subspace in its enumerated basis.
enum class BasisTag { full, constrained };

inline const char* to_string(BasisTag t) { return t == BasisTag::full ? "full" : "constrained"; }

/// Complex sparse matrix tagged with its basis. Entries are canonical:
/// sorted, duplicates summed, magnitudes below kDropTolerance removed.
/// Immutable once built.
class SparseOperator {
 public:
  SparseOperator() = default;

  SparseOperator(SparseXc mat, BasisTag tag) : mat_(std::move(mat)), tag_(tag) { canonicalize(); }

  static SparseOperator from_triplets(Index rows, Index cols, const std::vector<Triplet>& entries, BasisTag tag) {
    SparseXc m(rows, cols);
    m.setFromTriplets(entries.begin(), entries.end());
    return SparseOperator(std::move(m), tag);
  }

  static SparseOperator identity(Index dim, BasisTag tag) {
    SparseXc m(dim, dim);
    m.setIdentity();
    return SparseOperator(std::move(m), tag);
  }

  static SparseOperator zero(Index dim, BasisTag tag) { return SparseOperator(SparseXc(dim, dim), tag); }

  /// Diagonal operator from a vector of real or complex values.
  template <typename Vec>
  static SparseOperator diagonal(const Vec& values, BasisTag tag) {
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(values.size()));
    for (Index i = 0; i < static_cast<Index>(values.size()); ++i) t.emplace_back(i, i, cplx(values[i]));
    return from_triplets(static_cast<Index>(values.size()), static_cast<Index>(values.size()), t, tag);
  }

  Index rows() const { return mat_.rows(); }
  Index cols() const { return mat_.cols(); }
  Index nnz() const { return mat_.nonZeros(); }
  BasisTag tag() const { return tag_; }
  bool hermitian() const { return hermitian_; }
  const SparseXc& matrix() const { return mat_; }

  SparseOperator adjoint() const { return SparseOperator(SparseXc(mat_.adjoint()), tag_); }

  MatrixXc dense() const { return MatrixXc(mat_); }

  VectorXc apply(const VectorXc& v) const {
    if (v.size() != cols()) throw ConsistencyError("operator/vector dimension mismatch");
    return mat_ * v;
  }

  /// <v|O|v>, real part only (callers use it on Hermitian O).
  double expectation(const VectorXc& v) const { return v.dot(apply(v)).real(); }

  double max_abs() const {
    double m = 0.0;
    for (Index k = 0; k < mat_.outerSize(); ++k)
      for (SparseXc::InnerIterator it(mat_, k); it; ++it) m = std::max(m, std::abs(it.value()));
    return m;
  }

  cplx trace() const {
    cplx t{0.0, 0.0};
    for (Index k = 0; k < std::min(rows(), cols()); ++k) t += mat_.coeff(k, k);
    return t;
  }

  friend SparseOperator operator+(const SparseOperator& a, const SparseOperator& b) {
    check_same(a, b);
    return SparseOperator(SparseXc(a.mat_ + b.mat_), a.tag_);
  }
  friend SparseOperator operator-(const SparseOperator& a, const SparseOperator& b) {
    check_same(a, b);
    return SparseOperator(SparseXc(a.mat_ - b.mat_), a.tag_);
  }
  friend SparseOperator operator*(const SparseOperator& a, const SparseOperator& b) {
    if (a.tag_ != b.tag_ || a.cols() != b.rows()) throw ConsistencyError("operator product: basis mismatch");
    return SparseOperator(SparseXc(a.mat_ * b.mat_), a.tag_);
  }
  friend SparseOperator operator*(cplx s, const SparseOperator& a) { return SparseOperator(SparseXc(s * a.mat_), a.tag_); }
  friend SparseOperator operator*(double s, const SparseOperator& a) { return cplx(s) * a; }

  /// Max-norm of A - A^dagger.
  double hermiticity_defect() const {
    if (rows() != cols()) return INFINITY;
    return SparseXc(mat_ - SparseXc(mat_.adjoint())).coeffs().size() == 0
               ? 0.0
               : SparseOperator(SparseXc(mat_ - SparseXc(mat_.adjoint())), tag_).max_abs();
  }

  bool is_hermitian(double tol = 1e-12) const { return hermiticity_defect() <= tol; }

  /// Re-evaluates and stores the Hermitian flag.
  SparseOperator& mark_hermitian(double tol = 1e-12) {
    hermitian_ = is_hermitian(tol);
    return *this;
  }

  /// Writes a Matrix Market coordinate file body (1-based indices).
  void write_matrix_market(std::ostream& os) const {
    os << "%%MatrixMarket matrix coordinate complex general\n";
    os << "% basis " << to_string(tag_) << "\n";
    os << rows() << ' ' << cols() << ' ' << nnz() << '\n';
    os.precision(17);
    for (Index k = 0; k < mat_.outerSize(); ++k)
      for (SparseXc::InnerIterator it(mat_, k); it; ++it)
        os << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value().real() << ' ' << it.value().imag() << '\n';
  }

 private:
  static void check_same(const SparseOperator& a, const SparseOperator& b) {
    if (a.tag_ != b.tag_ || a.rows() != b.rows() || a.cols() != b.cols())
      throw ConsistencyError("operator sum: basis mismatch");
  }

  void canonicalize() {
    mat_.prune([](Index, Index, const cplx& v) { return std::abs(v) >= kDropTolerance; });
    mat_.makeCompressed();
  }

  SparseXc mat_;
  BasisTag tag_{BasisTag::full};
  bool hermitian_{false};
};

/// Max-norm distance between two operators on the same basis.
inline double max_abs_diff(const SparseOperator& a, const SparseOperator& b) { return (a - b).max_abs(); }

/// [A, B] = AB - BA.
inline SparseOperator commutator(const SparseOperator& a, const SparseOperator& b) { return a * b - b * a; }

}  // namespace scarkit
