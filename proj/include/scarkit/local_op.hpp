#pragma once

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

#include "scarkit/basis.hpp"
#include "scarkit/errors.hpp"
#include "scarkit/sparse_operator.hpp"
#include "scarkit/types.hpp"

namespace scarkit {

/// Operator acting on a few sites of the lattice, stored as a dense matrix on
/// the local product space of its support (first support site most
/// significant). The support may be in any order.
struct LocalOp {
  std::vector<int> support;
  MatrixXc m;
};

namespace detail {

inline int ipow(int d, int n) {
  int p = 1;
  for (int k = 0; k < n; ++k) p *= d;
  return p;
}

inline int local_digit(int config, int pos, int n, int d) { return (config / ipow(d, n - 1 - pos)) % d; }

}  // namespace detail

inline LocalOp site_op(int site, const MatrixXc& a) { return {{site}, a}; }

inline LocalOp bond_op(int s1, int s2, const MatrixXc& a) { return {{s1, s2}, a}; }

/// Rewrites op on a larger support (which must contain op.support).
inline LocalOp expand(const LocalOp& op, const std::vector<int>& support, int d) {
  const int n = static_cast<int>(support.size());
  const int n_op = static_cast<int>(op.support.size());
  std::vector<int> pos(n_op);
  for (int q = 0; q < n_op; ++q) {
    auto it = std::find(support.begin(), support.end(), op.support[q]);
    if (it == support.end()) throw ConsistencyError("expand: support does not contain the operator's sites");
    pos[q] = static_cast<int>(it - support.begin());
  }
  const int dim = detail::ipow(d, n);
  MatrixXc out = MatrixXc::Zero(dim, dim);
  for (int col = 0; col < dim; ++col) {
    int lc = 0;
    for (int q = 0; q < n_op; ++q) lc = lc * d + detail::local_digit(col, pos[q], n, d);
    for (int lr = 0; lr < op.m.rows(); ++lr) {
      const cplx v = op.m(lr, lc);
      if (v == 0.0) continue;
      int row = col;
      for (int q = 0; q < n_op; ++q) {
        const int nd = detail::local_digit(lr, q, n_op, d);
        const int od = detail::local_digit(col, pos[q], n, d);
        row += (nd - od) * detail::ipow(d, n - 1 - pos[q]);
      }
      out(row, col) += v;
    }
  }
  return {support, out};
}

inline std::vector<int> merged_support(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> s = a;
  for (int x : b)
    if (std::find(s.begin(), s.end(), x) == s.end()) s.push_back(x);
  std::sort(s.begin(), s.end());
  return s;
}

inline LocalOp product(const LocalOp& a, const LocalOp& b, int d) {
  const auto s = merged_support(a.support, b.support);
  return {s, expand(a, s, d).m * expand(b, s, d).m};
}

inline LocalOp sum(const LocalOp& a, const LocalOp& b, int d) {
  const auto s = merged_support(a.support, b.support);
  return {s, expand(a, s, d).m + expand(b, s, d).m};
}

inline LocalOp scaled(cplx s, const LocalOp& a) { return {a.support, s * a.m}; }

inline LocalOp adjoint(const LocalOp& a) { return {a.support, a.m.adjoint()}; }

inline LocalOp identity_on(const std::vector<int>& support, int d) {
  const int dim = detail::ipow(d, static_cast<int>(support.size()));
  return {support, MatrixXc::Identity(dim, dim)};
}

/// LocalOp prepared for repeated application to full-space indices.
class CompiledOp {
 public:
  CompiledOp(const LocalOp& op, const Radix& rx) : support_(op.support), rx_(&rx) {
    const int n = static_cast<int>(support_.size());
    cols_.resize(static_cast<std::size_t>(op.m.cols()));
    for (int lc = 0; lc < op.m.cols(); ++lc) {
      for (int lr = 0; lr < op.m.rows(); ++lr) {
        const cplx v = op.m(lr, lc);
        if (std::abs(v) < kDropTolerance) continue;
        std::int64_t shift = 0;
        for (int q = 0; q < n; ++q) {
          const int nd = detail::local_digit(lr, q, n, rx.d);
          const int od = detail::local_digit(lc, q, n, rx.d);
          shift += static_cast<std::int64_t>(nd - od) * static_cast<std::int64_t>(rx.pow[support_[q]]);
        }
        cols_[lc].push_back({shift, v});
      }
    }
  }

  /// Calls emit(new_index, amplitude) for every nonzero of O|idx>.
  template <typename F>
  void apply(std::uint64_t idx, F&& emit) const {
    int lc = 0;
    for (int s : support_) lc = lc * rx_->d + rx_->digit(idx, s);
    for (const auto& [shift, v] : cols_[lc]) emit(static_cast<std::uint64_t>(static_cast<std::int64_t>(idx) + shift), v);
  }

 private:
  struct Entry {
    std::int64_t shift;
    cplx value;
  };
  std::vector<int> support_;
  const Radix* rx_;
  std::vector<std::vector<Entry>> cols_;
};

/// Sum of local terms as a full-product-space operator.
inline SparseOperator full_operator(const std::vector<LocalOp>& terms, const SiteModel& m,
                                    std::int64_t cap = kDefaultFullCap) {
  const std::int64_t dim = m.full_dim();
  if (dim < 0 || dim > cap)
    throw CapacityError("full product space of dimension " + std::to_string(dim) + " exceeds the cap of " +
                        std::to_string(cap) + "; use constrained-basis workflows");
  const Radix rx(m.n_sites, m.d);
  std::vector<CompiledOp> ops;
  ops.reserve(terms.size());
  for (const auto& t : terms) ops.emplace_back(t, rx);
  std::vector<Triplet> trip;
  for (std::int64_t i = 0; i < dim; ++i)
    for (const auto& op : ops)
      op.apply(static_cast<std::uint64_t>(i), [&](std::uint64_t r, cplx v) { trip.emplace_back(static_cast<Index>(r), i, v); });
  return SparseOperator::from_triplets(dim, dim, trip, BasisTag::full);
}

/// Sum of local terms restricted to the constrained subspace, P O P in the
/// enumerated basis.
inline SparseOperator constrained_operator(const std::vector<LocalOp>& terms, const ConstrainedBasis& basis) {
  std::vector<CompiledOp> ops;
  ops.reserve(terms.size());
  for (const auto& t : terms) ops.emplace_back(t, basis.radix());
  std::vector<Triplet> trip;
  for (Index i = 0; i < basis.dim(); ++i)
    for (const auto& op : ops)
      op.apply(basis.state(i), [&](std::uint64_t r, cplx v) {
        const Index row = basis.index_of(r);
        if (row >= 0) trip.emplace_back(row, i, v);
      });
  return SparseOperator::from_triplets(basis.dim(), basis.dim(), trip, BasisTag::constrained);
}

/// Full-space index of each constrained basis state, for embedding.
inline VectorXc embed(const VectorXc& v, const ConstrainedBasis& basis) {
  if (v.size() != basis.dim()) throw ConsistencyError("embed: vector is not in this constrained basis");
  const std::int64_t dim = basis.model().full_dim();
  VectorXc out = VectorXc::Zero(dim);
  for (Index i = 0; i < basis.dim(); ++i) out(static_cast<Index>(basis.state(i))) = v(i);
  return out;
}

inline MatrixXc embed_columns(const MatrixXc& v, const ConstrainedBasis& basis) {
  const std::int64_t dim = basis.model().full_dim();
  MatrixXc out = MatrixXc::Zero(dim, v.cols());
  for (Index i = 0; i < basis.dim(); ++i) out.row(static_cast<Index>(basis.state(i))) = v.row(i);
  return out;
}

/// Inverse of embed; components outside the subspace are dropped.
inline VectorXc restrict_vector(const VectorXc& full, const ConstrainedBasis& basis) {
  VectorXc out(basis.dim());
  for (Index i = 0; i < basis.dim(); ++i) out(i) = full(static_cast<Index>(basis.state(i)));
  return out;
}

}  // namespace scarkit
