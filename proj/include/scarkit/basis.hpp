#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "scarkit/errors.hpp"
#include "scarkit/model_spec.hpp"
#include "scarkit/types.hpp"

namespace scarkit {

/// Default ceiling on the number of enumerated constrained states.
inline constexpr std::int64_t kDefaultBasisCap = 20'000'000;
/// Default ceiling on the full product-space dimension for full-basis operators.
inline constexpr std::int64_t kDefaultFullCap = 1 << 21;

/// Spin-j matrices in the |m> basis, label 0 = m = +j.
struct SpinMatrices {
  MatrixXc sx, sy, sz, sp, sm;
};

inline SpinMatrices spin_matrices(Spin j) {
  const int d = j.local_dim();
  const double jj = j.value();
  SpinMatrices s;
  s.sp = MatrixXc::Zero(d, d);
  s.sz = MatrixXc::Zero(d, d);
  for (int a = 0; a < d; ++a) {
    const double m = j.m_of(a);
    s.sz(a, a) = m;
    // s+ |m> = sqrt(j(j+1) - m(m+1)) |m+1>; m+1 has label a-1.
    if (a > 0) s.sp(a - 1, a) = std::sqrt(jj * (jj + 1) - m * (m + 1));
  }
  s.sm = s.sp.adjoint();
  s.sx = 0.5 * (s.sp + s.sm);
  s.sy = cplx(0, -0.5) * (s.sp - s.sm);
  return s;
}

/// The lattice a model actually lives on after any logical re-encoding: number
/// of (logical) sites, local dimension, bonds, forbidden bond patterns and
/// on-site Hamiltonians. For spin-chain-blockade and generic-bond-blockade this
/// is the physical chain; for hd-pxp each site is a physical pair.
struct SiteModel {
  Family family{Family::spin_chain_blockade};
  Spin j{};
  int n_sites{0};
  int d{0};
  bool periodic{true};
  double c{200.0};
  std::vector<std::array<int, 2>> bonds;
  /// Forbidden label pairs (a, b) on every bond; pi_k = sum |ab><ab|.
  std::vector<std::pair<int, int>> forbidden;
  std::vector<MatrixXc> h;  // one per site

  std::int64_t full_dim() const {
    std::int64_t n = 1;
    for (int k = 0; k < n_sites; ++k) {
      if (n > (std::int64_t{1} << 62) / d) return -1;
      n *= d;
    }
    return n;
  }

  bool is_forbidden(int a, int b) const {
    return std::find(forbidden.begin(), forbidden.end(), std::make_pair(a, b)) != forbidden.end();
  }
};

namespace detail {

inline std::vector<std::array<int, 2>> chain_bonds(int n, bool periodic) {
  std::vector<std::array<int, 2>> b;
  if (n < 2) return b;
  for (int k = 0; k + 1 < n; ++k) b.push_back({k, k + 1});
  if (periodic) b.push_back({n - 1, 0});
  return b;
}

/// hd-pxp logical site of dimension 4j+1: labels 0..2j-1 are a_m (m = j..-j+1),
/// 2j..4j-1 are b_m, 4j is c. a_m = |-j, m>, b_m = |m, -j>, c = |-j, -j>.
struct HdEncoding {
  Spin j;
  int two_j() const { return j.twice; }
  int dim() const { return 2 * j.twice + 1; }
  /// Physical labels (first, second) of a logical label; label 2j = m=-j.
  std::pair<int, int> physical(int logical) const {
    const int tj = two_j();
    if (logical < tj) return {tj, logical};
    if (logical < 2 * tj) return {logical - tj, tj};
    return {tj, tj};
  }
  int logical(int first, int second) const {
    const int tj = two_j();
    if (first == tj && second == tj) return 2 * tj;
    if (first == tj) return second;
    if (second == tj) return tj + first;
    return -1;  // both excited: eliminated at encoding
  }
  bool is_a(int l) const { return l < two_j(); }
  bool is_b(int l) const { return l >= two_j() && l < 2 * two_j(); }
};

inline std::string hd_label_name(Spin j, int l) {
  HdEncoding enc{j};
  if (l == 2 * j.twice) return "c";
  const int phys = enc.is_a(l) ? l : l - j.twice;
  const Spin sj = j;
  const double m = sj.m_of(phys);
  char buf[32];
  if (j.twice % 2 == 0)
    std::snprintf(buf, sizeof buf, "%c%d", enc.is_a(l) ? 'a' : 'b', static_cast<int>(std::lround(m)));
  else
    std::snprintf(buf, sizeof buf, "%c%d/2", enc.is_a(l) ? 'a' : 'b', static_cast<int>(std::lround(2 * m)));
  return buf;
}

}  // namespace detail

/// Logical on-site Hamiltonian of hd-pxp: |-j><-j| (x) s^x + s^x (x) |-j><-j|
/// restricted to the 4j+1 encoded pair states.
inline MatrixXc hdpxp_local_hamiltonian(Spin j) {
  const detail::HdEncoding enc{j};
  const int d = j.local_dim();
  const int D = enc.dim();
  const MatrixXc sx = spin_matrices(j).sx;
  const int low = j.twice;  // label of m = -j
  MatrixXc h = MatrixXc::Zero(D, D);
  for (int col = 0; col < D; ++col) {
    const auto [f, s] = enc.physical(col);
    for (int r = 0; r < d; ++r) {
      if (f == low && sx(r, s) != 0.0) {
        const int row = enc.logical(f, r);
        if (row >= 0) h(row, col) += sx(r, s);
      }
      if (s == low && sx(r, f) != 0.0) {
        const int row = enc.logical(r, s);
        if (row >= 0) h(row, col) += sx(r, f);
      }
    }
  }
  return h;
}

/// Resolves a validated ModelSpec into the lattice it is simulated on.
inline SiteModel make_site_model(const ModelSpec& spec) {
  spec.validate();
  SiteModel m;
  m.family = spec.family;
  m.j = spec.j;
  m.c = spec.c;
  m.periodic = spec.boundary == Boundary::periodic;
  switch (spec.family) {
    case Family::spin_chain_blockade: {
      m.n_sites = spec.n_sites;
      m.d = spec.j.local_dim();
      m.forbidden = {{0, spec.j.twice}};  // (m=+j, m=-j)
      m.h.assign(m.n_sites, spin_matrices(spec.j).sx);
      break;
    }
    case Family::generic_bond_blockade: {
      m.n_sites = spec.n_sites;
      m.d = spec.j.local_dim();
      for (const auto& v : spec.bond_states) {
        Index nz = -1;
        for (Index k = 0; k < v.size(); ++k) {
          if (std::abs(v(k)) > 1e-12) {
            if (nz >= 0) throw ValidationError("bond_states: each forbidden configuration must be a single product basis state");
            nz = k;
          }
        }
        if (nz < 0) throw ValidationError("bond_states: zero vector");
        if (std::abs(std::abs(v(nz)) - 1.0) > 1e-12)
          throw ValidationError("bond_states: vector is not normalized, so |v><v| is not a projector");
        const std::pair<int, int> ab{static_cast<int>(nz / m.d), static_cast<int>(nz % m.d)};
        if (m.is_forbidden(ab.first, ab.second)) throw ValidationError("bond_states: duplicate configuration");
        m.forbidden.push_back(ab);
      }
      if (spec.local_hamiltonians.size() == 1) m.h.assign(m.n_sites, spec.local_hamiltonians.front());
      else m.h = spec.local_hamiltonians;
      break;
    }
    case Family::hd_pxp: {
      const detail::HdEncoding enc{spec.j};
      m.n_sites = spec.n_sites / 2;
      m.d = enc.dim();
      for (int a = 0; a < m.d; ++a)
        for (int b = 0; b < m.d; ++b)
          if (enc.is_a(a) && enc.is_b(b)) m.forbidden.emplace_back(a, b);
      m.h.assign(m.n_sites, hdpxp_local_hamiltonian(spec.j));
      break;
    }
  }
  m.bonds = detail::chain_bonds(m.n_sites, m.periodic);
  return m;
}

/// Digits of a full-space index, site 0 most significant.
struct Radix {
  int n{0};
  int d{0};
  std::vector<std::uint64_t> pow;  // pow[k] = d^(n-1-k): weight of site k

  Radix() = default;
  Radix(int n_sites, int local_dim) : n(n_sites), d(local_dim), pow(n_sites) {
    std::uint64_t p = 1;
    for (int k = n - 1; k >= 0; --k) {
      pow[k] = p;
      p *= static_cast<std::uint64_t>(d);
    }
  }
  int digit(std::uint64_t idx, int site) const { return static_cast<int>((idx / pow[site]) % d); }
  std::uint64_t with_digit(std::uint64_t idx, int site, int value) const {
    return idx + (static_cast<std::int64_t>(value) - digit(idx, site)) * static_cast<std::int64_t>(pow[site]);
  }
};

/// Returns true when the product state with full index idx violates no blockade.
inline bool allowed(const SiteModel& m, const Radix& rx, std::uint64_t idx) {
  for (const auto& b : m.bonds)
    if (m.is_forbidden(rx.digit(idx, b[0]), rx.digit(idx, b[1]))) return false;
  return true;
}

/// Ordered list of blockade-free product states. States are stored by their
/// full-space index, which is lexicographic in the site labels.
class ConstrainedBasis {
 public:
  ConstrainedBasis() = default;
  ConstrainedBasis(SiteModel model, std::vector<std::uint64_t> states)
      : model_(std::move(model)), rx_(model_.n_sites, model_.d), states_(std::move(states)) {}

  Index dim() const { return static_cast<Index>(states_.size()); }
  const SiteModel& model() const { return model_; }
  const Radix& radix() const { return rx_; }
  const std::vector<std::uint64_t>& states() const { return states_; }
  std::uint64_t state(Index i) const { return states_[static_cast<std::size_t>(i)]; }

  /// Position of a full index, or -1 if it is not in the basis.
  Index index_of(std::uint64_t full_index) const {
    auto it = std::lower_bound(states_.begin(), states_.end(), full_index);
    if (it == states_.end() || *it != full_index) return -1;
    return static_cast<Index>(it - states_.begin());
  }

  std::vector<int> labels(Index i) const {
    std::vector<int> out(static_cast<std::size_t>(model_.n_sites));
    for (int k = 0; k < model_.n_sites; ++k) out[k] = rx_.digit(state(i), k);
    return out;
  }

  std::uint64_t full_index(const std::vector<int>& labels) const {
    if (static_cast<int>(labels.size()) != model_.n_sites) throw ValidationError("state: wrong number of site labels");
    std::uint64_t idx = 0;
    for (int k = 0; k < model_.n_sites; ++k) {
      if (labels[k] < 0 || labels[k] >= model_.d) throw ValidationError("state: site label out of range");
      idx += static_cast<std::uint64_t>(labels[k]) * rx_.pow[k];
    }
    return idx;
  }

  /// Human-readable label of a state, e.g. "(1,0,-1)" or "(b1,c,a0)".
  std::string describe(Index i) const {
    std::string s = "(";
    const auto lab = labels(i);
    for (std::size_t k = 0; k < lab.size(); ++k) {
      if (k) s += ',';
      if (model_.family == Family::hd_pxp) {
        s += detail::hd_label_name(model_.j, lab[k]);
      } else {
        const double m = model_.j.m_of(lab[k]);
        if (model_.j.twice % 2 == 0) s += std::to_string(static_cast<int>(std::lround(m)));
        else s += std::to_string(static_cast<int>(std::lround(2 * m))) + "/2";
      }
    }
    return s + ")";
  }

  /// Basis vector for a product state given by labels.
  VectorXc product_state(const std::vector<int>& labels) const {
    const Index i = index_of(full_index(labels));
    if (i < 0) throw ValidationError("state: product state violates the blockade");
    VectorXc v = VectorXc::Zero(dim());
    v(i) = 1.0;
    return v;
  }

 private:
  SiteModel model_;
  Radix rx_;
  std::vector<std::uint64_t> states_;
};

/// Enumerates every product state annihilated by all blockades, in
/// lexicographic order (site 0 most significant, label 0 = m = +j).
inline ConstrainedBasis enumerate_basis(const SiteModel& m, std::int64_t cap = kDefaultBasisCap) {
  if (m.n_sites < 1) throw ValidationError("n_sites must be >= 1");
  const Radix rx(m.n_sites, m.d);
  std::vector<std::uint64_t> out;
  std::vector<int> lab(static_cast<std::size_t>(m.n_sites), 0);
  // Depth-first over sites; the open-chain bonds are checked on the fly and the
  // wrap-around bond at the leaf.
  const bool wrap = m.periodic && m.n_sites >= 2;
  auto recurse = [&](auto&& self, int site, std::uint64_t idx) -> void {
    if (site == m.n_sites) {
      if (wrap && m.is_forbidden(lab[m.n_sites - 1], lab[0])) return;
      if (static_cast<std::int64_t>(out.size()) >= cap)
        throw CapacityError("constrained basis exceeds the cap of " + std::to_string(cap) + " states");
      out.push_back(idx);
      return;
    }
    for (int a = 0; a < m.d; ++a) {
      if (site > 0 && m.is_forbidden(lab[site - 1], a)) continue;
      lab[site] = a;
      self(self, site + 1, idx + static_cast<std::uint64_t>(a) * rx.pow[site]);
    }
  };
  recurse(recurse, 0, 0);
  return ConstrainedBasis(m, std::move(out));
}

inline ConstrainedBasis enumerate_basis(const ModelSpec& spec, std::int64_t cap = kDefaultBasisCap) {
  return enumerate_basis(make_site_model(spec), cap);
}

/// Constrained dimension from the bond transfer matrix T_ab = [(a,b) allowed]:
/// Tr T^N for periodic chains, sum of entries of T^(N-1) for open ones.
/// Exact in unsigned 128-bit arithmetic.
inline unsigned __int128 transfer_matrix_count_u128(const SiteModel& m) {
  using U = unsigned __int128;
  const int d = m.d;
  const int n = m.n_sites;
  if (n < 1) return 0;
  std::vector<U> t(static_cast<std::size_t>(d * d));
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) t[a * d + b] = m.is_forbidden(a, b) ? 0 : 1;
  auto mul = [d](const std::vector<U>& x, const std::vector<U>& y) {
    std::vector<U> z(static_cast<std::size_t>(d * d), 0);
    for (int a = 0; a < d; ++a)
      for (int k = 0; k < d; ++k)
        if (x[a * d + k])
          for (int b = 0; b < d; ++b) z[a * d + b] += x[a * d + k] * y[k * d + b];
    return z;
  };
  std::vector<U> p(static_cast<std::size_t>(d * d), 0);
  for (int a = 0; a < d; ++a) p[a * d + a] = 1;
  const bool periodic = m.periodic && n >= 2;
  const int power = periodic ? n : n - 1;
  for (int k = 0; k < power; ++k) p = mul(p, t);
  U total = 0;
  if (periodic) {
    for (int a = 0; a < d; ++a) total += p[a * d + a];
  } else {
    for (const U v : p) total += v;
  }
  return total;
}

inline std::uint64_t transfer_matrix_count(const SiteModel& m) {
  const auto v = transfer_matrix_count_u128(m);
  if (v > std::numeric_limits<std::uint64_t>::max()) throw CapacityError("transfer-matrix count overflows 64 bits");
  return static_cast<std::uint64_t>(v);
}

}  // namespace scarkit
