#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <unsupported/Eigen/KroneckerProduct>

#include "scarkit/basis.hpp"
#include "scarkit/local_op.hpp"
#include "scarkit/sparse_operator.hpp"

namespace scarkit {

// ---------------------------------------------------------------------------
// Blockades and projectors

/// pi_b = sum over forbidden (a,b) of |ab><ab| on bond b.
inline LocalOp blockade_op(const SiteModel& m, int bond) {
  const int d = m.d;
  MatrixXc p = MatrixXc::Zero(d * d, d * d);
  for (const auto& [a, b] : m.forbidden) p(a * d + b, a * d + b) = 1.0;
  const auto& bd = m.bonds.at(static_cast<std::size_t>(bond));
  return bond_op(bd[0], bd[1], p);
}

inline std::vector<LocalOp> blockade_ops(const SiteModel& m) {
  std::vector<LocalOp> out;
  for (int b = 0; b < static_cast<int>(m.bonds.size()); ++b) out.push_back(blockade_op(m, b));
  return out;
}

/// Bonds whose blockade does not commute with h_k (checked, not assumed).
inline std::vector<int> noncommuting_bonds(const SiteModel& m, int site) {
  std::vector<int> out;
  for (int b = 0; b < static_cast<int>(m.bonds.size()); ++b) {
    const auto& bd = m.bonds[b];
    if (bd[0] != site && bd[1] != site) continue;
    const LocalOp pi = blockade_op(m, b);
    const LocalOp h = site_op(site, m.h[site]);
    const LocalOp comm = sum(product(h, pi, m.d), scaled(-1.0, product(pi, h, m.d)), m.d);
    if (comm.m.cwiseAbs().maxCoeff() > 1e-13) out.push_back(b);
  }
  return out;
}

/// Pi_k = I - prod (I - pi_m) over the blockades that do not commute with h_k.
/// Support always includes site k.
inline LocalOp violation_projector(const SiteModel& m, int site) {
  const auto bonds = noncommuting_bonds(m, site);
  std::vector<int> support{site};
  for (int b : bonds) support = merged_support(support, {m.bonds[b][0], m.bonds[b][1]});
  LocalOp keep = identity_on(support, m.d);
  for (int b : bonds) {
    const LocalOp pi = expand(blockade_op(m, b), support, m.d);
    keep.m = keep.m * (MatrixXc::Identity(keep.m.rows(), keep.m.cols()) - pi.m);
  }
  return {support, MatrixXc::Identity(keep.m.rows(), keep.m.cols()) - keep.m};
}

/// Diagonal projector P onto the constrained subspace, full basis.
inline SparseOperator constraint_projector(const SiteModel& m, std::int64_t cap = kDefaultFullCap) {
  const std::int64_t dim = m.full_dim();
  if (dim < 0 || dim > cap)
    throw CapacityError("full product space of dimension " + std::to_string(dim) + " exceeds the cap of " + std::to_string(cap));
  const Radix rx(m.n_sites, m.d);
  VectorXr diag(dim);
  for (std::int64_t i = 0; i < dim; ++i) diag(i) = allowed(m, rx, static_cast<std::uint64_t>(i)) ? 1.0 : 0.0;
  return SparseOperator::diagonal(diag, BasisTag::full).mark_hermitian();
}

struct Projectors {
  SparseOperator P;                  // constrained-subspace projector
  std::vector<SparseOperator> pi;    // one per bond
  std::vector<SparseOperator> Pi;    // one per site
};

inline Projectors build_projectors(const SiteModel& m, std::int64_t cap = kDefaultFullCap) {
  Projectors p;
  p.P = constraint_projector(m, cap);
  for (int b = 0; b < static_cast<int>(m.bonds.size()); ++b) p.pi.push_back(full_operator({blockade_op(m, b)}, m, cap).mark_hermitian());
  for (int k = 0; k < m.n_sites; ++k) p.Pi.push_back(full_operator({violation_projector(m, k)}, m, cap).mark_hermitian());
  return p;
}

// ---------------------------------------------------------------------------
// Hamiltonians

inline std::vector<LocalOp> onsite_terms(const SiteModel& m) {
  std::vector<LocalOp> out;
  for (int k = 0; k < m.n_sites; ++k) out.push_back(site_op(k, m.h[k]));
  return out;
}

/// Unconstrained H0 = sum_k h_k in the full basis.
inline SparseOperator build_h0(const SiteModel& m, std::int64_t cap = kDefaultFullCap) {
  return full_operator(onsite_terms(m), m, cap).mark_hermitian();
}

/// H = sum_k (1 - Pi_k) h_k (1 - Pi_k) in the full basis; equals P H0 P on the
/// constrained subspace and commutes with P.
inline SparseOperator build_full_hamiltonian(const SiteModel& m, std::int64_t cap = kDefaultFullCap) {
  std::vector<LocalOp> terms;
  for (int k = 0; k < m.n_sites; ++k) {
    const LocalOp Pi = violation_projector(m, k);
    const LocalOp q{Pi.support, MatrixXc::Identity(Pi.m.rows(), Pi.m.cols()) - Pi.m};
    terms.push_back(product(product(q, site_op(k, m.h[k]), m.d), q, m.d));
  }
  return full_operator(terms, m, cap).mark_hermitian();
}

/// Constrained Hamiltonian P H0 P in the enumerated basis.
inline SparseOperator build_constrained_hamiltonian(const ConstrainedBasis& basis) {
  return constrained_operator(onsite_terms(basis.model()), basis).mark_hermitian();
}

// ---------------------------------------------------------------------------
// Dissipation channels

/// spin_chain: channels built from the single bond blockade,
///   gamma1 = c sqrt(2j), L1 = pi_k - (i sqrt2 / c) M_k;  gamma2 = -2 sqrt(2j)/c, L2 = M_k.
/// general: gamma1 = 2c, L1 = Pi_k - (i/c) Pi_k h_k;  gamma2 = -2/c, L2 = Pi_k h_k.
enum class Recipe { spin_chain, general };

inline const char* to_string(Recipe r) { return r == Recipe::spin_chain ? "spin-chain" : "general"; }

inline Recipe recipe_from_string(const std::string& s) {
  if (s == "spin-chain") return Recipe::spin_chain;
  if (s == "general") return Recipe::general;
  throw ValidationError("recipe: unknown value '" + s + "' (expected spin-chain or general)");
}

inline Recipe default_recipe(const SiteModel& m) {
  return m.family == Family::spin_chain_blockade ? Recipe::spin_chain : Recipe::general;
}

struct Channel {
  double gamma{0.0};
  std::vector<LocalOp> L;
};

struct Channels {
  Recipe recipe{Recipe::spin_chain};
  Channel positive;  // channel 1, gamma > 0
  Channel negative;  // channel 2, gamma < 0
};

/// M_k = (1/sqrt j) pi_k (s^x_k + s^x_{k+1}) = |x><y| on bond k, with
/// |x> = |j,-j>, |y> = (|j,-j+1> + |j-1,-j>)/sqrt2.
inline LocalOp mapping_op(const SiteModel& m, int bond) {
  if (m.family != Family::spin_chain_blockade) throw ValidationError("mapping operators M_k exist only for spin-chain-blockade");
  const int d = m.d;
  const MatrixXc sx = spin_matrices(m.j).sx;
  const MatrixXc id = MatrixXc::Identity(d, d);
  const MatrixXc hop = Eigen::kroneckerProduct(sx, id).eval() + Eigen::kroneckerProduct(id, sx).eval();
  const LocalOp pi = blockade_op(m, bond);
  return {pi.support, (1.0 / std::sqrt(m.j.value())) * pi.m * hop};
}

inline Channels build_channels(const SiteModel& m, Recipe recipe) {
  if (!(m.c > 0.0)) throw ValidationError("c must be positive");
  const double c = m.c;
  Channels ch;
  ch.recipe = recipe;
  if (recipe == Recipe::spin_chain) {
    if (m.family != Family::spin_chain_blockade) throw ValidationError("the spin-chain recipe needs family spin-chain-blockade");
    const double tj = 2.0 * m.j.value();
    ch.positive.gamma = c * std::sqrt(tj);
    ch.negative.gamma = -2.0 * std::sqrt(tj) / c;
    for (int b = 0; b < static_cast<int>(m.bonds.size()); ++b) {
      const LocalOp M = mapping_op(m, b);
      const LocalOp pi = blockade_op(m, b);
      ch.positive.L.push_back({pi.support, pi.m - kI * (std::sqrt(2.0) / c) * M.m});
      ch.negative.L.push_back(M);
    }
  } else {
    ch.positive.gamma = 2.0 * c;
    ch.negative.gamma = -2.0 / c;
    for (int k = 0; k < m.n_sites; ++k) {
      const LocalOp Pi = violation_projector(m, k);
      const LocalOp Pih = product(Pi, site_op(k, m.h[k]), m.d);
      ch.positive.L.push_back(sum(Pi, scaled(-kI / c, Pih), m.d));
      ch.negative.L.push_back(Pih);
    }
  }
  return ch;
}

/// L^dagger L for every operator of a channel.
inline std::vector<LocalOp> ldagl_terms(const Channel& ch, int d) {
  std::vector<LocalOp> out;
  for (const auto& L : ch.L) out.push_back(product(adjoint(L), L, d));
  return out;
}

/// Quasi-particle counter terms N_k = L_{k,2}^dagger L_{k,2}.
inline std::vector<LocalOp> counter_terms(const Channels& ch, int d) { return ldagl_terms(ch.negative, d); }

inline SparseOperator build_counter_full(const SiteModel& m, const Channels& ch, std::int64_t cap = kDefaultFullCap) {
  return full_operator(counter_terms(ch, m.d), m, cap).mark_hermitian();
}

/// P N P in the constrained basis; only diagonal elements of eigenstates use it.
inline SparseOperator build_counter_constrained(const ConstrainedBasis& basis, const Channels& ch) {
  return constrained_operator(counter_terms(ch, basis.model().d), basis).mark_hermitian();
}

enum class NonHermitian { HN, Hplus, HplusPrime };

inline NonHermitian nonhermitian_from_string(const std::string& s) {
  if (s == "HN") return NonHermitian::HN;
  if (s == "Hplus") return NonHermitian::Hplus;
  if (s == "HplusPrime") return NonHermitian::HplusPrime;
  throw ValidationError("variant: unknown value '" + s + "' (expected HN, Hplus or HplusPrime)");
}

/// Non-Hermitian Hamiltonians in the full basis:
///   HN = H0 - (i/2) sum_sigma gamma_sigma sum_k L^dag L,
///   Hplus = H0 - (i/2) gamma1 sum_k L1^dag L1 = HN - (i/2)|gamma2| N,
///   HplusPrime = P H0 P - (i/2) gamma' sum_k L2^dag L2, gamma' = -gamma2.
inline SparseOperator build_nonhermitian(const SiteModel& m, const Channels& ch, NonHermitian variant,
                                         std::int64_t cap = kDefaultFullCap) {
  const int d = m.d;
  auto damp = [&](const Channel& c, double gamma) {
    std::vector<LocalOp> t = ldagl_terms(c, d);
    for (auto& x : t) x.m *= cplx(0.0, -0.5 * gamma);
    return t;
  };
  std::vector<LocalOp> terms;
  switch (variant) {
    case NonHermitian::HN: {
      terms = onsite_terms(m);
      for (auto& t : damp(ch.positive, ch.positive.gamma)) terms.push_back(t);
      for (auto& t : damp(ch.negative, ch.negative.gamma)) terms.push_back(t);
      return full_operator(terms, m, cap);
    }
    case NonHermitian::Hplus: {
      terms = onsite_terms(m);
      for (auto& t : damp(ch.positive, ch.positive.gamma)) terms.push_back(t);
      return full_operator(terms, m, cap);
    }
    case NonHermitian::HplusPrime: {
      const SparseOperator P = constraint_projector(m, cap);
      const SparseOperator h = P * build_h0(m, cap) * P;
      return h + full_operator(damp(ch.negative, -ch.negative.gamma), m, cap);
    }
  }
  throw ValidationError("unknown non-Hermitian variant");
}

// ---------------------------------------------------------------------------
// Local observables

/// Catalog entry: O1, O2, O3 (spin chains), hd-O1, hd-O2 (hd-pxp, physical
/// sites), Nk (one counter term), or custom (one- or two-site matrix on the
/// simulated lattice). Sites are 1-based; site 0 means site-averaged.
struct ObservableSpec {
  std::string name{"O2"};
  int site{0};
  std::optional<MatrixXc> matrix;  // custom only

  bool averaged() const { return site == 0; }
  std::string label() const { return averaged() ? name : name + "@" + std::to_string(site); }
};

struct Observable {
  std::string name;
  std::vector<LocalOp> terms;
};

namespace detail {

/// Physical single-site operator a at physical position pos (0 or 1) of an
/// hd-pxp logical site, projected onto the encoded states.
inline MatrixXc hd_logical(const MatrixXc& a, Spin j, int pos) {
  const HdEncoding enc{j};
  const int D = enc.dim();
  MatrixXc out = MatrixXc::Zero(D, D);
  for (int col = 0; col < D; ++col) {
    const auto [f, s] = enc.physical(col);
    for (int r = 0; r < j.local_dim(); ++r) {
      const cplx v = pos == 0 ? a(r, f) : a(r, s);
      if (v == 0.0) continue;
      const int row = pos == 0 ? enc.logical(r, s) : enc.logical(f, r);
      if (row >= 0) out(row, col) += v;
    }
  }
  return out;
}

}  // namespace detail

/// Builds the observable on the simulated lattice. Site-averaged observables
/// are averaged over all translations (all bonds for two-site operators).
inline Observable build_local_observable(const SiteModel& m, const ObservableSpec& spec, const Channels* ch = nullptr) {
  const int d = m.d;
  const bool hd = m.family == Family::hd_pxp;
  const int n_phys = hd ? 2 * m.n_sites : m.n_sites;
  if (spec.site < 0 || spec.site > n_phys)
    throw ValidationError("observable " + spec.name + ": site " + std::to_string(spec.site) + " outside [1," +
                          std::to_string(n_phys) + "]");
  Observable obs;
  obs.name = spec.label();
  std::vector<int> sites;
  auto pick_sites = [&](int count, int reach) {
    // reach: largest site offset the operator touches
    if (!spec.averaged()) {
      const int k = spec.site - 1;
      if (!m.periodic && k + reach >= count)
        throw ValidationError("observable " + spec.name + ": site " + std::to_string(spec.site) + " + " + std::to_string(reach) +
                              " leaves the open chain");
      sites.push_back(k);
      return;
    }
    for (int k = 0; k < count; ++k)
      if (m.periodic || k + reach < count) sites.push_back(k);
  };

  if (spec.name == "Nk") {
    if (!ch) throw ValidationError("observable Nk needs dissipation channels");
    const auto terms = counter_terms(*ch, d);
    const int count = static_cast<int>(terms.size());
    if (spec.averaged()) {
      for (const auto& t : terms) obs.terms.push_back(scaled(1.0 / count, t));
    } else {
      if (spec.site > count) throw ValidationError("observable Nk: index outside [1," + std::to_string(count) + "]");
      obs.terms.push_back(terms[spec.site - 1]);
    }
    return obs;
  }

  if (hd) {
    const SpinMatrices s = spin_matrices(m.j);
    if (spec.name == "hd-O1") {
      pick_sites(n_phys, 0);
      for (int k : sites) obs.terms.push_back(site_op(k / 2, detail::hd_logical(s.sz, m.j, k % 2)));
    } else if (spec.name == "hd-O2") {
      pick_sites(n_phys, 2);
      for (int k : sites) {
        const int l1 = k / 2, l2 = ((k + 2) % n_phys) / 2;
        const MatrixXc z = detail::hd_logical(s.sz, m.j, k % 2);
        obs.terms.push_back(product(site_op(l1, z), site_op(l2, z), d));
      }
    } else {
      throw ValidationError("observable " + spec.name + " is not defined for hd-pxp (use hd-O1, hd-O2 or Nk)");
    }
  } else {
    const int n = m.n_sites;
    if (spec.name == "O1") {
      if (m.family != Family::spin_chain_blockade) throw ValidationError("observable O1 needs a spin chain");
      MatrixXc p = MatrixXc::Zero(d, d);
      p(0, 0) = 1.0;
      if (m.j.twice == 2) p(1, 1) = 1.0;  // spin 1: |1><1| + |0><0|
      pick_sites(n, 0);
      for (int k : sites) obs.terms.push_back(site_op(k, p));
    } else if (spec.name == "O2") {
      const MatrixXc z = spin_matrices(m.j).sz;
      pick_sites(n, 1);
      for (int k : sites) obs.terms.push_back(bond_op(k, (k + 1) % n, Eigen::kroneckerProduct(z, z).eval()));
    } else if (spec.name == "O3") {
      if (m.family != Family::spin_chain_blockade) throw ValidationError("observable O3 needs a spin chain");
      VectorXc v = VectorXc::Zero(d * d);
      v(0) = 1.0 / std::sqrt(2.0);
      v(d * d - 1) = -1.0 / std::sqrt(2.0);
      pick_sites(n, 1);
      for (int k : sites) obs.terms.push_back(bond_op(k, (k + 1) % n, v * v.adjoint()));
    } else if (spec.name == "custom") {
      if (!spec.matrix) throw ValidationError("observable custom: missing matrix");
      const MatrixXc& a = *spec.matrix;
      if (a.rows() == d && a.cols() == d) {
        pick_sites(n, 0);
        for (int k : sites) obs.terms.push_back(site_op(k, a));
      } else if (a.rows() == d * d && a.cols() == d * d) {
        pick_sites(n, 1);
        for (int k : sites) obs.terms.push_back(bond_op(k, (k + 1) % n, a));
      } else {
        throw ValidationError("observable custom: matrix must be " + std::to_string(d) + "x" + std::to_string(d) + " or " +
                              std::to_string(d * d) + "x" + std::to_string(d * d));
      }
    } else {
      throw ValidationError("observable: unknown name '" + spec.name + "' (expected O1, O2, O3, hd-O1, hd-O2, Nk or custom)");
    }
  }
  if (sites.empty()) throw ValidationError("observable " + spec.name + ": chain too short");
  if (spec.averaged())
    for (auto& t : obs.terms) t.m /= static_cast<double>(sites.size());
  return obs;
}

// ---------------------------------------------------------------------------
// Operator bundle used by the dynamics and spectra layers

/// Everything the dynamics and spectra layers need for one model.
struct ModelOperators {
  SiteModel model;
  ConstrainedBasis basis;
  Channels channels;
  SparseOperator H;        // constrained basis
  SparseOperator Ncount;   // constrained basis, P N P
};

inline ModelOperators build_model(const ModelSpec& spec, std::optional<Recipe> recipe = std::nullopt,
                                  std::int64_t basis_cap = kDefaultBasisCap) {
  ModelOperators ops;
  ops.model = make_site_model(spec);
  ops.basis = enumerate_basis(ops.model, basis_cap);
  ops.channels = build_channels(ops.model, recipe.value_or(default_recipe(ops.model)));
  ops.H = build_constrained_hamiltonian(ops.basis);
  ops.Ncount = build_counter_constrained(ops.basis, ops.channels);
  return ops;
}

}  // namespace scarkit
