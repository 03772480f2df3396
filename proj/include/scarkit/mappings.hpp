#pragma once

#include <cstdint>
#include <vector>

#include "scarkit/basis.hpp"
#include "scarkit/operators.hpp"

namespace scarkit {

/// Two-level PXP chain on 2N sites: h = sigma^x, forbidden |up,up>
/// (label 0 = up).
inline ModelSpec pxp_spec(int n_qubits, Boundary boundary, double c = 200.0) {
  ModelSpec s;
  s.family = Family::generic_bond_blockade;
  s.j = Spin{1};
  s.n_sites = n_qubits;
  s.boundary = boundary;
  s.c = c;
  MatrixXc sx(2, 2);
  sx << 0, 1, 1, 0;
  s.local_hamiltonians = {sx};
  VectorXc upup = VectorXc::Zero(4);
  upup(0) = 1.0;
  s.bond_states = {upup};
  return s;
}

struct PxpMapping {
  ModelSpec pxp;
  ConstrainedBasis spin1_basis;
  ConstrainedBasis pxp_basis;
  /// forward[i] = PXP basis index of spin-1 basis state i.
  std::vector<Index> forward;
  /// inverse[p] = spin-1 basis index of PXP basis state p, or -1.
  std::vector<Index> inverse;
};

/// Spin-1 label to qubit pair: |1> -> |dn,up>, |0> -> |dn,dn>, |-1> -> |up,dn>
/// (qubit label 0 = up, 1 = down).
inline std::pair<int, int> spin1_to_qubits(int label) {
  switch (label) {
    case 0: return {1, 0};
    case 1: return {1, 1};
    default: return {0, 1};
  }
}

inline int qubits_to_spin1(int a, int b) {
  if (a == 1 && b == 0) return 0;
  if (a == 1 && b == 1) return 1;
  if (a == 0 && b == 1) return 2;
  return -1;
}

/// Maps a spin-1 blockade chain onto the PXP chain of 2N qubits.
inline PxpMapping map_spin1_to_pxp(const ModelSpec& spec) {
  if (spec.family != Family::spin_chain_blockade || spec.j.twice != 2)
    throw ValidationError("spin-1 to PXP mapping needs a spin-chain-blockade model with j = 1");
  PxpMapping mp;
  mp.pxp = pxp_spec(2 * spec.n_sites, spec.boundary, spec.c);
  mp.spin1_basis = enumerate_basis(spec);
  mp.pxp_basis = enumerate_basis(mp.pxp);
  mp.forward.assign(static_cast<std::size_t>(mp.spin1_basis.dim()), -1);
  mp.inverse.assign(static_cast<std::size_t>(mp.pxp_basis.dim()), -1);
  for (Index i = 0; i < mp.spin1_basis.dim(); ++i) {
    const auto lab = mp.spin1_basis.labels(i);
    std::vector<int> q;
    for (int a : lab) {
      const auto [x, y] = spin1_to_qubits(a);
      q.push_back(x);
      q.push_back(y);
    }
    const Index p = mp.pxp_basis.index_of(mp.pxp_basis.full_index(q));
    if (p < 0) throw ConsistencyError("spin-1 state " + mp.spin1_basis.describe(i) + " maps outside the PXP subspace");
    mp.forward[i] = p;
    mp.inverse[p] = i;
  }
  for (Index p = 0; p < mp.pxp_basis.dim(); ++p)
    if (mp.inverse[p] < 0) throw ConsistencyError("PXP state has no spin-1 preimage");
  return mp;
}

/// Logical re-encoding of the hd-pxp model: a generic-bond-blockade spec on
/// N/2 sites of dimension 4j+1, plus its basis, Hamiltonian, counter and channels.
struct HdPxp {
  ModelSpec logical_spec;
  ModelOperators ops;
};

inline HdPxp build_hdpxp(const ModelSpec& spec) {
  if (spec.family != Family::hd_pxp) throw ValidationError("build_hdpxp needs family hd-pxp");
  spec.validate();
  const SiteModel m = make_site_model(spec);
  HdPxp out;
  ModelSpec& ls = out.logical_spec;
  ls.family = Family::generic_bond_blockade;
  ls.j = Spin{2 * spec.j.twice};  // local dimension 4j+1
  ls.n_sites = m.n_sites;
  ls.boundary = spec.boundary;
  ls.c = spec.c;
  ls.local_hamiltonians = {m.h.front()};
  for (const auto& [a, b] : m.forbidden) {
    VectorXc v = VectorXc::Zero(m.d * m.d);
    v(a * m.d + b) = 1.0;
    ls.bond_states.push_back(v);
  }
  out.ops = build_model(spec);
  return out;
}

}  // namespace scarkit
