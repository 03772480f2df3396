#include <gtest/gtest.h>

#include <random>

#include "scarkit/dynamics.hpp"
#include "scarkit/mappings.hpp"
#include "scarkit/spectra.hpp"
#include "support.hpp"

using namespace scarkit;
using scarkit::test::spin_chain;

TEST(Projectors, AlgebraicIdentities) {
  for (int n : {3, 4}) {
    const SiteModel m = make_site_model(spin_chain(n));
    const Projectors p = build_projectors(m);
    EXPECT_LT(max_abs_diff(p.P * p.P, p.P), 1e-12);
    for (std::size_t a = 0; a < p.pi.size(); ++a)
      for (std::size_t b = 0; b < p.pi.size(); ++b) EXPECT_LT(commutator(p.pi[a], p.pi[b]).max_abs(), 1e-12);
    for (const auto& Pi : p.Pi) EXPECT_LT((Pi * p.P).max_abs(), 1e-12);
    const SparseOperator H = build_full_hamiltonian(m);
    EXPECT_LT(commutator(H, p.P).max_abs(), 1e-12);
  }
}

TEST(Projectors, TraceEqualsDimension) {
  const SiteModel m = make_site_model(spin_chain(3));
  const SparseOperator P = constraint_projector(m);
  EXPECT_NEAR(P.dense().trace().real(), 18.0, 1e-12);
}

TEST(Hamiltonian, OpenTwoSiteMatrixElement) {
  const auto b = enumerate_basis(spin_chain(2, 1.0, Boundary::open));
  const SparseOperator H = build_constrained_hamiltonian(b);
  // labels: 0 -> m=+1, 1 -> m=0
  const Index bra = b.index_of(b.full_index({1, 0})), ket = b.index_of(b.full_index({0, 0}));
  EXPECT_NEAR(std::abs(H.dense()(bra, ket) - cplx(1.0 / std::sqrt(2.0))), 0.0, 1e-14);
}

TEST(Hamiltonian, ChiralSymmetry) {
  const auto b = enumerate_basis(spin_chain(3));
  const SparseOperator H = build_constrained_hamiltonian(b);
  // Prod_k exp(i pi s^z_k) is diagonal with sign (-1)^(sum of labels) for integer j
  VectorXc c(b.dim());
  for (Index i = 0; i < b.dim(); ++i) {
    int s = 0;
    for (int l : b.labels(i)) s += l;
    c(i) = (s % 2) ? -1.0 : 1.0;
  }
  const SparseOperator C = SparseOperator::diagonal(c, BasisTag::constrained);
  EXPECT_LT((C * H + H * C).max_abs(), 1e-14);
}

TEST(Channels, SpinChainRates) {
  const SiteModel m = make_site_model(spin_chain(5, 1.0, Boundary::periodic, 200.0));
  const Channels ch = build_channels(m, Recipe::spin_chain);
  EXPECT_NEAR(ch.negative.gamma, -2.0 * std::sqrt(2.0) / 200.0, 1e-15);
  EXPECT_NEAR(ch.negative.gamma, -0.0141421, 1e-7);
  EXPECT_NEAR(ch.positive.gamma, 200.0 * std::sqrt(2.0), 1e-12);
}

TEST(Channels, JumpSuperoperatorAnnihilatesConstrainedStates) {
  const ModelOperators ops = build_model(spin_chain(4));
  const MasterSetup s = build_master_setup(ops.model, ops.channels, LiouvillianKind::Full);
  std::mt19937_64 gen(7);
  std::normal_distribution<double> g;
  for (int r = 0; r < 20; ++r) {
    MatrixXc a(ops.basis.dim(), 3);
    for (Index i = 0; i < a.size(); ++i) a.data()[i] = cplx(g(gen), g(gen));
    const MatrixXc af = embed_columns(a, ops.basis);
    MatrixXc rho = af * af.adjoint();
    rho /= rho.trace().real();
    EXPECT_LT(jump_superoperator(s, rho).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(NonHermitian, RightEigenvectorsShared) {
  for (int n : {3, 4, 5}) {
    const ModelOperators ops = build_model(spin_chain(n));
    const EigenSystem es = diagonalize(ops.H);
    const SparseOperator HN = build_nonhermitian(ops.model, ops.channels, NonHermitian::HN);
    for (Index i = 0; i < es.dim(); ++i) {
      const VectorXc v = embed(es.vectors.col(i), ops.basis);
      EXPECT_LT((HN.apply(v) - es.energies(i) * v).norm(), 1e-10);
    }
  }
}

TEST(NonHermitian, AntiHermitianPartSigns) {
  const ModelOperators ops = build_model(spin_chain(3));
  auto spectrum = [&](NonHermitian v) {
    const MatrixXc a = build_nonhermitian(ops.model, ops.channels, v).dense();
    const MatrixXc k = (a - a.adjoint()) / cplx(0.0, 2.0);
    return Eigen::SelfAdjointEigenSolver<MatrixXc>(k).eigenvalues();
  };
  const VectorXr hn = spectrum(NonHermitian::HN);
  EXPECT_LT(hn.minCoeff(), -1e-9);
  EXPECT_GT(hn.maxCoeff(), 1e-9);
  EXPECT_LT(spectrum(NonHermitian::Hplus).maxCoeff(), 1e-9);
  EXPECT_LT(spectrum(NonHermitian::HplusPrime).maxCoeff(), 1e-9);
}

TEST(NonHermitian, HplusApproachesHNAsOneOverC) {
  std::vector<double> d;
  for (double c : {1e2, 1e3, 1e4}) {
    const ModelOperators ops = build_model(spin_chain(3, 1.0, Boundary::periodic, c));
    const MatrixXc diff =
        build_nonhermitian(ops.model, ops.channels, NonHermitian::Hplus).dense() - build_nonhermitian(ops.model, ops.channels, NonHermitian::HN).dense();
    d.push_back(diff.operatorNorm());
  }
  EXPECT_NEAR(d[0] / d[1], 10.0, 0.5);
  EXPECT_NEAR(d[1] / d[2], 10.0, 0.5);
}

TEST(Counter, DoesNotCommuteWithH) {
  const ModelOperators ops = build_model(spin_chain(3));
  EXPECT_GT(commutator(ops.H, ops.Ncount).max_abs(), 1e-3);
}

TEST(Observables, O3OnTopState) {
  const ModelOperators ops = build_model(spin_chain(5));
  const Observable o = build_local_observable(ops.model, ObservableSpec{"O3", 0, {}}, &ops.channels);
  const SparseOperator O = constrained_operator(o.terms, ops.basis);
  const VectorXc psi = ops.basis.product_state(std::vector<int>(5, 0));
  EXPECT_NEAR(O.expectation(psi), 0.5, 1e-14);
}

TEST(Observables, SiteOutOfRange) {
  const ModelOperators ops = build_model(spin_chain(3));
  EXPECT_THROW(build_local_observable(ops.model, ObservableSpec{"O2", 7, {}}, &ops.channels), ValidationError);
}

TEST(PxpMapping, SpectraAgreeUpToInverseRootTwo) {
  for (int n : {3, 4}) {
    const auto mp = map_spin1_to_pxp(spin_chain(n));
    const VectorXr e1 = diagonalize(build_constrained_hamiltonian(mp.spin1_basis)).energies;
    const VectorXr e2 = diagonalize(build_constrained_hamiltonian(mp.pxp_basis)).energies;
    ASSERT_EQ(e1.size(), e2.size());
    EXPECT_LT((e1 - e2 / std::sqrt(2.0)).cwiseAbs().maxCoeff(), 1e-10);
  }
}
