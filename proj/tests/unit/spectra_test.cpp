#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "scarkit/dynamics.hpp"
#include "scarkit/spectra.hpp"
#include "support.hpp"

using namespace scarkit;
using scarkit::test::spin_chain;

namespace {
EigenSystem spectrum_of(int n) { return diagonalize(build_model(spin_chain(n)).H); }
}  // namespace

TEST(Diagonalize, SymmetricSpectrumSmallChains) {
  for (int n = 3; n <= 5; ++n) {
    const EigenSystem es = spectrum_of(n);
    const Index d = es.dim();
    for (Index i = 0; i < d; ++i) EXPECT_NEAR(es.energies(i), -es.energies(d - 1 - i), 1e-10);
  }
  EXPECT_EQ(spectrum_of(3).dim(), 18);
}

TEST(Diagonalize, ResolutionOfIdentity) {
  const EigenSystem es = spectrum_of(5);
  const MatrixXc id = es.vectors * es.vectors.adjoint();
  EXPECT_LT((id - MatrixXc::Identity(es.dim(), es.dim())).norm(), 1e-8);
}

TEST(Diagonalize, CapacityCap) {
  EXPECT_THROW(diagonalize(build_model(spin_chain(5)).H, 10), CapacityError);
}

TEST(Overlaps, ParsevalEnergy) {
  const ModelOperators ops = build_model(spin_chain(5));
  const EigenSystem es = diagonalize(ops.H);
  std::mt19937_64 gen(3);
  std::normal_distribution<double> g;
  VectorXc psi(ops.basis.dim());
  for (Index i = 0; i < psi.size(); ++i) psi(i) = cplx(g(gen), g(gen));
  psi.normalize();
  const VectorXr ov = overlaps(es, psi, DegeneracyPolicy::raw);
  EXPECT_NEAR(ov.sum(), 1.0, 1e-12);
  EXPECT_NEAR(ov.dot(es.energies), ops.H.expectation(psi), 1e-9);
}

TEST(Expectation, GroupAverageInvariantUnderRotation) {
  const ModelOperators ops = build_model(spin_chain(5));
  EigenSystem es = diagonalize(ops.H);
  const VectorXr before = eigen_expectation(es, ops.Ncount);
  std::size_t g = 0;
  while (g < es.groups.size() && es.groups[g].size() < 2) ++g;
  ASSERT_LT(g, es.groups.size()) << "expected a degenerate group";
  const auto& grp = es.groups[g];
  const Index k = static_cast<Index>(grp.size());
  std::mt19937_64 gen(11);
  std::normal_distribution<double> nd;
  MatrixXc a(k, k);
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = cplx(nd(gen), nd(gen));
  const MatrixXc u = Eigen::HouseholderQR<MatrixXc>(a).householderQ();
  MatrixXc cols(es.dim(), k);
  for (Index c = 0; c < k; ++c) cols.col(c) = es.vectors.col(grp[static_cast<std::size_t>(c)]);
  const MatrixXc rotated = cols * u;
  for (Index c = 0; c < k; ++c) es.vectors.col(grp[static_cast<std::size_t>(c)]) = rotated.col(c);
  const VectorXr after = eigen_expectation(es, ops.Ncount);
  EXPECT_LT((before - after).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Scars, TaggedSetSymmetricInEnergy) {
  const ModelOperators ops = build_model(spin_chain(7));
  const EigenSystem es = diagonalize(ops.H);
  const VectorXr ov = overlaps(es, ops.basis.product_state(std::vector<int>(7, 0)));
  const auto scars = tag_scars(ov, &es);
  ASSERT_GE(scars.size(), 2u);
  std::vector<double> e;
  for (Index s : scars) e.push_back(es.energies(s));
  for (std::size_t k = 0; k < e.size(); ++k) EXPECT_NEAR(e[k], -e[e.size() - 1 - k], 1e-8);
}

TEST(Scars, LowerCounterThanThermalNeighbours) {
  const ModelOperators ops = build_model(spin_chain(7));
  const EigenSystem es = diagonalize(ops.H);
  const VectorXr ov = overlaps(es, ops.basis.product_state(std::vector<int>(7, 0)));
  const VectorXr n = eigen_expectation(es, ops.Ncount);
  for (Index s : tag_scars(ov, &es)) {
    if (std::abs(es.energies(s)) > 0.5 * es.energies.maxCoeff()) continue;  // edge states have no thermal bulk
    double mean = 0.0;
    int cnt = 0;
    for (Index i = std::max<Index>(0, s - 20); i < std::min(es.dim(), s + 21); ++i)
      if (i != s) mean += n(i), ++cnt;
    EXPECT_LT(n(s), mean / cnt) << "scar " << s;
  }
}

TEST(Scars, ExplicitListValidated) {
  const VectorXr ov = VectorXr::Constant(5, 0.2);
  ScarPolicy p;
  p.explicit_list = std::vector<Index>{3, 1, 3};
  EXPECT_EQ(tag_scars(ov, nullptr, p), (std::vector<Index>{1, 3}));
  p.explicit_list = std::vector<Index>{9};
  EXPECT_THROW(tag_scars(ov, nullptr, p), ValidationError);
}

TEST(DensityOfStates, SymmetricAndComplete) {
  const EigenSystem es = spectrum_of(3);
  const Histogram h = density_of_states(es.energies, 0.25);
  Index total = 0;
  for (Index c : h.counts) total += c;
  EXPECT_EQ(total, 18);
  for (std::size_t b = 0; b < h.counts.size(); ++b) EXPECT_EQ(h.counts[b], h.counts[h.counts.size() - 1 - b]);
  EXPECT_THROW(density_of_states(es.energies, 0.0), ValidationError);
}

TEST(Cache, RoundTripIsExact) {
  const EigenSystem es = spectrum_of(4);
  const auto path = std::filesystem::temp_directory_path() / "scarkit_cache_test.eig";
  save_eigensystem(es, path);
  const auto back = load_eigensystem(path);
  ASSERT_TRUE(back);
  EXPECT_EQ((back->energies - es.energies).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((back->vectors - es.vectors).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(back->groups.size(), es.groups.size());
  std::filesystem::remove(path);
}

TEST(DiagonalEnsemble, ConservedQuantityAndZeroModeCoherence) {
  const ModelOperators ops = build_model(spin_chain(5));
  const EigenSystem es = diagonalize(ops.H);
  const VectorXc psi = ops.basis.product_state(std::vector<int>(5, 0));
  EXPECT_NEAR(diagonal_ensemble(es, psi, ops.H), ops.H.expectation(psi), 1e-12);
  // the identity within every group: total probability
  EXPECT_NEAR(diagonal_ensemble(es, psi, SparseOperator::identity(es.dim(), BasisTag::constrained)), 1.0, 1e-12);
  // long unitary average of <N(t)> approaches the group-projected value
  const TimeSeries ts = evolve_unitary(es, psi, {2000.0, 0.5}, {{"N", ops.Ncount}});
  const auto& n = ts.channel("N");
  double avg = 0.0;
  for (double x : n) avg += x;
  avg /= static_cast<double>(n.size());
  EXPECT_NEAR(avg, diagonal_ensemble(es, psi, ops.Ncount), 0.01);
}
