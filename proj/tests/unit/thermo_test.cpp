#include <gtest/gtest.h>

#include "scarkit/spectra.hpp"
#include "scarkit/thermo.hpp"
#include "support.hpp"

using namespace scarkit;
using scarkit::test::spin_chain;

TEST(Canonical, TwoLevelClosedForm) {
  VectorXr E(2);
  E << 0.0, 1.0;
  const EnsembleParams p = canonical_beta(E, 1.0 / (1.0 + std::exp(1.0)));
  EXPECT_NEAR(p.beta, 1.0, 1e-9);
  EXPECT_NEAR(p.weights(1) / p.weights(0), std::exp(-1.0), 1e-9);
}

TEST(Canonical, OutsideOpenRangeRejected) {
  VectorXr E(3);
  E << -1.0, 0.0, 1.0;
  EXPECT_THROW(canonical_beta(E, 1.0), RangeError);
  EXPECT_THROW(canonical_beta(E, -2.0), RangeError);
  EXPECT_NEAR(canonical_beta(E, 0.0).beta, 0.0, 1e-12);
}

TEST(Canonical, EnergyDecreasesWithBeta) {
  const ModelOperators ops = build_model(spin_chain(5));
  const VectorXr E = diagonalize(ops.H).energies;
  double prev = INFINITY;
  for (double b = -3.0; b <= 3.0; b += 0.25) {
    const double e = canonical_weights(E, b).dot(E);
    EXPECT_LT(e, prev);
    prev = e;
  }
}

TEST(GrandCanonical, ThreeLevelGridSearch) {
  VectorXr E(3), N(3);
  E << 0, 1, 2;
  N << 0, 1, 0;
  const EnsembleParams p = grand_canonical_params(E, N, 1.0, 0.5);
  EXPECT_LT(p.residual, 1e-6);
  // independent dense grid search over (beta, nu) for the same targets
  double best = INFINITY, bb = 0, bn = 0;
  for (double b = -3.0; b <= 3.0; b += 0.01)
    for (double n = -3.0; n <= 3.0; n += 0.01) {
      const VectorXr w = grand_canonical_weights(E, N, b, n);
      const double r = std::hypot(w.dot(E) - 1.0, w.dot(N) - 0.5);
      if (r < best) best = r, bb = b, bn = n;
    }
  EXPECT_NEAR(p.beta, bb, 0.02);
  EXPECT_NEAR(p.nu, bn, 0.02);
  EXPECT_NEAR(ensemble_average(p, E), 1.0, 1e-6);
  EXPECT_NEAR(ensemble_average(p, N), 0.5, 1e-6);
}

TEST(GrandCanonical, CanonicalTargetGivesZeroMu) {
  const ModelOperators ops = build_model(spin_chain(5));
  const EigenSystem es = diagonalize(ops.H);
  const VectorXr n = eigen_expectation(es, ops.Ncount);
  const VectorXr w = canonical_weights(es.energies, 0.4);
  const EnsembleParams p = grand_canonical_params(es.energies, n, w.dot(es.energies), w.dot(n));
  EXPECT_NEAR(p.beta, 0.4, 1e-6);
  EXPECT_LT(std::abs(p.mu), 1e-6);
}

TEST(GrandCanonical, TargetOutsideHullRejected) {
  VectorXr E(3), N(3);
  E << 0, 1, 2;
  N << 0, 1, 0;
  EXPECT_THROW(grand_canonical_params(E, N, 1.0, 2.0), RangeError);
}

TEST(ReducedDm, ProductStateIsPure) {
  const ModelOperators ops = build_model(spin_chain(4));
  const MatrixXc r = reduced_dm(ops.basis, ops.basis.product_state({0, 0, 1, 1}), {0, 1});
  EXPECT_NEAR(r.trace().real(), 1.0, 1e-14);
  EXPECT_NEAR((r * r).trace().real(), 1.0, 1e-14);
}

TEST(ReducedDm, BellPairAcrossBoundaryIsMixed) {
  const ModelOperators ops = build_model(spin_chain(4, 1.0, Boundary::open));
  const VectorXc psi = (ops.basis.product_state({1, 0, 1, 1}) + ops.basis.product_state({1, 1, 0, 1})) / std::sqrt(2.0);
  const MatrixXc r = reduced_dm(ops.basis, psi, {0, 1});
  EXPECT_NEAR(r.trace().real(), 1.0, 1e-14);
  EXPECT_NEAR((r * r).trace().real(), 0.5, 1e-14);
}

TEST(ReducedDm, EnsembleTraceAndRange) {
  const ModelOperators ops = build_model(spin_chain(5));
  const EigenSystem es = diagonalize(ops.H);
  const PartialTrace pt(ops.basis, {0, 1});
  EXPECT_EQ(pt.dim(), 9);
  const MatrixXc r = reduced_dm(pt, es.vectors, canonical_weights(es.energies, 0.3));
  EXPECT_NEAR(r.trace().real(), 1.0, 1e-12);
  EXPECT_THROW(PartialTrace(ops.basis, {0, 5}), ValidationError);
}

TEST(Schatten, KnownDistances) {
  MatrixXc a = MatrixXc::Zero(2, 2), b = MatrixXc::Zero(2, 2);
  a(0, 0) = 1.0;
  b(1, 1) = 1.0;
  EXPECT_NEAR(schatten_distance(a, a, 1), 0.0, 1e-14);
  EXPECT_NEAR(schatten_distance(a, b, 1), 2.0, 1e-14);
  const MatrixXc half = 0.5 * MatrixXc::Identity(2, 2);
  EXPECT_NEAR(schatten_distance(half, a, 2), std::sqrt(2.0 - std::sqrt(2.0)), 1e-12);
  EXPECT_NEAR(schatten_distance(half, a, 2), 0.76537, 1e-5);
  EXPECT_NEAR(schatten_distance(a, half, 2), schatten_distance(half, a, 2), 1e-14);
  EXPECT_THROW(schatten_distance(a, MatrixXc::Zero(2, 2), 1), ValidationError);
  EXPECT_THROW(schatten_distance(a, MatrixXc::Zero(3, 3), 1), ValidationError);
}
