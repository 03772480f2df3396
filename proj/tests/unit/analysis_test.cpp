#include <gtest/gtest.h>

#include "scarkit/analysis.hpp"
#include "support.hpp"

using namespace scarkit;
using scarkit::test::spin_chain;

TEST(Fit, LinearExact) {
  const FitResult f = fit_linear({0, 1, 2, 3}, {1, 3, 5, 7});
  EXPECT_NEAR(f[0], 2.0, 1e-13);
  EXPECT_NEAR(f[1], 1.0, 1e-13);
  EXPECT_NEAR(f.residual_rms, 0.0, 1e-12);
}

TEST(Fit, ThroughOriginClosedForm) {
  // slope = sum xy / sum xx
  const std::vector<double> x{1, 2, 3}, y{2, 3, 7};
  EXPECT_NEAR(fit_through_origin(x, y)[0], (2 + 6 + 21) / 14.0, 1e-14);
}

TEST(Fit, RankDeficientRejected) { EXPECT_THROW(fit_linear({1, 1, 1}, {1, 2, 3}), ValidationError); }

TEST(Fit, ExponentialWindow) {
  std::vector<double> t, v;
  for (int k = 0; k <= 100; ++k) {
    t.push_back(0.1 * k);
    v.push_back(2.0 * std::exp(-0.7 * t.back()));
  }
  const FitResult f = fit_exponential(t, v, 0.1);
  EXPECT_NEAR(f[0], 0.7, 1e-12);
  EXPECT_NEAR(std::exp(f.intercept), 2.0, 1e-12);
  // window stops at v <= 0.1 v0: t < ln(10)/0.7
  EXPECT_EQ(f.n, 33);
}

TEST(Fit, BivariateCubicReproducesPolynomial) {
  std::vector<double> E, N, O;
  for (int a = 0; a < 7; ++a)
    for (int b = 0; b < 6; ++b) {
      const double e = -3.0 + a, n = 0.2 * b;
      E.push_back(e);
      N.push_back(n);
      O.push_back(0.3 - e + 2 * n + e * e * n - 0.5 * n * n * n + 0.1 * e * e * e);
    }
  const CubicSurface s = fit_bivariate_cubic(E, N, O);
  EXPECT_LT(s.fit.residual_rms, 1e-10);
  EXPECT_NEAR(s.predict(0.5, 0.5), 0.3 - 0.5 + 1.0 + 0.125 - 0.0625 + 0.0125, 1e-10);
  const CubicCurve c = fit_energy_cubic(E, O);
  EXPECT_GT(c.fit.residual_rms, s.fit.residual_rms);
}

TEST(DecayWindow, NearestNondegenerate) {
  const ModelOperators ops = build_model(spin_chain(5));
  const EigenSystem es = diagonalize(ops.H);
  const auto w = decay_window(es, es.dim() / 2, 5);
  EXPECT_EQ(w.size(), 5u);
  for (Index i : w) EXPECT_TRUE(es.nondegenerate(i));
  EXPECT_THROW(decay_window(es, es.dim(), 5), ValidationError);
}

TEST(DecayScan, DecayRateProportionalToCounter) {
  const ModelOperators ops = build_model(spin_chain(5, 1.0, Boundary::periodic, 200.0));
  const EigenSystem es = diagonalize(ops.H);
  std::vector<Index> idx;
  for (Index i = es.dim() / 4; i < es.dim() && idx.size() < 5; ++i)
    if (es.nondegenerate(i)) idx.push_back(i);
  ASSERT_EQ(idx.size(), 5u);
  DecayOptions o;
  o.grid = {100.0, 1.0};
  const DecayScan d = decay_scan(ops, es, idx, o);
  EXPECT_NEAR(d.gamma_fit(), 2.0 * std::sqrt(2.0) / 200.0, 0.05 * 2.0 * std::sqrt(2.0) / 200.0);
}

TEST(DecayScan, DegenerateIndexRejected) {
  const ModelOperators ops = build_model(spin_chain(5));
  const EigenSystem es = diagonalize(ops.H);
  Index deg = -1;
  for (Index i = 0; i < es.dim() && deg < 0; ++i)
    if (!es.nondegenerate(i)) deg = i;
  ASSERT_GE(deg, 0);
  EXPECT_THROW(decay_scan(ops, es, {deg}), ValidationError);
}

TEST(CScan, DoublingCHalvesRate) {
  const ModelSpec s = spin_chain(5);
  const ModelOperators ops = build_model(s);
  const EigenSystem es = diagonalize(ops.H);
  std::vector<Index> idx;
  for (Index i = es.dim() / 2 - 10; i < es.dim() && idx.size() < 4; ++i)
    if (es.nondegenerate(i)) idx.push_back(i);
  DecayOptions o;
  o.grid = {100.0, 1.0};
  const CScan cs = c_scan(s, {400.0, 800.0}, es, idx, o);
  EXPECT_NEAR(cs.rows[0].gamma_fit / cs.rows[1].gamma_fit, 2.0, 0.2);
  EXPECT_NEAR(cs.origin[0], 2.0 * std::sqrt(2.0), 0.1 * 2.0 * std::sqrt(2.0));
  EXPECT_LT(std::abs(cs.linear[1]), 0.1 * std::min(cs.rows[0].gamma_fit, cs.rows[1].gamma_fit));
  EXPECT_THROW(c_scan(s, {400.0}, es, idx, o), ValidationError);
}

TEST(CScan, SpinThreeHalvesSlope) {
  const ModelSpec s = spin_chain(4, 1.5);
  const ModelOperators ops = build_model(s);
  const EigenSystem es = diagonalize(ops.H);
  std::vector<Index> idx;
  for (Index i = es.dim() / 2 - 10; i < es.dim() && idx.size() < 4; ++i)
    if (es.nondegenerate(i)) idx.push_back(i);
  DecayOptions o;
  o.grid = {100.0, 1.0};
  const CScan cs = c_scan(s, {600.0, 1200.0}, es, idx, o);
  EXPECT_NEAR(cs.origin[0], 2.0 * std::sqrt(3.0), 0.1 * 2.0 * std::sqrt(3.0));
}
