#include <gtest/gtest.h>

#include "scarkit/basis.hpp"
#include "scarkit/mappings.hpp"
#include "support.hpp"

using namespace scarkit;
using scarkit::test::spin_chain;

TEST(Basis, Spin1ThreeSitesPeriodic) {
  const auto b = enumerate_basis(spin_chain(3));
  EXPECT_EQ(b.dim(), 18);
}

TEST(Basis, MatchesBruteForceSmallChains) {
  for (int n = 2; n <= 6; ++n)
    for (auto bc : {Boundary::periodic, Boundary::open}) {
      const SiteModel m = make_site_model(spin_chain(n, 1.0, bc));
      EXPECT_EQ(enumerate_basis(m).dim(), test::brute_force_dim(m)) << "N=" << n;
    }
}

TEST(Basis, TransferMatrixCount) {
  EXPECT_EQ(transfer_matrix_count(make_site_model(spin_chain(9))), 5778u);
  EXPECT_EQ(transfer_matrix_count(make_site_model(spin_chain(7, 1.5))), 10084u);
  for (int n = 2; n <= 8; ++n) {
    const SiteModel m = make_site_model(spin_chain(n));
    EXPECT_EQ(static_cast<Index>(transfer_matrix_count(m)), enumerate_basis(m).dim());
  }
}

TEST(Basis, LexicographicOrderFromTopState) {
  const auto b = enumerate_basis(spin_chain(3));
  EXPECT_EQ(b.labels(0), (std::vector<int>{0, 0, 0}));
  for (Index i = 1; i < b.dim(); ++i) EXPECT_LT(b.state(i - 1), b.state(i));
  for (Index i = 0; i < b.dim(); ++i) EXPECT_EQ(b.index_of(b.state(i)), i);
}

TEST(Basis, ProductStateRejectsBlockade) {
  const auto b = enumerate_basis(spin_chain(3));
  EXPECT_NO_THROW(b.product_state({0, 0, 0}));
  EXPECT_THROW(b.product_state({0, 2, 1}), ValidationError);
}

TEST(Basis, HalfIntegerSpinRejectedForSpinChain) {
  EXPECT_THROW(make_site_model(spin_chain(3, 0.5)), ValidationError);
}

TEST(Basis, CapacityLimit) {
  EXPECT_THROW(enumerate_basis(make_site_model(spin_chain(9)), 1000), CapacityError);
}

TEST(HdPxp, LogicalDimensions) {
  const SiteModel m = make_site_model(test::hd_pxp(12));
  EXPECT_EQ(m.d, 5);
  EXPECT_EQ(m.n_sites, 6);
  EXPECT_EQ(enumerate_basis(m).dim(), test::brute_force_dim(m));
}

TEST(HdPxp, OddPhysicalSitesRejected) { EXPECT_THROW(make_site_model(test::hd_pxp(7)), ValidationError); }

TEST(PxpMapping, BasesHaveEqualDimension) {
  const auto mp = map_spin1_to_pxp(spin_chain(3));
  EXPECT_EQ(mp.spin1_basis.dim(), 18);
  EXPECT_EQ(mp.pxp_basis.dim(), 18);
  for (Index i = 0; i < mp.spin1_basis.dim(); ++i) EXPECT_EQ(mp.inverse[static_cast<std::size_t>(mp.forward[static_cast<std::size_t>(i)])], i);
}
