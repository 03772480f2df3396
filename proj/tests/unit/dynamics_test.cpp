#include <gtest/gtest.h>

#include "scarkit/dynamics.hpp"
#include "scarkit/spectra.hpp"
#include "support.hpp"

using namespace scarkit;
using scarkit::test::spin_chain;

namespace {

struct Fixture {
  ModelOperators ops;
  EigenSystem es;
  VectorXc psi, psi_full;
  explicit Fixture(int n, double c = 200.0) : ops(build_model(spin_chain(n, 1.0, Boundary::periodic, c))), es(diagonalize(ops.H)) {
    psi = ops.basis.product_state(std::vector<int>(static_cast<std::size_t>(n), 0));
    psi_full = embed(psi, ops.basis);
  }
  TimeSeries master(LiouvillianKind k, TimeGrid g) const {
    const MasterSetup s = build_master_setup(ops.model, ops.channels, k);
    return evolve_master(s, psi_full * psi_full.adjoint(), psi_full, g, {});
  }
};

double max_dev(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

}  // namespace

TEST(TimeGrid, Validation) {
  EXPECT_THROW((TimeGrid{1.0, 0.3}.validate()), ValidationError);
  EXPECT_THROW((TimeGrid{1.0, -0.1}.validate()), ValidationError);
  EXPECT_EQ((TimeGrid{1.0, 0.25}.count()), 5);
}

TEST(Unitary, NormAndEnergyConserved) {
  const Fixture f(5);
  const TimeSeries ts = evolve_unitary(f.es, f.psi, {5.0, 0.5}, {{"H", f.ops.H}});
  for (double n : ts.channel("norm")) EXPECT_NEAR(n, 1.0, 1e-12);
  for (double e : ts.channel("H")) EXPECT_NEAR(e, 0.0, 1e-12);
  EXPECT_NEAR(ts.channel("fidelity").front(), 1.0, 1e-12);
}

TEST(Master, TracePreservedForAllKinds) {
  const Fixture f(4, 50.0);
  for (auto k : {LiouvillianKind::Full, LiouvillianKind::Positive, LiouvillianKind::LindbladPrime}) {
    const TimeSeries ts = f.master(k, {1.0, 0.1});
    for (double t : ts.channel("trace")) EXPECT_NEAR(t, 1.0, 1e-6) << to_string(k);
    for (double h : ts.channel("hermiticity_defect")) EXPECT_LT(h, 1e-9) << to_string(k);
  }
}

TEST(Master, FullKindIsJumpFree) {
  const Fixture f(4, 50.0);
  const TimeSeries ts = f.master(LiouvillianKind::Full, {2.0, 0.1});
  const TimeSeries u = evolve_unitary(f.es, f.psi, {2.0, 0.1});
  EXPECT_LT(max_dev(ts.channel("fidelity"), u.channel("fidelity")), 1e-5);
  for (double h : ts.channel("leakage")) EXPECT_NEAR(h, 1.0, 1e-6);
}

TEST(Master, DensityMatrixCap) {
  const Fixture f(4);
  const MasterSetup s = build_master_setup(f.ops.model, f.ops.channels, LiouvillianKind::Positive);
  EXPECT_THROW(evolve_master(s, f.psi_full * f.psi_full.adjoint(), f.psi_full, {0.1, 0.1}, {}, {}, nullptr, 10), CapacityError);
}

TEST(Master, DefaultStepRule) {
  EXPECT_NEAR(default_dt(LiouvillianKind::Positive, 200.0, Spin{2}), 0.1 / (200.0 * std::sqrt(0.5)), 1e-15);
  EXPECT_NEAR(default_dt(LiouvillianKind::Full, 5.0, Spin{2}), 0.01, 1e-15);
  EXPECT_NEAR(default_dt(LiouvillianKind::LindbladPrime, 1200.0, Spin{2}), 0.01, 1e-15);
}

TEST(Trajectories, AgreeWithMasterLindbladPrime) {
  const Fixture f(4, 20.0);
  const MasterSetup s = build_master_setup(f.ops.model, f.ops.channels, LiouvillianKind::LindbladPrime);
  const TimeGrid g{20.0, 2.0};
  const TimeSeries dm = evolve_master(s, f.psi_full * f.psi_full.adjoint(), f.psi_full, g, {});
  TrajectoryOptions o;
  o.n_traj = 400;
  o.seed = 12345;
  const TimeSeries tr = sample_trajectories(s, f.psi_full, f.psi_full, g, o);
  for (const char* ch : {"fidelity", "leakage"}) {
    const auto& m = tr.channel(ch);
    const auto& e = tr.channel_error(ch);
    const auto& ref = dm.channel(ch);
    for (std::size_t k = 0; k < m.size(); ++k) EXPECT_LE(std::abs(m[k] - ref[k]), 3.0 * e[k] + 1e-9) << ch << " t=" << tr.times[k];
  }
}

TEST(Trajectories, BitStableAcrossThreadCounts) {
  const Fixture f(4, 50.0);
  const MasterSetup s = build_master_setup(f.ops.model, f.ops.channels, LiouvillianKind::Positive);
  TrajectoryOptions o;
  o.n_traj = 40;
  o.seed = 99;
  const TimeGrid g{0.5, 0.1};
  const TimeSeries a = sample_trajectories(s, f.psi_full, f.psi_full, g, o);
  o.threads = 3;
  const TimeSeries b = sample_trajectories(s, f.psi_full, f.psi_full, g, o);
  o.share_prefix = false;
  const TimeSeries c = sample_trajectories(s, f.psi_full, f.psi_full, g, o);
  EXPECT_EQ(a.channel("fidelity"), b.channel("fidelity"));
  EXPECT_EQ(a.channel("leakage"), c.channel("leakage"));
}

TEST(Trajectories, FullKindRejected) {
  const Fixture f(3);
  const MasterSetup s = build_master_setup(f.ops.model, f.ops.channels, LiouvillianKind::Full);
  TrajectoryOptions o;
  o.seed = 1;
  EXPECT_THROW(sample_trajectories(s, f.psi_full, f.psi_full, {0.1, 0.1}, o), ValidationError);
}

TEST(NoJump, ConstrainedHplusIsClosed) {
  const Fixture f(5);
  EXPECT_NO_THROW(constrained_effective_hamiltonian(f.ops.model, f.ops.basis, f.ops.channels));
}

TEST(NoJump, EigenstateDecayFollowsCounter) {
  // Positive kind at large c: alpha_i ~ |gamma2| <N>_i, first-order in 1/c
  const Fixture f(5, 400.0);
  const SparseOperator Heff = constrained_effective_hamiltonian(f.ops.model, f.ops.basis, f.ops.channels);
  const VectorXr n = eigen_expectation(f.es, f.ops.Ncount);
  const double g2 = std::abs(f.ops.channels.negative.gamma);
  int checked = 0;
  for (Index i = 0; i < f.es.dim() && checked < 4; i += 3) {
    if (!f.es.nondegenerate(i)) continue;
    ++checked;
    const auto fid = nojump_fidelity(Heff, f.es.vectors.col(i), {20.0, 1.0}, 0.01);
    const double alpha = -std::log(fid.back()) / 20.0;
    EXPECT_NEAR(alpha, g2 * n(i), 0.05 * g2 * n(i) + 1e-6) << "index " << i;
  }
  EXPECT_EQ(checked, 4);
}
