#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"
#include "scarkit/basis.hpp"
#include "scarkit/errors.hpp"
#include "scarkit/operators.hpp"
#include "scarkit/rng.hpp"
#include "scarkit/sparse_operator.hpp"
#include "scarkit/spectra.hpp"

namespace scarkit {

/// Default ceiling on the full-space dimension for density-matrix integration.
inline constexpr std::int64_t kDefaultDmCap = 2187;

enum class LiouvillianKind { Full, Positive, LindbladPrime };

inline const char* to_string(LiouvillianKind k) {
  switch (k) {
    case LiouvillianKind::Full: return "Full";
    case LiouvillianKind::Positive: return "Positive";
    case LiouvillianKind::LindbladPrime: return "LindbladPrime";
  }
  return "?";
}

inline LiouvillianKind kind_from_string(const std::string& s) {
  if (s == "Full") return LiouvillianKind::Full;
  if (s == "Positive") return LiouvillianKind::Positive;
  if (s == "LindbladPrime") return LiouvillianKind::LindbladPrime;
  throw ValidationError("kind: unknown value '" + s + "' (expected Full, Positive or LindbladPrime)");
}

/// Uniform output grid 0, dt_out, ..., t_end.
struct TimeGrid {
  double t_end{10.0};
  double dt_out{0.1};

  void validate() const {
    if (!(dt_out > 0.0) || !std::isfinite(dt_out)) throw ValidationError("time grid: step must be positive");
    if (!(t_end >= 0.0) || !std::isfinite(t_end)) throw ValidationError("time grid: t_end must be non-negative");
    const double r = t_end / dt_out;
    if (std::abs(r - std::round(r)) > 1e-9 * std::max(1.0, r))
      throw ValidationError("time grid: t_end must be an integer multiple of the output step");
  }
  Index count() const { return static_cast<Index>(std::llround(t_end / dt_out)) + 1; }
  double time(Index i) const { return static_cast<double>(i) * dt_out; }
};

/// Named real channels on a uniform grid, optionally with standard errors.
struct TimeSeries {
  std::vector<double> times;
  std::vector<std::string> names;
  std::vector<std::vector<double>> values;
  std::vector<std::optional<std::vector<double>>> errors;
  nlohmann::json meta = nlohmann::json::object();

  void add(const std::string& name, std::vector<double> v, std::optional<std::vector<double>> err = std::nullopt) {
    if (v.size() != times.size()) throw ConsistencyError("time series: channel " + name + " has the wrong length");
    names.push_back(name);
    values.push_back(std::move(v));
    errors.push_back(std::move(err));
  }
  const std::vector<double>& channel(const std::string& name) const {
    for (std::size_t k = 0; k < names.size(); ++k)
      if (names[k] == name) return values[k];
    throw ValidationError("time series: no channel named " + name);
  }
  const std::vector<double>& channel_error(const std::string& name) const {
    for (std::size_t k = 0; k < names.size(); ++k)
      if (names[k] == name && errors[k]) return *errors[k];
    throw ValidationError("time series: no standard errors for channel " + name);
  }
};

struct NamedOperator {
  std::string name;
  SparseOperator op;
};

// ---------------------------------------------------------------------------
// Unitary evolution

/// |psi(t)> = sum_i exp(-i E_i t) <E_i|psi0> |E_i>. Channels: fidelity, norm and
/// one per observable (constrained basis). Eigencomponents with amplitude
/// below amp_cut are skipped.
inline TimeSeries evolve_unitary(const EigenSystem& es, const VectorXc& psi0, const TimeGrid& grid,
                                 const std::vector<NamedOperator>& observables = {},
                                 std::vector<VectorXc>* snapshots = nullptr, double amp_cut = 1e-15) {
  grid.validate();
  if (psi0.size() != es.vectors.rows()) throw ConsistencyError("evolve_unitary: state is not in the eigensystem's basis");
  if (std::abs(psi0.norm() - 1.0) > 1e-8) throw ValidationError("evolve_unitary: initial state is not normalized");
  const VectorXc a_all = es.vectors.adjoint() * psi0;
  std::vector<Index> sel;
  for (Index i = 0; i < a_all.size(); ++i)
    if (std::abs(a_all(i)) > amp_cut) sel.push_back(i);
  const Index ns = static_cast<Index>(sel.size());
  VectorXc a(ns);
  VectorXr e(ns);
  MatrixXc vs(es.vectors.rows(), ns);
  for (Index q = 0; q < ns; ++q) {
    a(q) = a_all(sel[q]);
    e(q) = es.energies(sel[q]);
    vs.col(q) = es.vectors.col(sel[q]);
  }
  std::vector<MatrixXc> reduced;
  for (const auto& o : observables) {
    if (o.op.rows() != es.vectors.rows()) throw ConsistencyError("evolve_unitary: observable " + o.name + " is not in the constrained basis");
    reduced.push_back(vs.adjoint() * (o.op.matrix() * vs));
  }
  TimeSeries ts;
  const Index n = grid.count();
  for (Index k = 0; k < n; ++k) ts.times.push_back(grid.time(k));
  std::vector<double> fid(n), nrm(n);
  std::vector<std::vector<double>> obs(observables.size(), std::vector<double>(n));
  const VectorXr w = a.cwiseAbs2();
  for (Index k = 0; k < n; ++k) {
    const double t = ts.times[k];
    VectorXc ct(ns);
    for (Index q = 0; q < ns; ++q) ct(q) = a(q) * std::exp(cplx(0.0, -e(q) * t));
    cplx amp{0.0, 0.0};
    for (Index q = 0; q < ns; ++q) amp += w(q) * std::exp(cplx(0.0, -e(q) * t));
    fid[k] = std::norm(amp);
    nrm[k] = ct.norm();
    for (std::size_t o = 0; o < reduced.size(); ++o) obs[o][k] = ct.dot(reduced[o] * ct).real();
    if (snapshots) snapshots->push_back(vs * ct);
  }
  ts.add("fidelity", std::move(fid));
  ts.add("norm", std::move(nrm));
  for (std::size_t o = 0; o < observables.size(); ++o) ts.add(observables[o].name, std::move(obs[o]));
  ts.meta["method"] = "unitary";
  ts.meta["eigencomponents"] = ns;
  return ts;
}

// ---------------------------------------------------------------------------
// Master equations

/// Full-basis ingredients of one Liouvillian kind:
///   d rho/dt = -i (Heff rho - rho Heff^dag) + sum_k rate_k L_k rho L_k^dag.
struct MasterSetup {
  LiouvillianKind kind{LiouvillianKind::Full};
  SparseOperator Heff;
  std::vector<SparseOperator> L;
  std::vector<double> rate;
  VectorXr pdiag;  // diagonal of the constrained-subspace projector
  double c{0.0};
  Spin j{};

  Index dim() const { return Heff.rows(); }
};

inline MasterSetup build_master_setup(const SiteModel& m, const Channels& ch, LiouvillianKind kind,
                                      std::int64_t cap = kDefaultFullCap) {
  MasterSetup s;
  s.kind = kind;
  s.c = m.c;
  s.j = m.j;
  const SparseOperator P = constraint_projector(m, cap);
  s.pdiag = VectorXr(P.rows());
  for (Index i = 0; i < P.rows(); ++i) s.pdiag(i) = P.matrix().coeff(i, i).real();
  auto push = [&](const Channel& c, double rate) {
    for (const auto& L : c.L) {
      s.L.push_back(full_operator({L}, m, cap));
      s.rate.push_back(rate);
    }
  };
  switch (kind) {
    case LiouvillianKind::Full:
      s.Heff = build_nonhermitian(m, ch, NonHermitian::HN, cap);
      push(ch.positive, ch.positive.gamma);
      push(ch.negative, ch.negative.gamma);
      break;
    case LiouvillianKind::Positive:
      s.Heff = build_nonhermitian(m, ch, NonHermitian::Hplus, cap);
      push(ch.positive, ch.positive.gamma);
      break;
    case LiouvillianKind::LindbladPrime:
      s.Heff = build_nonhermitian(m, ch, NonHermitian::HplusPrime, cap);
      push(ch.negative, -ch.negative.gamma);
      break;
  }
  return s;
}

/// Default integration step: min(0.01, 0.1 / (c sqrt(j/2))) for kinds whose
/// effective Hamiltonian carries the c-scaled blockade damping; 0.01 for
/// LindbladPrime, whose rates are O(1/c).
inline double default_dt(LiouvillianKind kind, double c, Spin j) {
  if (kind == LiouvillianKind::LindbladPrime) return 0.01;
  return std::min(0.01, 0.1 / (c * std::sqrt(j.value() / 2.0)));
}

/// Jump part J(rho) = sum_k rate_k L_k rho L_k^dag.
inline MatrixXc jump_superoperator(const MasterSetup& s, const MatrixXc& rho) {
  MatrixXc out = MatrixXc::Zero(rho.rows(), rho.cols());
  for (std::size_t k = 0; k < s.L.size(); ++k) {
    const MatrixXc y = s.L[k].matrix() * rho;
    out.noalias() += s.rate[k] * (s.L[k].matrix() * y.adjoint()).adjoint();
  }
  return out;
}

struct MasterOptions {
  double dt{0.0};  // 0 selects default_dt
  double trace_tol{1e-4};
  bool keep_snapshots{false};
};

namespace detail {

/// out = A X for CSR A and column-major X (Eigen's generic product is several
/// times slower for complex scalars here).
inline void csr_times_dense(const SparseXc& a, const MatrixXc& x, MatrixXc& out) {
  const Index n = a.rows(), m = x.cols();
  out.resize(n, m);
  const auto* outer = a.outerIndexPtr();
  const auto* inner = a.innerIndexPtr();
  const cplx* val = a.valuePtr();
  for (Index c = 0; c < m; ++c) {
    const double* xc = reinterpret_cast<const double*>(x.data() + c * x.rows());
    double* oc = reinterpret_cast<double*>(out.data() + c * n);
    for (Index r = 0; r < n; ++r) {
      double sr = 0.0, si = 0.0;
      for (auto k = outer[r]; k < outer[r + 1]; ++k) {
        const double ar = val[k].real(), ai = val[k].imag();
        const double xr = xc[2 * inner[k]], xi = xc[2 * inner[k] + 1];
        sr += ar * xr - ai * xi;
        si += ar * xi + ai * xr;
      }
      oc[2 * r] = sr;
      oc[2 * r + 1] = si;
    }
  }
}

/// out += rate * L rho L^dag, touching only the nonzero rows of L.
inline void add_sandwich(const SparseXc& l, const MatrixXc& rho, double rate, MatrixXc& out) {
  std::vector<Index> rows;
  for (Index r = 0; r < l.outerSize(); ++r)
    if (l.outerIndexPtr()[r + 1] > l.outerIndexPtr()[r]) rows.push_back(r);
  for (Index b : rows) {
    for (Index a : rows) {
      cplx acc{0.0, 0.0};
      for (SparseXc::InnerIterator ib(l, b); ib; ++ib) {
        cplx inner_sum{0.0, 0.0};
        for (SparseXc::InnerIterator ia(l, a); ia; ++ia) inner_sum += ia.value() * rho(ia.col(), ib.col());
        acc += inner_sum * std::conj(ib.value());
      }
      out(a, b) += rate * acc;
    }
  }
}

}  // namespace detail

/// Fixed-step RK4 propagation of a density matrix in the full basis.
/// Channels: fidelity <ref|rho|ref>, leakage Tr(rho P), trace, hermiticity
/// defect and one per observable (full basis).
inline TimeSeries evolve_master(const MasterSetup& s, const MatrixXc& rho0, const VectorXc& ref, const TimeGrid& grid,
                                const MasterOptions& opt = {}, const std::vector<NamedOperator>& observables = {},
                                std::vector<MatrixXc>* snapshots = nullptr, std::int64_t dm_cap = kDefaultDmCap) {
  grid.validate();
  const Index D = s.dim();
  if (D > dm_cap)
    throw CapacityError("density-matrix integration at dimension " + std::to_string(D) + " exceeds the cap of " +
                        std::to_string(dm_cap) + "; use trajectories");
  if (rho0.rows() != D || rho0.cols() != D) throw ConsistencyError("evolve_master: rho0 is not in the full basis");
  if ((rho0 - rho0.adjoint()).cwiseAbs().maxCoeff() > 1e-12) throw ValidationError("evolve_master: rho0 is not Hermitian");
  if (std::abs(rho0.trace() - 1.0) > 1e-10) throw ValidationError("evolve_master: rho0 does not have unit trace");
  if (ref.size() != D) throw ConsistencyError("evolve_master: reference state is not in the full basis");

  const double dt_req = opt.dt > 0.0 ? opt.dt : default_dt(s.kind, s.c, s.j);
  const Index n_sub = std::max<Index>(1, static_cast<Index>(std::ceil(grid.dt_out / dt_req - 1e-9)));
  const double dt = grid.dt_out / static_cast<double>(n_sub);
  const SparseXc& H = s.Heff.matrix();

  // -i H rho + (-i H rho)^dag is only right for Hermitian rho; feeding it the
  // roundoff anti-Hermitian part amplifies that part at rates ~ c, so every
  // stage input is Hermitized first.
  MatrixXc herm_in(D, D);
  auto rhs = [&](const MatrixXc& rho, MatrixXc& out) {
    herm_in = 0.5 * (rho + rho.adjoint());
    detail::csr_times_dense(H, herm_in, out);
    out *= cplx(0.0, -1.0);
    out += out.adjoint().eval();
    for (std::size_t k = 0; k < s.L.size(); ++k) detail::add_sandwich(s.L[k].matrix(), herm_in, s.rate[k], out);
  };

  TimeSeries ts;
  const Index n = grid.count();
  for (Index k = 0; k < n; ++k) ts.times.push_back(grid.time(k));
  std::vector<double> fid(n), leak(n), tr(n), herm(n);
  std::vector<std::vector<double>> obs(observables.size(), std::vector<double>(n));
  MatrixXc rho = rho0;
  MatrixXc k1(D, D), k2(D, D), k3(D, D), k4(D, D), tmp(D, D);
  auto record = [&](Index k, double defect) {
    fid[k] = ref.dot(rho * ref).real();
    leak[k] = (s.pdiag.cast<cplx>().array() * rho.diagonal().array()).sum().real();
    const cplx t = rho.trace();
    tr[k] = t.real();
    herm[k] = defect;
    for (std::size_t o = 0; o < observables.size(); ++o)
      obs[o][k] = (observables[o].op.matrix() * rho).trace().real();
    if (!std::isfinite(t.real()) || std::abs(t - 1.0) > opt.trace_tol)
      throw IntegrationError("trace drift " + std::to_string(std::abs(t - 1.0)) + " at t = " + std::to_string(ts.times[k]) +
                             " with dt = " + std::to_string(dt) + "; reduce dt");
    if (snapshots) snapshots->push_back(rho);
  };
  record(0, (rho - rho.adjoint()).cwiseAbs().maxCoeff());
  for (Index k = 1; k < n; ++k) {
    for (Index q = 0; q < n_sub; ++q) {
      rhs(rho, k1);
      tmp = rho + (0.5 * dt) * k1;
      rhs(tmp, k2);
      tmp = rho + (0.5 * dt) * k2;
      rhs(tmp, k3);
      tmp = rho + dt * k3;
      rhs(tmp, k4);
      rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    const double defect = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
    rho = 0.5 * (rho + rho.adjoint()).eval();
    record(k, defect);
  }
  ts.add("fidelity", std::move(fid));
  ts.add("leakage", std::move(leak));
  ts.add("trace", std::move(tr));
  ts.add("hermiticity_defect", std::move(herm));
  for (std::size_t o = 0; o < observables.size(); ++o) ts.add(observables[o].name, std::move(obs[o]));
  ts.meta["method"] = "master";
  ts.meta["kind"] = to_string(s.kind);
  ts.meta["c"] = s.c;
  ts.meta["dt"] = dt;
  return ts;
}

// ---------------------------------------------------------------------------
// Quantum trajectories

struct TrajectoryOptions {
  int n_traj{500};
  std::uint64_t seed{0};
  double dt{0.0};  // 0 selects default_dt
  int threads{1};
  double bisect_tol{1e-6};
  /// Trajectories share the deterministic no-jump segment from psi0 until
  /// their own jump; results are identical to running each one separately.
  bool share_prefix{true};
};

namespace detail {

/// Max-norm of Q A P (mask_to = Q diagonal, mask_from = P diagonal).
inline double block_norm(const SparseXc& a, const VectorXr& to, const VectorXr& from) {
  double m = 0.0;
  for (Index r = 0; r < a.outerSize(); ++r)
    for (SparseXc::InnerIterator it(a, r); it; ++it)
      if (to(it.row()) != 0.0 && from(it.col()) != 0.0) m = std::max(m, std::abs(it.value()));
  return m;
}

class TrajectoryRunner {
 public:
  TrajectoryRunner(const MasterSetup& s, const VectorXc& psi0, const VectorXc& ref, const std::vector<NamedOperator>& obs,
                   const TimeGrid& grid, const TrajectoryOptions& opt)
      : s_(s), psi0_(psi0), ref_(ref), obs_(obs), opt_(opt) {
    const double dt_req = opt.dt > 0.0 ? opt.dt : default_dt(s.kind, s.c, s.j);
    n_sub_ = std::max<Index>(1, static_cast<Index>(std::ceil(grid.dt_out / dt_req - 1e-9)));
    dt_ = grid.dt_out / static_cast<double>(n_sub_);
    n_out_ = grid.count();
    n_steps_ = (n_out_ - 1) * n_sub_;
    n_ch_ = 2 + static_cast<int>(obs.size());
    const VectorXr q = VectorXr::Ones(s.dim()) - s.pdiag;
    // Once a jump leaves the constrained subspace for good, every channel is
    // exactly zero from then on and the trajectory can stop.
    bool abs_ok = block_norm(s.Heff.matrix(), s.pdiag, q) == 0.0;
    for (const auto& L : s.L) abs_ok = abs_ok && block_norm(L.matrix(), s.pdiag, q) == 0.0;
    abs_ok = abs_ok && (q.cast<cplx>().array() * ref.array()).abs().maxCoeff() == 0.0;
    for (const auto& o : obs) abs_ok = abs_ok && block_norm(o.op.matrix(), q, q) == 0.0;
    absorbing_ = abs_ok;
  }

  double dt() const { return dt_; }
  bool absorbing() const { return absorbing_; }

  /// values[traj][out * n_ch + ch]
  std::vector<std::vector<double>> run() {
    const int n = opt_.n_traj;
    std::vector<std::vector<double>> res(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n_out_ * n_ch_)));
    std::vector<Stream> streams;
    std::vector<double> thresholds;
    for (int i = 0; i < n; ++i) {
      streams.emplace_back(trajectory_seed(opt_.seed, static_cast<std::uint64_t>(i)));
      thresholds.push_back(streams.back().uniform_open_low());
    }
    std::vector<Branch> branches;
    if (opt_.share_prefix) {
      branches = run_prefix(thresholds, res);
    } else {
      for (int i = 0; i < n; ++i) branches.push_back({i, 0, 0.0, psi0_, false});
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      Work w(s_.dim());
      for (std::size_t b = next++; b < branches.size(); b = next++) {
        const Branch& br = branches[b];
        run_branch(br, streams[br.traj], thresholds[br.traj], res[br.traj], w);
      }
    };
    const int nt = std::max(1, std::min<int>(opt_.threads, static_cast<int>(branches.size())));
    std::vector<std::thread> pool;
    for (int t = 1; t < nt; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return res;
  }

  int n_channels() const { return n_ch_; }
  Index n_out() const { return n_out_; }

 private:
  struct Branch {
    int traj;
    Index step;      // step during which the trajectory leaves the prefix
    double tau;      // offset of the jump inside that step
    VectorXc state;  // unnormalized state at the jump instant (or psi0)
    bool jumping;
  };
  struct Work {
    VectorXc k1, k2, k3, k4, tmp, y;
    explicit Work(Index d) : k1(d), k2(d), k3(d), k4(d), tmp(d), y(d) {}
  };

  void rk4(const VectorXc& y, double h, VectorXc& out, Work& w) const {
    const SparseXc& H = s_.Heff.matrix();
    const cplx mi(0.0, -1.0);
    w.k1.noalias() = mi * (H * y);
    w.tmp = y + (0.5 * h) * w.k1;
    w.k2.noalias() = mi * (H * w.tmp);
    w.tmp = y + (0.5 * h) * w.k2;
    w.k3.noalias() = mi * (H * w.tmp);
    w.tmp = y + h * w.k3;
    w.k4.noalias() = mi * (H * w.tmp);
    out = y + (h / 6.0) * (w.k1 + 2.0 * w.k2 + 2.0 * w.k3 + w.k4);
  }

  /// Finds tau in (0, h] with ||y(tau)||^2 = r by bisection; returns y(tau).
  std::pair<double, VectorXc> bisect(const VectorXc& y0, double h, double r, Work& w) const {
    double lo = 0.0, hi = h;
    VectorXc best;
    double best_tau = h;
    rk4(y0, h, best, w);
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      VectorXc ym;
      rk4(y0, mid, ym, w);
      const double sm = ym.squaredNorm();
      if (sm >= r) lo = mid;
      else {
        hi = mid;
        best = ym;
        best_tau = mid;
      }
      if (std::abs(sm - r) < opt_.bisect_tol) {
        best = std::move(ym);
        best_tau = mid;
        break;
      }
      if (hi - lo < 1e-15 * std::max(1.0, h)) break;
    }
    return {best_tau, best};
  }

  void eval(const VectorXc& y, double* out) const {
    const double S = y.squaredNorm();
    if (S <= 0.0) {
      std::fill(out, out + n_ch_, 0.0);
      return;
    }
    out[0] = std::norm(ref_.dot(y)) / S;
    out[1] = (s_.pdiag.array() * y.cwiseAbs2().array()).sum() / S;
    for (std::size_t o = 0; o < obs_.size(); ++o) out[2 + o] = y.dot(obs_[o].op.matrix() * y).real() / S;
  }

  /// Applies a jump: channel k with probability proportional to rate_k ||L_k y||^2.
  VectorXc jump(const VectorXc& y, Stream& st) const {
    std::vector<double> wts(s_.L.size());
    std::vector<VectorXc> cand(s_.L.size());
    double total = 0.0;
    for (std::size_t k = 0; k < s_.L.size(); ++k) {
      cand[k] = s_.L[k].matrix() * y;
      wts[k] = s_.rate[k] * cand[k].squaredNorm();
      total += wts[k];
    }
    const double u = st.uniform() * total;
    double acc = 0.0;
    std::size_t pick = s_.L.size() - 1;
    for (std::size_t k = 0; k < s_.L.size(); ++k) {
      acc += wts[k];
      if (u < acc) {
        pick = k;
        break;
      }
    }
    if (!(total > 0.0)) throw IntegrationError("trajectory jump with zero total jump weight; reduce dt");
    return cand[pick] / cand[pick].norm();
  }

  bool absorbed(const VectorXc& y) const {
    return absorbing_ && (s_.pdiag.array() * y.cwiseAbs2().array()).sum() == 0.0;
  }

  /// Advances y by h, performing any jumps on the way.
  /// Returns false when the trajectory has been absorbed.
  bool advance(VectorXc& y, double h, double& r, Stream& st, Work& w) const {
    VectorXc y_new;
    while (true) {
      rk4(y, h, y_new, w);
      const double S = y_new.squaredNorm();
      if (!std::isfinite(S)) throw IntegrationError("trajectory norm is not finite; reduce dt");
      if (S >= r) {
        y = std::move(y_new);
        return true;
      }
      auto [tau, yj] = bisect(y, h, r, w);
      y = jump(yj, st);
      if (absorbed(y)) return false;
      r = st.uniform_open_low();
      h -= tau;
      if (h <= 1e-15 * dt_) return true;
    }
  }

  std::vector<Branch> run_prefix(const std::vector<double>& thr, std::vector<std::vector<double>>& res) const {
    const int n = opt_.n_traj;
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return thr[a] > thr[b]; });
    std::vector<Branch> out;
    Work w(s_.dim());
    VectorXc y = psi0_, y_new;
    std::vector<double> vals(static_cast<std::size_t>(n_ch_));
    std::size_t p = 0;
    // prefix values are written for every trajectory still on the prefix
    auto write = [&](Index o) {
      eval(y, vals.data());
      for (std::size_t q = p; q < order.size(); ++q)
        std::copy(vals.begin(), vals.end(), res[order[q]].begin() + o * n_ch_);
    };
    write(0);
    for (Index st = 0; st < n_steps_ && p < order.size(); ++st) {
      rk4(y, dt_, y_new, w);
      const double S = y_new.squaredNorm();
      if (!std::isfinite(S)) throw IntegrationError("trajectory norm is not finite; reduce dt");
      while (p < order.size() && thr[order[p]] > S) {
        auto [tau, yj] = bisect(y, dt_, thr[order[p]], w);
        out.push_back({order[p], st, tau, std::move(yj), true});
        ++p;
      }
      y = y_new;
      if ((st + 1) % n_sub_ == 0) write((st + 1) / n_sub_);
    }
    return out;
  }

  void run_branch(const Branch& br, Stream& st, double r, std::vector<double>& res, Work& w) const {
    VectorXc y = br.state;
    Index step = br.step;
    if (br.jumping) {
      y = jump(y, st);
      if (absorbed(y)) {
        fill_zero(res, step + 1);
        return;
      }
      r = st.uniform_open_low();
      const double h = dt_ - br.tau;
      if (h > 1e-15 * dt_ && !advance(y, h, r, st, w)) {
        fill_zero(res, step + 1);
        return;
      }
      if ((step + 1) % n_sub_ == 0) eval(y, res.data() + ((step + 1) / n_sub_) * n_ch_);
      ++step;
    } else {
      eval(y, res.data());
    }
    for (; step < n_steps_; ++step) {
      if (!advance(y, dt_, r, st, w)) {
        fill_zero(res, step + 1);
        return;
      }
      if ((step + 1) % n_sub_ == 0) eval(y, res.data() + ((step + 1) / n_sub_) * n_ch_);
    }
  }

  /// Zeroes every output at or after the given step boundary.
  void fill_zero(std::vector<double>& res, Index boundary) const {
    const Index first = (boundary + n_sub_ - 1) / n_sub_;
    for (Index o = first; o < n_out_; ++o) std::fill(res.begin() + o * n_ch_, res.begin() + (o + 1) * n_ch_, 0.0);
  }

  const MasterSetup& s_;
  VectorXc psi0_;
  VectorXc ref_;
  const std::vector<NamedOperator>& obs_;
  TrajectoryOptions opt_;
  Index n_sub_{1}, n_out_{0}, n_steps_{0};
  double dt_{0.0};
  int n_ch_{2};
  bool absorbing_{false};
};

}  // namespace detail

/// Monte Carlo wave-function unraveling of the Positive or LindbladPrime
/// equation. Channels fidelity, leakage and observables with standard errors,
/// reduced in trajectory-index order.
inline TimeSeries sample_trajectories(const MasterSetup& s, const VectorXc& psi0, const VectorXc& ref, const TimeGrid& grid,
                                      const TrajectoryOptions& opt, const std::vector<NamedOperator>& observables = {}) {
  grid.validate();
  if (s.kind == LiouvillianKind::Full)
    throw ValidationError("unsupported unraveling: kind Full has a negative rate and no trajectory unraveling");
  if (opt.n_traj < 1) throw ValidationError("n_traj must be >= 1");
  if (psi0.size() != s.dim() || ref.size() != s.dim()) throw ConsistencyError("sample_trajectories: states must be in the full basis");
  if (std::abs(psi0.norm() - 1.0) > 1e-8) throw ValidationError("sample_trajectories: initial state is not normalized");
  for (double r : s.rate)
    if (r < 0.0) throw ValidationError("sample_trajectories: negative rate");
  detail::TrajectoryRunner runner(s, psi0, ref, observables, grid, opt);
  const auto res = runner.run();
  const int nch = runner.n_channels();
  const Index nout = runner.n_out();
  TimeSeries ts;
  for (Index k = 0; k < nout; ++k) ts.times.push_back(grid.time(k));
  std::vector<std::string> names{"fidelity", "leakage"};
  for (const auto& o : observables) names.push_back(o.name);
  const double n = static_cast<double>(opt.n_traj);
  for (int ch = 0; ch < nch; ++ch) {
    std::vector<double> mean(nout, 0.0), err(nout, 0.0);
    for (Index o = 0; o < nout; ++o) {
      double s1 = 0.0;
      for (int t = 0; t < opt.n_traj; ++t) s1 += res[t][o * nch + ch];
      const double m = s1 / n;
      double s2 = 0.0;
      for (int t = 0; t < opt.n_traj; ++t) {
        const double dv = res[t][o * nch + ch] - m;
        s2 += dv * dv;
      }
      mean[o] = m;
      err[o] = opt.n_traj > 1 ? std::sqrt(s2 / (n - 1.0) / n) : 0.0;
    }
    ts.add(names[ch], std::move(mean), std::move(err));
  }
  ts.meta["method"] = "trajectories";
  ts.meta["kind"] = to_string(s.kind);
  ts.meta["c"] = s.c;
  ts.meta["dt"] = runner.dt();
  ts.meta["n_traj"] = opt.n_traj;
  ts.meta["seed"] = opt.seed;
  ts.meta["absorbing_shortcut"] = runner.absorbing();
  return ts;
}

// ---------------------------------------------------------------------------
// Fidelity / leakage helpers

/// |<ref|psi_k>|^2 per snapshot (pure states).
inline std::vector<double> fidelity_series(const std::vector<VectorXc>& states, const VectorXc& ref) {
  std::vector<double> out;
  for (const auto& s : states) {
    if (s.size() != ref.size()) throw ConsistencyError("fidelity_series: basis mismatch");
    out.push_back(std::norm(ref.dot(s)));
  }
  return out;
}

/// <ref|rho_k|ref> per snapshot.
inline std::vector<double> fidelity_series(const std::vector<MatrixXc>& rhos, const VectorXc& ref) {
  std::vector<double> out;
  for (const auto& r : rhos) {
    if (r.rows() != ref.size()) throw ConsistencyError("fidelity_series: basis mismatch");
    out.push_back(ref.dot(r * ref).real());
  }
  return out;
}

/// Tr(rho_k P) per snapshot.
inline std::vector<double> leakage_series(const std::vector<MatrixXc>& rhos, const SparseOperator& P) {
  std::vector<double> out;
  for (const auto& r : rhos) {
    if (P.tag() != BasisTag::full || r.rows() != P.rows()) throw ConsistencyError("leakage_series: P must be in the snapshots' full basis");
    out.push_back((P.matrix() * r).trace().real());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Jump-free decay inside the constrained subspace

/// Restricts a full-basis operator to the constrained basis.
inline SparseOperator restrict_operator(const SparseOperator& full, const ConstrainedBasis& basis) {
  if (full.tag() != BasisTag::full || full.rows() != basis.model().full_dim())
    throw ConsistencyError("restrict_operator: operator is not in this model's full basis");
  std::vector<Triplet> t;
  for (Index i = 0; i < basis.dim(); ++i) {
    const Index r = static_cast<Index>(basis.state(i));
    for (SparseXc::InnerIterator it(full.matrix(), r); it; ++it) {
      const Index c = basis.index_of(static_cast<std::uint64_t>(it.col()));
      if (c >= 0) t.emplace_back(i, c, it.value());
    }
  }
  return SparseOperator::from_triplets(basis.dim(), basis.dim(), t, BasisTag::constrained);
}

/// Positive-kind effective Hamiltonian restricted to the constrained basis.
/// Requires Heff to map the constrained subspace into itself (true for the
/// spin-chain recipe); then the jump-free evolution of any constrained state
/// never leaves it.
inline SparseOperator constrained_effective_hamiltonian(const SiteModel& m, const ConstrainedBasis& basis, const Channels& ch,
                                                        std::int64_t cap = kDefaultFullCap) {
  const SparseOperator Hp = build_nonhermitian(m, ch, NonHermitian::Hplus, cap);
  const SparseOperator P = constraint_projector(m, cap);
  VectorXr pd(P.rows());
  for (Index i = 0; i < P.rows(); ++i) pd(i) = P.matrix().coeff(i, i).real();
  const VectorXr q = VectorXr::Ones(pd.size()) - pd;
  const double leak = detail::block_norm(Hp.matrix(), q, pd);
  if (leak > 1e-12)
    throw ValidationError("the Positive-kind effective Hamiltonian couples the constrained subspace to its complement (" +
                          std::to_string(leak) + "); use the density-matrix decay engine");
  return restrict_operator(Hp, basis);
}

/// |<v|psi(t)>|^2 for the jump-free evolution psi' = -i Heff psi, psi(0) = v.
inline std::vector<double> nojump_fidelity(const SparseOperator& Heff, const VectorXc& v, const TimeGrid& grid, double dt) {
  grid.validate();
  const Index n_sub = std::max<Index>(1, static_cast<Index>(std::ceil(grid.dt_out / dt - 1e-9)));
  const double h = grid.dt_out / static_cast<double>(n_sub);
  const SparseXc& H = Heff.matrix();
  const cplx mi(0.0, -1.0);
  VectorXc y = v, k1(v.size()), k2(v.size()), k3(v.size()), k4(v.size()), tmp(v.size());
  std::vector<double> out{std::norm(v.dot(y))};
  for (Index k = 1; k < grid.count(); ++k) {
    for (Index q = 0; q < n_sub; ++q) {
      k1.noalias() = mi * (H * y);
      tmp = y + (0.5 * h) * k1;
      k2.noalias() = mi * (H * tmp);
      tmp = y + (0.5 * h) * k2;
      k3.noalias() = mi * (H * tmp);
      tmp = y + h * k3;
      k4.noalias() = mi * (H * tmp);
      y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    const double f = std::norm(v.dot(y));
    if (!std::isfinite(f)) throw IntegrationError("jump-free evolution diverged; reduce dt");
    out.push_back(f);
  }
  return out;
}

}  // namespace scarkit
