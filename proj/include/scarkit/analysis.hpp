#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "scarkit/dynamics.hpp"
#include "scarkit/fit.hpp"
#include "scarkit/local_op.hpp"
#include "scarkit/operators.hpp"
#include "scarkit/spectra.hpp"

namespace scarkit {

/// How the Positive-kind decay of an eigenstate is computed.
///  nojump:       psi' = -i Hplus psi inside the constrained subspace (Hplus maps
///                it into itself for the spin-chain recipe); population that
///                jumps out and is later fed back is neglected.
///  master:       full-basis density-matrix RK4 (small N only).
///  trajectories: full-basis quantum trajectories.
enum class DecayEngine { nojump, master, trajectories };

inline const char* to_string(DecayEngine e) {
  switch (e) {
    case DecayEngine::nojump: return "nojump";
    case DecayEngine::master: return "master";
    case DecayEngine::trajectories: return "trajectories";
  }
  return "?";
}

inline DecayEngine decay_engine_from_string(const std::string& s) {
  if (s == "nojump") return DecayEngine::nojump;
  if (s == "master") return DecayEngine::master;
  if (s == "trajectories") return DecayEngine::trajectories;
  throw ValidationError("engine: unknown value '" + s + "' (expected nojump, master or trajectories)");
}

struct DecayOptions {
  DecayEngine engine{DecayEngine::nojump};
  TimeGrid grid{200.0, 1.0};
  double dt{0.0};  // 0: 0.01 for nojump, the dynamics default otherwise
  double window_fraction{0.1};
  int threads{1};
  int n_traj{500};
  std::uint64_t seed{0};
  bool keep_series{false};
};

struct DecayRow {
  Index index{0};
  double energy{0.0};
  double n_expect{0.0};
  double alpha{0.0};
  double alpha_stderr{0.0};
  Index points{0};
};

struct DecayScan {
  double c{0.0};
  std::vector<DecayRow> rows;
  FitResult origin;  // alpha = gamma_fit * <N>
  FitResult linear;  // diagnostic: alpha = a <N> + b
  std::vector<double> times;
  std::vector<std::vector<double>> fidelity;  // per row when keep_series

  double gamma_fit() const { return origin.coefficients(0); }
};

/// Nondegenerate eigenstates nearest in energy to eigenstate `center`
/// (included), `count` of them, returned by ascending index.
inline std::vector<Index> decay_window(const EigenSystem& es, Index center, Index count = 9) {
  if (center < 0 || center >= es.dim()) throw ValidationError("decay window: center index out of range");
  std::vector<Index> cand;
  for (Index i = 0; i < es.dim(); ++i)
    if (es.nondegenerate(i)) cand.push_back(i);
  if (static_cast<Index>(cand.size()) < count) throw ValidationError("decay window: not enough nondegenerate eigenstates");
  const double e0 = es.energies(center);
  std::stable_sort(cand.begin(), cand.end(), [&](Index a, Index b) {
    return std::abs(es.energies(a) - e0) < std::abs(es.energies(b) - e0);
  });
  cand.resize(static_cast<std::size_t>(count));
  std::sort(cand.begin(), cand.end());
  return cand;
}

/// Tagged scar closest to the middle of the spectrum (ties go to the higher energy).
inline Index central_scar(const EigenSystem& es, const std::vector<Index>& scars) {
  if (scars.empty()) throw ValidationError("no tagged scar states");
  const double mid = 0.5 * (es.energies(0) + es.energies(es.dim() - 1));
  Index best = scars.front();
  for (Index s : scars) {
    const double d = std::abs(es.energies(s) - mid), db = std::abs(es.energies(best) - mid);
    if (d < db - 1e-12 || (std::abs(d - db) <= 1e-12 && es.energies(s) > es.energies(best))) best = s;
  }
  return best;
}

/// Positive-kind fidelity decay of each listed eigenstate, exponential fits
/// and the through-origin regression alpha_i = gamma_fit <N>_i.
inline DecayScan decay_scan(const ModelOperators& ops, const EigenSystem& es, const std::vector<Index>& indices,
                            const DecayOptions& opt = {}) {
  opt.grid.validate();
  if (indices.empty()) throw ValidationError("decay_scan: empty eigenstate index set");
  for (Index i : indices) {
    if (i < 0 || i >= es.dim()) throw ValidationError("decay_scan: eigenstate index " + std::to_string(i) + " out of range");
    if (!es.nondegenerate(i))
      throw ValidationError("decay_scan: eigenstate " + std::to_string(i) + " is degenerate; degenerate states are excluded");
  }
  DecayScan out;
  out.c = ops.model.c;
  const Index nt = opt.grid.count();
  for (Index k = 0; k < nt; ++k) out.times.push_back(opt.grid.time(k));

  SparseOperator heff_c;
  MasterSetup master;
  if (opt.engine == DecayEngine::nojump) heff_c = constrained_effective_hamiltonian(ops.model, ops.basis, ops.channels);
  else master = build_master_setup(ops.model, ops.channels, LiouvillianKind::Positive);

  std::vector<DecayRow> rows(indices.size());
  std::vector<std::vector<double>> series(indices.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto work = [&]() {
    for (std::size_t q = next++; q < indices.size(); q = next++) {
      const Index i = indices[q];
      try {
        const VectorXc v = es.vectors.col(i);
        std::vector<double> f;
        double alpha_err = 0.0;
        if (opt.engine == DecayEngine::nojump) {
          f = nojump_fidelity(heff_c, v, opt.grid, opt.dt > 0.0 ? opt.dt : 0.01);
        } else {
          const VectorXc vf = embed(v, ops.basis);
          if (opt.engine == DecayEngine::master) {
            MasterOptions mo;
            mo.dt = opt.dt;
            f = evolve_master(master, vf * vf.adjoint(), vf, opt.grid, mo).channel("fidelity");
          } else {
            TrajectoryOptions to;
            to.n_traj = opt.n_traj;
            to.seed = opt.seed + static_cast<std::uint64_t>(i);
            to.dt = opt.dt;
            f = sample_trajectories(master, vf, vf, opt.grid, to).channel("fidelity");
          }
        }
        const FitResult fit = fit_exponential(out.times, f, opt.window_fraction);
        alpha_err = std::sqrt(std::max(0.0, fit.covariance(0, 0)));
        DecayRow r;
        r.index = i;
        r.energy = es.energies(i);
        r.n_expect = ops.Ncount.expectation(v);
        r.alpha = fit.coefficients(0);
        r.alpha_stderr = alpha_err;
        r.points = fit.n;
        rows[q] = r;
        if (opt.keep_series) series[q] = std::move(f);
      } catch (const Error& e) {
        std::lock_guard<std::mutex> lk(mu);
        if (!failure)
          failure = std::make_exception_ptr(
              Error(e.kind(), "decay_scan: eigenstate " + std::to_string(i) + ": " + e.message()));
      }
    }
  };
  const int nth = std::max(1, std::min<int>(opt.threads, static_cast<int>(indices.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < nth; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  out.rows = std::move(rows);
  if (opt.keep_series) out.fidelity = std::move(series);
  std::vector<double> x, y;
  for (const auto& r : out.rows) {
    x.push_back(r.n_expect);
    y.push_back(r.alpha);
  }
  out.origin = fit_through_origin(x, y);
  bool distinct = false;
  for (double v : x) distinct = distinct || std::abs(v - x.front()) > 0.0;
  if (x.size() >= 2 && distinct) out.linear = fit_linear(x, y);
  return out;
}

struct CScanRow {
  double c{0.0};
  double gamma_fit{0.0};
  double gamma_fit_stderr{0.0};
};

struct CScan {
  std::vector<CScanRow> rows;
  FitResult origin;  // gamma_fit = slope / c
  FitResult linear;  // diagnostic with intercept
  double relative_residual{0.0};
  std::vector<DecayScan> scans;
};

/// decay_scan at each c with a fixed eigenstate set, then gamma_fit vs 1/c.
inline CScan c_scan(const ModelSpec& spec, const std::vector<double>& c_list, const EigenSystem& es, const std::vector<Index>& indices,
                    const DecayOptions& opt = {}, std::optional<Recipe> recipe = std::nullopt) {
  if (c_list.size() < 2) throw ValidationError("c_scan: needs at least two values of c");
  for (double c : c_list)
    if (!(c > 0.0)) throw ValidationError("c_scan: every c must be positive");
  CScan out;
  std::vector<double> inv, g;
  for (double c : c_list) {
    ModelSpec s = spec;
    s.c = c;
    const ModelOperators ops = build_model(s, recipe);
    DecayScan d = decay_scan(ops, es, indices, opt);
    out.rows.push_back({c, d.gamma_fit(), std::sqrt(std::max(0.0, d.origin.covariance(0, 0)))});
    inv.push_back(1.0 / c);
    g.push_back(d.gamma_fit());
    out.scans.push_back(std::move(d));
  }
  out.origin = fit_through_origin(inv, g);
  out.linear = fit_linear(inv, g);
  out.relative_residual = relative_residual(out.origin, g);
  return out;
}

}  // namespace scarkit
