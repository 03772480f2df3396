#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "scarkit/analysis.hpp"
#include "scarkit/config.hpp"
#include "scarkit/dynamics.hpp"
#include "scarkit/io.hpp"
#include "scarkit/local_op.hpp"
#include "scarkit/operators.hpp"
#include "scarkit/spectra.hpp"
#include "scarkit/svg.hpp"
#include "scarkit/thermo.hpp"
#include "scarkit/version.hpp"

namespace scarkit {

/// Constrained-basis vector of an initial-state spec.
inline VectorXc make_initial_state(const ConstrainedBasis& basis, const StateSpec& s) {
  const SiteModel& m = basis.model();
  if (s.labels) return basis.product_state(*s.labels);
  switch (m.family) {
    case Family::spin_chain_blockade: return basis.product_state(std::vector<int>(m.n_sites, 0));
    case Family::hd_pxp: return basis.product_state(std::vector<int>(m.n_sites, m.j.twice));  // b_j = |j,-j>
    case Family::generic_bond_blockade: break;
  }
  throw ValidationError("initial_state: generic-bond-blockade has no special state; give a label list");
}

namespace detail {

struct TaskContext {
  const RunConfig& cfg;
  OutputDir& out;
  nlohmann::json& summary;
  std::ostream& log;
};

inline ModelOperators build_ops(const RunConfig& cfg, std::optional<double> c = std::nullopt) {
  ModelSpec s = cfg.model;
  if (c) s.c = *c;
  return build_model(s, cfg.recipe, cfg.basis_cap);
}

/// Eigensystem of the constrained Hamiltonian, through the on-disk cache
/// keyed by the spec hash (c does not enter H, but is part of the key).
inline EigenSystem eigensystem(const RunConfig& cfg, const ModelOperators& ops, nlohmann::json& summary) {
  if (ops.basis.dim() > cfg.diag_cap)
    throw CapacityError("dimension " + std::to_string(ops.basis.dim()) + " exceeds the dense eigensolver cap of " +
                        std::to_string(cfg.diag_cap) + "; use trajectory-only workflows for larger systems");
  std::optional<std::filesystem::path> path;
  if (!cfg.cache_dir.empty()) path = std::filesystem::path(cfg.cache_dir) / (spec_hash(cfg.model) + ".eig");
  if (path) {
    if (auto es = load_eigensystem(*path); es && es->dim() == ops.basis.dim()) {
      summary["eigen_cache"] = "hit";
      return std::move(*es);
    }
  }
  EigenSystem es = diagonalize(ops.H, cfg.diag_cap);
  if (path) {
    save_eigensystem(es, *path);
    summary["eigen_cache"] = "stored";
  } else {
    summary["eigen_cache"] = "disabled";
  }
  return es;
}

inline std::vector<NamedOperator> constrained_observables(const RunConfig& cfg, const ModelOperators& ops) {
  std::vector<NamedOperator> out;
  for (const auto& o : cfg.observables) {
    const Observable ob = build_local_observable(ops.model, o, &ops.channels);
    out.push_back({ob.name, constrained_operator(ob.terms, ops.basis).mark_hermitian()});
  }
  return out;
}

inline std::vector<NamedOperator> full_observables(const RunConfig& cfg, const ModelOperators& ops) {
  std::vector<NamedOperator> out;
  for (const auto& o : cfg.observables) {
    const Observable ob = build_local_observable(ops.model, o, &ops.channels);
    out.push_back({ob.name, full_operator(ob.terms, ops.model, cfg.full_cap)});
  }
  return out;
}

inline std::vector<Index> tagged_scars(const RunConfig& cfg, const ModelOperators& ops, const EigenSystem& es, VectorXr* overlap_out) {
  std::optional<VectorXc> psi;
  if (cfg.initial_state.labels || ops.model.family != Family::generic_bond_blockade) psi = make_initial_state(ops.basis, cfg.initial_state);
  if (!psi && !cfg.scars.explicit_list) {
    if (overlap_out) *overlap_out = VectorXr::Zero(es.dim());
    return {};
  }
  const VectorXr ov = psi ? overlaps(es, *psi, cfg.degeneracy) : VectorXr::Zero(es.dim());
  if (overlap_out) *overlap_out = ov;
  return tag_scars(ov, &es, cfg.scars);
}

inline std::vector<double> to_std(const VectorXr& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline bool contains(const std::vector<Index>& v, Index i) { return std::find(v.begin(), v.end(), i) != v.end(); }

inline std::vector<Index> decay_indices(const RunConfig& cfg, const ModelOperators& ops, const EigenSystem& es, nlohmann::json& summary) {
  if (cfg.indices) return *cfg.indices;
  const auto scars = tagged_scars(cfg, ops, es, nullptr);
  const Index center = central_scar(es, scars);
  summary["window_center"] = center;
  return decay_window(es, center, cfg.window_count);
}

inline DecayOptions decay_options(const RunConfig& cfg) {
  DecayOptions o;
  o.engine = cfg.engine;
  o.grid = cfg.grid();
  o.dt = cfg.dt;
  o.window_fraction = cfg.fit_window;
  o.threads = cfg.threads;
  o.n_traj = cfg.n_traj;
  o.seed = cfg.seed.value_or(0);
  return o;
}

// ---------------------------------------------------------------------------

inline void task_basis(TaskContext& ctx) {
  const SiteModel m = make_site_model(ctx.cfg.model);
  const ConstrainedBasis b = enumerate_basis(m, ctx.cfg.basis_cap);
  ctx.log << "dim = " << b.dim() << "\n";
  ctx.summary["dim"] = b.dim();
  ctx.summary["full_dim"] = m.full_dim();
  ctx.summary["transfer_matrix_count"] = transfer_matrix_count(m);
  ctx.summary["simulated_sites"] = m.n_sites;
  ctx.summary["local_dim"] = m.d;
  CsvTable t({"index", "full_index", "state"});
  for (Index i = 0; i < b.dim(); ++i) t.row({std::to_string(i), std::to_string(b.state(i)), "\"" + b.describe(i) + "\""});
  ctx.out.write("basis.csv", t.str());
}

inline void task_spectrum(TaskContext& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const ModelOperators ops = build_ops(cfg);
  const EigenSystem es = eigensystem(cfg, ops, ctx.summary);
  VectorXr ov;
  const auto scars = tagged_scars(cfg, ops, es, &ov);
  const VectorXr n = eigen_expectation(es, ops.Ncount, cfg.degeneracy);
  const auto obs = constrained_observables(cfg, ops);
  std::vector<VectorXr> vals;
  for (const auto& o : obs) vals.push_back(eigen_expectation(es, o.op, cfg.degeneracy));
  std::vector<std::string> header{"index", "energy", "degeneracy", "overlap", "n_expect"};
  for (const auto& o : obs) header.push_back(o.name);
  header.push_back("scar_flag");
  CsvTable t(header);
  for (Index i = 0; i < es.dim(); ++i) {
    std::vector<std::string> r{std::to_string(i), fmt(es.energies(i)), std::to_string(es.groups[es.group_of[i]].size()), fmt(ov(i)),
                               fmt(n(i))};
    for (const auto& v : vals) r.push_back(fmt(v(i)));
    r.push_back(contains(scars, i) ? "1" : "0");
    t.row(r);
  }
  ctx.out.write("spectrum.csv", t.str());
  const Histogram h = density_of_states(es.energies, cfg.dos_bin);
  CsvTable d({"bin_center", "count"});
  for (std::size_t b = 0; b < h.counts.size(); ++b) d.row({fmt(h.center(b)), std::to_string(h.counts[b])});
  ctx.out.write("dos.csv", d.str());
  ctx.summary["dim"] = es.dim();
  ctx.summary["scars"] = scars;
  std::vector<double> se;
  for (Index s : scars) se.push_back(es.energies(s));
  ctx.summary["scar_energies"] = se;
  ctx.summary["degenerate_groups"] = es.groups.size();
  if (cfg.plots) {
    SvgPlot p;
    p.title = "Overlap with the initial state";
    p.xlabel = "E";
    p.ylabel = "log10 |<psi0|E>|^2";
    p.logy = true;
    SvgSeries all{to_std(es.energies), to_std(ov), "#888888", false, 1.5, "eigenstates"};
    SvgSeries sc{{}, {}, "#d62728", false, 4.0, "tagged scars"};
    for (Index s : scars) {
      sc.x.push_back(es.energies(s));
      sc.y.push_back(ov(s));
    }
    p.series = {all, sc};
    ctx.out.write("overlap.svg", p.render());
  }
}

inline void task_evolve(TaskContext& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const ModelOperators ops = build_ops(cfg);
  const VectorXc psi = make_initial_state(ops.basis, cfg.initial_state);
  const TimeGrid grid = cfg.grid();
  std::optional<EigenSystem> es;
  if (cfg.method == "unitary" || ops.basis.dim() <= cfg.diag_cap) es = eigensystem(cfg, ops, ctx.summary);
  TimeSeries ts;
  if (cfg.method == "unitary") {
    ts = evolve_unitary(*es, psi, grid, constrained_observables(cfg, ops));
  } else {
    const MasterSetup ms = build_master_setup(ops.model, ops.channels, cfg.kind, cfg.full_cap);
    const VectorXc pf = embed(psi, ops.basis);
    const auto obs = full_observables(cfg, ops);
    if (cfg.method == "master") {
      MasterOptions mo;
      mo.dt = cfg.dt;
      ts = evolve_master(ms, pf * pf.adjoint(), pf, grid, mo, obs, nullptr, cfg.dm_cap);
    } else {
      TrajectoryOptions to;
      to.n_traj = cfg.n_traj;
      to.seed = *cfg.seed;
      to.dt = cfg.dt;
      to.threads = cfg.threads;
      to.share_prefix = cfg.share_prefix;
      ts = sample_trajectories(ms, pf, pf, grid, to, obs);
    }
    if (es) {
      const TimeSeries u = evolve_unitary(*es, psi, grid);
      ts.add("fidelity_unitary", u.channel("fidelity"));
    }
  }
  ctx.out.write("evolve.csv", time_series_csv(ts));
  ctx.summary["series"] = ts.meta;
  ctx.summary["initial_state"] = cfg.initial_state.describe();
  if (cfg.plots) {
    SvgPlot p;
    p.title = "Fidelity";
    p.xlabel = "t";
    p.ylabel = "fidelity";
    p.series.push_back({ts.times, ts.channel("fidelity"), "#1f77b4", true, 0, to_string(cfg.kind)});
    if (cfg.method != "unitary" && es) p.series.push_back({ts.times, ts.channel("fidelity_unitary"), "#444444", true, 0, "unitary"});
    if (cfg.method == "unitary") p.series.back().label = "unitary";
    ctx.out.write("fidelity.svg", p.render());
  }
}

inline void write_decay(TaskContext& ctx, const DecayScan& d, const std::vector<Index>& scars, const std::string& suffix) {
  CsvTable t({"index", "energy", "n_expect", "alpha", "alpha_stderr", "points", "scar_flag"});
  for (const auto& r : d.rows)
    t.row({std::to_string(r.index), fmt(r.energy), fmt(r.n_expect), fmt(r.alpha), fmt(r.alpha_stderr), std::to_string(r.points),
           contains(scars, r.index) ? "1" : "0"});
  ctx.out.write("decay" + suffix + ".csv", t.str());
}

inline void task_decay(TaskContext& ctx) {
  const RunConfig& cfg = ctx.cfg;
  if (cfg.engine == DecayEngine::trajectories && !cfg.seed) throw ValidationError("seed: required for the trajectories engine");
  const ModelOperators ops = build_ops(cfg);
  const EigenSystem es = eigensystem(cfg, ops, ctx.summary);
  const auto idx = decay_indices(cfg, ops, es, ctx.summary);
  const auto scars = tagged_scars(cfg, ops, es, nullptr);
  DecayOptions opt = decay_options(cfg);
  opt.keep_series = true;
  const DecayScan d = decay_scan(ops, es, idx, opt);
  write_decay(ctx, d, scars, "");
  std::vector<std::string> header{"t"};
  for (const auto& r : d.rows) header.push_back("f_" + std::to_string(r.index));
  CsvTable s(header);
  for (std::size_t k = 0; k < d.times.size(); ++k) {
    std::vector<std::string> row{fmt(d.times[k])};
    for (const auto& f : d.fidelity) row.push_back(fmt(f[k]));
    s.row(row);
  }
  ctx.out.write("decay_series.csv", s.str());
  const double gamma2 = ops.channels.negative.gamma;
  ctx.summary["c"] = cfg.model.c;
  ctx.summary["engine"] = to_string(cfg.engine);
  ctx.summary["indices"] = idx;
  ctx.summary["gamma_fit"] = -d.gamma_fit();  // sign convention: alpha_i = -gamma_fit <N>_i
  ctx.summary["alpha_per_n"] = d.gamma_fit();
  ctx.summary["alpha_per_n_stderr"] = std::sqrt(std::max(0.0, d.origin.covariance(0, 0)));
  ctx.summary["gamma2"] = gamma2;
  ctx.summary["relative_deviation"] = std::abs(d.gamma_fit() - std::abs(gamma2)) / std::abs(gamma2);
  if (d.linear.coefficients.size() == 2) {
    ctx.summary["linear_slope"] = d.linear.coefficients(0);
    ctx.summary["linear_intercept"] = d.linear.coefficients(1);
  }
  Index slowest = d.rows.front().index;
  double amin = d.rows.front().alpha;
  for (const auto& r : d.rows)
    if (r.alpha < amin) amin = r.alpha, slowest = r.index;
  ctx.summary["slowest_index"] = slowest;
  if (cfg.plots) {
    SvgPlot p;
    p.title = "Decay rate vs <N>";
    p.xlabel = "<N>_i";
    p.ylabel = "alpha_i";
    SvgSeries pts{{}, {}, "#1f77b4", false, 3.5, "eigenstates"};
    SvgSeries sc{{}, {}, "#d62728", false, 4.5, "scar"};
    double xmax = 0.0;
    for (const auto& r : d.rows) {
      (contains(scars, r.index) ? sc : pts).x.push_back(r.n_expect);
      (contains(scars, r.index) ? sc : pts).y.push_back(r.alpha);
      xmax = std::max(xmax, r.n_expect);
    }
    p.series = {pts, sc, {{0.0, xmax}, {0.0, d.gamma_fit() * xmax}, "#444444", true, 0, "through-origin fit"}};
    ctx.out.write("decay.svg", p.render());
  }
}

inline void task_cscan(TaskContext& ctx) {
  const RunConfig& cfg = ctx.cfg;
  if (cfg.engine == DecayEngine::trajectories && !cfg.seed) throw ValidationError("seed: required for the trajectories engine");
  const ModelOperators ops = build_ops(cfg);
  const EigenSystem es = eigensystem(cfg, ops, ctx.summary);
  const auto idx = decay_indices(cfg, ops, es, ctx.summary);
  const auto scars = tagged_scars(cfg, ops, es, nullptr);
  const CScan cs = c_scan(cfg.model, cfg.c_list, es, idx, decay_options(cfg), cfg.recipe);
  CsvTable t({"c", "inv_c", "alpha_per_n", "alpha_per_n_stderr"});
  for (const auto& r : cs.rows) t.row({fmt(r.c), fmt(1.0 / r.c), fmt(r.gamma_fit), fmt(r.gamma_fit_stderr)});
  ctx.out.write("cscan.csv", t.str());
  for (std::size_t k = 0; k < cs.scans.size(); ++k) write_decay(ctx, cs.scans[k], scars, "_c" + fmt(cs.rows[k].c));
  const double expected = 2.0 * std::sqrt(2.0 * cfg.model.j.value());
  ctx.summary["indices"] = idx;
  ctx.summary["slope"] = cs.origin.coefficients(0);
  ctx.summary["expected_slope"] = expected;
  ctx.summary["relative_deviation"] = std::abs(cs.origin.coefficients(0) - expected) / expected;
  ctx.summary["relative_residual"] = cs.relative_residual;
  ctx.summary["linear_slope"] = cs.linear.coefficients(0);
  ctx.summary["linear_intercept"] = cs.linear.coefficients(1);
  if (cfg.plots) {
    SvgPlot p;
    p.title = "Decay constant vs 1/c";
    p.xlabel = "1/c";
    p.ylabel = "alpha/<N>";
    SvgSeries pts{{}, {}, "#1f77b4", false, 3.5, "scan"};
    double xmax = 0.0;
    for (const auto& r : cs.rows) {
      pts.x.push_back(1.0 / r.c);
      pts.y.push_back(r.gamma_fit);
      xmax = std::max(xmax, 1.0 / r.c);
    }
    p.series = {pts, {{0.0, xmax}, {0.0, cs.origin.coefficients(0) * xmax}, "#444444", true, 0, "through-origin fit"}};
    ctx.out.write("cscan.svg", p.render());
  }
}

/// Fits log h(t) = -kappa t over t <= t_max and returns the initial slope -kappa
/// with its standard error.
inline std::pair<double, double> leakage_slope(const std::vector<double>& t, const std::vector<double>& h, double t_max) {
  std::vector<double> x, y;
  for (std::size_t k = 1; k < t.size(); ++k) {
    if (t[k] > t_max + 1e-12) break;
    if (!(h[k] > 0.0)) break;
    x.push_back(t[k]);
    y.push_back(std::log(h[k]));
  }
  if (x.size() < 2) throw ValidationError("leakage: fewer than 2 points in the slope-fit window");
  const FitResult f = fit_through_origin(x, y);
  return {f.coefficients(0), std::sqrt(std::max(0.0, f.covariance(0, 0)))};
}

inline void task_leakage(TaskContext& ctx) {
  const RunConfig& cfg = ctx.cfg;
  if (cfg.kind == LiouvillianKind::Full) throw ValidationError("kind: leakage runs use Positive or LindbladPrime");
  const bool traj = cfg.method != "master";
  if (traj && !cfg.seed) throw ValidationError("seed: required for trajectory runs");
  const ModelOperators ops = build_ops(cfg);
  std::optional<EigenSystem> es;
  if (ops.basis.dim() <= cfg.diag_cap) es = eigensystem(cfg, ops, ctx.summary);
  const MasterSetup ms = build_master_setup(ops.model, ops.channels, cfg.kind, cfg.full_cap);
  const double gamma2 = ops.channels.negative.gamma;
  const TimeGrid grid = cfg.grid();
  const double t_fit = cfg.fit_t_max.value_or(cfg.t_end);
  CsvTable sum({"state", "labels", "energy", "n_bar", "predicted_slope", "fitted_slope", "fitted_slope_stderr", "relative_deviation"});
  nlohmann::json rows = nlohmann::json::array();
  SvgPlot p;
  p.title = "Probability of remaining in the constrained subspace";
  p.xlabel = "t";
  p.ylabel = "Tr(rho P)";
  const char* colors[] = {"#1f77b4", "#888888", "#bbbbbb", "#2ca02c", "#9467bd"};
  for (std::size_t k = 0; k < cfg.initial_states.size(); ++k) {
    const VectorXc psi = make_initial_state(ops.basis, cfg.initial_states[k]);
    const VectorXc pf = embed(psi, ops.basis);
    const double energy = ops.H.expectation(psi);
    double n_bar = std::nan("");
    if (es) n_bar = diagonal_ensemble(*es, psi, ops.Ncount);
    TimeSeries ts;
    if (traj) {
      TrajectoryOptions to;
      to.n_traj = cfg.n_traj;
      to.seed = *cfg.seed + static_cast<std::uint64_t>(k);
      to.dt = cfg.dt;
      to.threads = cfg.threads;
      to.share_prefix = cfg.share_prefix;
      ts = sample_trajectories(ms, pf, pf, grid, to);
    } else {
      MasterOptions mo;
      mo.dt = cfg.dt;
      ts = evolve_master(ms, pf * pf.adjoint(), pf, grid, mo, {}, nullptr, cfg.dm_cap);
    }
    const auto& h = ts.channel("leakage");
    std::vector<double> pred;
    for (double t : ts.times) pred.push_back(1.0 + gamma2 * n_bar * t);
    ts.add("prediction", pred);
    ctx.out.write("leakage_" + std::to_string(k) + ".csv", time_series_csv(ts));
    const auto [slope, err] = leakage_slope(ts.times, h, t_fit);
    const double predicted = gamma2 * n_bar;
    const double rel = std::abs(slope - predicted) / std::abs(predicted);
    sum.row({std::to_string(k), cfg.initial_states[k].describe(), fmt(energy), fmt(n_bar), fmt(predicted), fmt(slope), fmt(err), fmt(rel)});
    rows.push_back({{"state", k},
                    {"labels", cfg.initial_states[k].describe()},
                    {"energy", energy},
                    {"n_bar", n_bar},
                    {"predicted_slope", predicted},
                    {"fitted_slope", slope},
                    {"fitted_slope_stderr", err},
                    {"relative_deviation", rel},
                    {"series", ts.meta}});
    p.series.push_back({ts.times, h, colors[k % 5], true, 0, cfg.initial_states[k].describe()});
    p.series.push_back({ts.times, pred, colors[k % 5], false, 1.0, ""});
  }
  ctx.out.write("leakage.csv", sum.str());
  ctx.summary["states"] = rows;
  ctx.summary["kind"] = to_string(cfg.kind);
  ctx.summary["gamma2"] = gamma2;
  ctx.summary["fit_t_max"] = t_fit;
  if (cfg.plots) ctx.out.write("leakage.svg", p.render());
}

inline double trapezoid_mean(const std::vector<double>& t, const std::vector<double>& v) {
  if (t.size() < 2) return v.empty() ? 0.0 : v.front();
  double s = 0.0;
  for (std::size_t k = 1; k < t.size(); ++k) s += 0.5 * (v[k] + v[k - 1]) * (t[k] - t[k - 1]);
  return s / (t.back() - t.front());
}

inline void task_ensemble(TaskContext& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const ModelOperators ops = build_ops(cfg);
  const EigenSystem es = eigensystem(cfg, ops, ctx.summary);
  const auto scars = tagged_scars(cfg, ops, es, nullptr);
  const VectorXr n = eigen_expectation(es, ops.Ncount, cfg.degeneracy);
  const auto obs = constrained_observables(cfg, ops);
  std::vector<VectorXr> vals;
  for (const auto& o : obs) vals.push_back(eigen_expectation(es, o.op, cfg.degeneracy));
  std::vector<int> sub;
  for (int s : cfg.subsystem) sub.push_back(s - 1);
  const PartialTrace pt(ops.basis, sub);

  std::vector<Index> targets;
  if (cfg.targets == "scars") targets = scars;
  else if (cfg.targets == "list") targets = cfg.target_indices;
  else
    for (Index i = 0; i < es.dim(); ++i) targets.push_back(i);
  for (Index i : targets)
    if (i < 0 || i >= es.dim()) throw ValidationError("targets: eigenstate index " + std::to_string(i) + " out of range");

  std::vector<std::string> header{"index", "energy", "dev_canonical", "dev_grand", "d1_canonical", "d1_grand",
                                  "d2_canonical", "d2_grand", "scar_flag", "n_expect", "beta_canonical", "beta_grand",
                                  "nu_grand", "mu_grand", "residual_canonical", "residual_grand", "status"};
  for (std::size_t k = 1; k < obs.size(); ++k) {
    header.push_back("dev_canonical_" + obs[k].name);
    header.push_back("dev_grand_" + obs[k].name);
  }
  CsvTable t(header);
  const bool skip_out_of_range = cfg.targets == "all";
  Index done = 0, skipped = 0;
  std::vector<double> pe, pc_dev, pg_dev;
  for (Index i : targets) {
    EnsembleParams pc, pg;
    try {
      pc = canonical_beta(es.energies, es.energies(i));
      pg = grand_canonical_params(es.energies, n, es.energies(i), n(i));
    } catch (const RangeError& e) {
      if (!skip_out_of_range) throw;
      std::vector<std::string> r(header.size(), "nan");
      r[0] = std::to_string(i);
      r[1] = fmt(es.energies(i));
      r[8] = contains(scars, i) ? "1" : "0";
      r[9] = fmt(n(i));
      r[16] = "out_of_range";
      t.row(r);
      ++skipped;
      continue;
    }
    const MatrixXc sigma = pt.reduce(es.vectors.col(i));
    const MatrixXc rc = reduced_dm(pt, es.vectors, pc.weights), rg = reduced_dm(pt, es.vectors, pg.weights);
    const double dev_c = ensemble_average(pc, vals[0]) - vals[0](i), dev_g = ensemble_average(pg, vals[0]) - vals[0](i);
    std::vector<std::string> r{std::to_string(i), fmt(es.energies(i)), fmt(dev_c), fmt(dev_g),
                               fmt(schatten_distance(rc, sigma, 1)), fmt(schatten_distance(rg, sigma, 1)),
                               fmt(schatten_distance(rc, sigma, 2)), fmt(schatten_distance(rg, sigma, 2)),
                               contains(scars, i) ? "1" : "0", fmt(n(i)), fmt(pc.beta), fmt(pg.beta), fmt(pg.nu), fmt(pg.mu),
                               fmt(pc.residual), fmt(pg.residual), "ok"};
    for (std::size_t k = 1; k < obs.size(); ++k) {
      r.push_back(fmt(ensemble_average(pc, vals[k]) - vals[k](i)));
      r.push_back(fmt(ensemble_average(pg, vals[k]) - vals[k](i)));
    }
    t.row(r);
    ++done;
    pe.push_back(es.energies(i));
    pc_dev.push_back(std::abs(dev_c));
    pg_dev.push_back(std::abs(dev_g));
  }
  ctx.out.write("ensemble.csv", t.str());
  ctx.summary["observable"] = obs[0].name;
  ctx.summary["targets"] = cfg.targets;
  ctx.summary["solved"] = done;
  ctx.summary["skipped_out_of_range"] = skipped;
  ctx.summary["scars"] = scars;
  ctx.summary["subsystem"] = cfg.subsystem;

  if (cfg.time_average) {
    const VectorXc psi = make_initial_state(ops.basis, cfg.initial_state);
    const TimeSeries ts = evolve_unitary(es, psi, cfg.grid(), obs);
    const double e0 = ops.H.expectation(psi);
    const double n_bar = diagonal_ensemble(es, psi, ops.Ncount);
    const EnsembleParams pc = canonical_beta(es.energies, e0);
    const EnsembleParams pg = grand_canonical_params(es.energies, n, e0, n_bar);
    CsvTable d({"observable", "time_average", "canonical", "grand_canonical", "diagonal_ensemble", "closer"});
    nlohmann::json dj = nlohmann::json::array();
    for (std::size_t k = 0; k < obs.size(); ++k) {
      const double avg = trapezoid_mean(ts.times, ts.channel(obs[k].name));
      const double c = ensemble_average(pc, vals[k]), g = ensemble_average(pg, vals[k]);
      const double diag = diagonal_ensemble(es, psi, obs[k].op);
      const std::string closer = std::abs(avg - g) < std::abs(avg - c) ? "grand_canonical" : "canonical";
      d.row({obs[k].name, fmt(avg), fmt(c), fmt(g), fmt(diag), closer});
      dj.push_back({{"observable", obs[k].name}, {"time_average", avg}, {"canonical", c}, {"grand_canonical", g}, {"diagonal", diag}, {"closer", closer}});
    }
    ctx.out.write("dynamics_vs_ensembles.csv", d.str());
    ctx.out.write("dynamics.csv", time_series_csv(ts));
    ctx.summary["time_average"] = {{"energy", e0}, {"n_bar", n_bar}, {"beta_canonical", pc.beta}, {"beta_grand", pg.beta},
                                   {"nu_grand", pg.nu}, {"rows", dj}};
  }
  if (cfg.plots) {
    // deviation scatter for the primary observable
    SvgPlot p;
    p.title = "Ensemble deviation, " + obs[0].name;
    p.xlabel = "E";
    p.ylabel = "|Tr(O rho) - <O>_i|";
    p.logy = true;
    p.series = {{pe, pc_dev, "#888888", false, 3.0, "canonical"}, {pe, pg_dev, "#1f77b4", false, 3.0, "grand canonical"}};
    ctx.out.write("ensemble.svg", p.render());
  }
}

inline void task_ethfit(TaskContext& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const ModelOperators ops = build_ops(cfg);
  const EigenSystem es = eigensystem(cfg, ops, ctx.summary);
  const auto scars = tagged_scars(cfg, ops, es, nullptr);
  const VectorXr n = eigen_expectation(es, ops.Ncount, cfg.degeneracy);
  const auto obs = constrained_observables(cfg, ops);
  const VectorXr v = eigen_expectation(es, obs[0].op, cfg.degeneracy);
  std::vector<Index> used;
  std::vector<double> E, N, O;
  for (Index i = 0; i < es.dim(); ++i) {
    if (cfg.energy_window && (es.energies(i) < (*cfg.energy_window)[0] || es.energies(i) > (*cfg.energy_window)[1])) continue;
    used.push_back(i);
    E.push_back(es.energies(i));
    N.push_back(n(i));
    O.push_back(v(i));
  }
  const CubicSurface s2 = fit_bivariate_cubic(E, N, O);
  const CubicCurve s1 = fit_energy_cubic(E, O);
  CsvTable t({"index", "energy", "n_expect", "value", "fit_2d", "fit_energy", "residual_2d", "residual_energy", "scar_flag"});
  double scar2 = 0.0, scar1 = 0.0;
  Index ns = 0;
  for (std::size_t k = 0; k < used.size(); ++k) {
    const double f2 = s2.predict(E[k], N[k]), f1 = s1.predict(E[k]);
    const bool sc = contains(scars, used[k]);
    t.row({std::to_string(used[k]), fmt(E[k]), fmt(N[k]), fmt(O[k]), fmt(f2), fmt(f1), fmt(O[k] - f2), fmt(O[k] - f1), sc ? "1" : "0"});
    if (sc) {
      scar2 += (O[k] - f2) * (O[k] - f2);
      scar1 += (O[k] - f1) * (O[k] - f1);
      ++ns;
    }
  }
  ctx.out.write("ethfit.csv", t.str());
  ctx.summary["observable"] = obs[0].name;
  ctx.summary["samples"] = used.size();
  ctx.summary["rms_2d"] = s2.fit.residual_rms;
  ctx.summary["rms_energy"] = s1.fit.residual_rms;
  ctx.summary["coefficients_2d"] = to_std(s2.fit.coefficients);
  ctx.summary["coefficients_energy"] = to_std(s1.fit.coefficients);
  if (ns) {
    ctx.summary["scar_rms_2d"] = std::sqrt(scar2 / static_cast<double>(ns));
    ctx.summary["scar_rms_energy"] = std::sqrt(scar1 / static_cast<double>(ns));
  }
  if (cfg.plots) {
    SvgPlot p;
    p.title = "Eigenstate expectation values, " + obs[0].name;
    p.xlabel = "E";
    p.ylabel = obs[0].name;
    SvgSeries pts{E, O, "#888888", false, 1.5, "eigenstates"};
    SvgSeries fit{E, {}, "#1f77b4", false, 1.0, "bivariate cubic"};
    for (std::size_t k = 0; k < E.size(); ++k) fit.y.push_back(s2.predict(E[k], N[k]));
    SvgSeries sc{{}, {}, "#d62728", false, 4.0, "scars"};
    for (std::size_t k = 0; k < used.size(); ++k)
      if (contains(scars, used[k])) {
        sc.x.push_back(E[k]);
        sc.y.push_back(O[k]);
      }
    p.series = {pts, fit, sc};
    ctx.out.write("ethfit.svg", p.render());
  }
}

}  // namespace detail

/// Runs one task and writes its artifacts plus run.json into cfg.output.
/// On failure every file written by this run is removed and the error rethrown.
inline nlohmann::json run_task(const RunConfig& cfg, std::ostream& log = std::cout) {
  if (cfg.stochastic() && !cfg.seed) throw ValidationError("seed: required for stochastic tasks (no random default)");
  const auto t0 = std::chrono::steady_clock::now();
  OutputDir out(cfg.output);
  nlohmann::json summary = nlohmann::json::object();
  detail::TaskContext ctx{cfg, out, summary, log};
  try {
    switch (cfg.task) {
      case Task::basis: detail::task_basis(ctx); break;
      case Task::spectrum: detail::task_spectrum(ctx); break;
      case Task::evolve: detail::task_evolve(ctx); break;
      case Task::decay: detail::task_decay(ctx); break;
      case Task::cscan: detail::task_cscan(ctx); break;
      case Task::leakage: detail::task_leakage(ctx); break;
      case Task::ensemble: detail::task_ensemble(ctx); break;
      case Task::ethfit: detail::task_ethfit(ctx); break;
    }
    nlohmann::json meta;
    meta["task"] = to_string(cfg.task);
    meta["spec"] = to_json(cfg.model);
    meta["spec_hash"] = spec_hash(cfg.model);
    meta["code_version"] = SCARKIT_VERSION;
    meta["recipe"] = to_string(cfg.recipe.value_or(default_recipe(make_site_model(cfg.model))));
    if (cfg.seed) meta["seed"] = *cfg.seed;
    meta["threads"] = cfg.threads;
    meta["result"] = summary;
    meta["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.write_json("run.json", meta);
    return meta;
  } catch (const Error& e) {
    out.rollback();
    throw Error(e.kind(), std::string("task ") + to_string(cfg.task) + ": " + e.message());
  } catch (...) {
    out.rollback();
    throw;
  }
}

}  // namespace scarkit
