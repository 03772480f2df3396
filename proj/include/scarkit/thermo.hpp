#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "scarkit/basis.hpp"
#include "scarkit/errors.hpp"
#include "scarkit/types.hpp"

namespace scarkit {

/// Diagonal ensemble over eigenstates with w_i ~ exp(-beta E_i + nu N_i),
/// nu = beta mu. mu is reported as nu / beta and is infinite when beta = 0
/// with nu != 0, so nu is the primary parameter.
struct EnsembleParams {
  double beta{0.0};
  double nu{0.0};
  double mu{0.0};
  VectorXr weights;
  double residual{0.0};  // scaled, max-norm
  int iterations{0};
};

namespace detail {

/// Normalized weights exp(a_i) computed with a max shift.
inline VectorXr softmax(const VectorXr& a) {
  const double m = a.maxCoeff();
  VectorXr w = (a.array() - m).exp();
  return w / w.sum();
}

inline double mu_of(double beta, double nu) {
  if (nu == 0.0) return 0.0;
  if (beta == 0.0) return nu > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
  return nu / beta;
}

}  // namespace detail

inline VectorXr canonical_weights(const VectorXr& E, double beta) { return detail::softmax(-beta * E); }

inline VectorXr grand_canonical_weights(const VectorXr& E, const VectorXr& N, double beta, double nu) {
  return detail::softmax(-beta * E + nu * N);
}

/// beta with <E>_beta = E_target, by bracketing plus safeguarded Newton.
inline EnsembleParams canonical_beta(const VectorXr& E, double E_target) {
  if (E.size() < 2) throw ValidationError("canonical_beta: need at least two energies");
  const double lo = E.minCoeff(), hi = E.maxCoeff(), range = hi - lo;
  if (!(E_target > lo) || !(E_target < hi))
    throw RangeError("canonical_beta: target energy " + std::to_string(E_target) + " is outside the open spectral range (" +
                     std::to_string(lo) + ", " + std::to_string(hi) + ")");
  auto mean = [&](double b, double* var) {
    const VectorXr w = canonical_weights(E, b);
    const double m = w.dot(E);
    if (var) *var = w.dot((E.array() - m).square().matrix());
    return m;
  };
  // f(beta) = <E>_beta - target is strictly decreasing.
  double a = 0.0, b = 0.0;
  const double f0 = mean(0.0, nullptr) - E_target;
  if (f0 == 0.0) {
    EnsembleParams p;
    p.weights = canonical_weights(E, 0.0);
    return p;
  }
  double step = 1.0 / std::max(range, 1e-300);
  const double dir = f0 > 0.0 ? 1.0 : -1.0;
  a = 0.0;
  b = dir * step;
  int expand = 0;
  while ((mean(b, nullptr) - E_target) * dir > 0.0) {
    a = b;
    b *= 2.0;
    if (++expand > 200) throw ConvergenceError("canonical_beta: could not bracket the target", std::abs(mean(b, nullptr) - E_target) / range);
  }
  double x = 0.5 * (a + b);
  const double tol = 1e-13 * range;
  int it = 0;
  for (; it < 300; ++it) {
    double var = 0.0;
    const double f = mean(x, &var) - E_target;
    if (std::abs(f) < tol) break;
    if (f * dir > 0.0) a = x;
    else b = x;
    double nx = var > 0.0 ? x + f / var : 0.5 * (a + b);
    const double l = std::min(a, b), h = std::max(a, b);
    if (!(nx > l && nx < h)) nx = 0.5 * (a + b);
    x = nx;
  }
  EnsembleParams p;
  p.beta = x;
  p.weights = canonical_weights(E, x);
  p.residual = std::abs(p.weights.dot(E) - E_target) / range;
  p.iterations = it;
  if (!(p.residual < 1e-8)) throw ConvergenceError("canonical_beta: no convergence", p.residual);
  return p;
}

namespace detail {

/// Distance (in scaled units) of point q outside the convex hull of pts; 0 inside.
inline double hull_excess(const std::vector<std::array<double, 2>>& pts, std::array<double, 2> q) {
  std::vector<std::array<double, 2>> p = pts;
  std::sort(p.begin(), p.end());
  p.erase(std::unique(p.begin(), p.end()), p.end());
  auto cross = [](const std::array<double, 2>& o, const std::array<double, 2>& a, const std::array<double, 2>& b) {
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
  };
  std::vector<std::array<double, 2>> h(2 * p.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  for (std::size_t i = p.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  h.resize(k > 1 ? k - 1 : k);
  if (h.size() < 3) {
    // degenerate hull: distance to the segment / point
    if (h.size() == 1) return std::hypot(q[0] - h[0][0], q[1] - h[0][1]);
    const double dx = h[1][0] - h[0][0], dy = h[1][1] - h[0][1];
    const double t = std::clamp(((q[0] - h[0][0]) * dx + (q[1] - h[0][1]) * dy) / (dx * dx + dy * dy), 0.0, 1.0);
    return std::hypot(q[0] - h[0][0] - t * dx, q[1] - h[0][1] - t * dy);
  }
  // counter-clockwise hull: outside if to the right of any edge
  double worst = 0.0;
  bool outside = false;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const auto& a = h[i];
    const auto& b = h[(i + 1) % h.size()];
    const double len = std::hypot(b[0] - a[0], b[1] - a[1]);
    const double sd = cross(a, b, q) / len;  // > 0 inside
    if (sd < 0) outside = true;
    worst = std::min(worst, sd);
  }
  if (!outside) return 0.0;
  // exact distance to the polygon boundary
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < h.size(); ++i) {
    const auto& a = h[i];
    const auto& b = h[(i + 1) % h.size()];
    const double dx = b[0] - a[0], dy = b[1] - a[1];
    const double t = std::clamp(((q[0] - a[0]) * dx + (q[1] - a[1]) * dy) / (dx * dx + dy * dy), 0.0, 1.0);
    d = std::min(d, std::hypot(q[0] - a[0] - t * dx, q[1] - a[1] - t * dy));
  }
  (void)worst;
  return d;
}

}  // namespace detail

struct GrandCanonicalOptions {
  double tol{1e-10};  // scaled max-norm residual
  int max_iter{500};
  /// Targets farther than this (scaled units) outside the closed hull are rejected.
  double hull_tol{1e-9};
};

/// (beta, nu) with <E> = E_target and <N> = N_target. Damped Newton on the
/// residual, whose Jacobian is the (E, N) covariance matrix; a step is accepted
/// once it lowers either the residual norm or the convex dual
/// log Z - (-beta E_t + nu N_t). Multi-start from (beta, nu) in {0, +-1}^2.
inline EnsembleParams grand_canonical_params(const VectorXr& E, const VectorXr& N, double E_target, double N_target,
                                             const GrandCanonicalOptions& opt = {}) {
  if (E.size() != N.size() || E.size() < 3) throw ValidationError("grand_canonical_params: need matching E and N tables of size >= 3");
  const double se = std::max(E.maxCoeff() - E.minCoeff(), 1e-300);
  const double sn = std::max(N.maxCoeff() - N.minCoeff(), 1e-300);
  {
    std::vector<std::array<double, 2>> pts;
    for (Index i = 0; i < E.size(); ++i) pts.push_back({E(i) / se, N(i) / sn});
    const double ex = detail::hull_excess(pts, {E_target / se, N_target / sn});
    if (ex > opt.hull_tol)
      throw RangeError("grand_canonical_params: target (" + std::to_string(E_target) + ", " + std::to_string(N_target) +
                       ") lies outside the convex hull of the (E, N) table");
  }
  // scaled features and natural parameters theta = (-beta se, nu sn)
  const VectorXr e = E / se, n = N / sn;
  const double et = E_target / se, nt = N_target / sn;
  struct State {
    VectorXr w;
    double me, mn, vee, ven, vnn, dual;
  };
  auto eval = [&](double t1, double t2) {
    State s;
    const VectorXr a = t1 * e + t2 * n;
    const double m = a.maxCoeff();
    const VectorXr x = (a.array() - m).exp();
    const double z = x.sum();
    s.w = x / z;
    s.me = s.w.dot(e);
    s.mn = s.w.dot(n);
    const VectorXr de = e.array() - s.me, dn = n.array() - s.mn;
    s.vee = s.w.dot(de.cwiseProduct(de));
    s.ven = s.w.dot(de.cwiseProduct(dn));
    s.vnn = s.w.dot(dn.cwiseProduct(dn));
    s.dual = m + std::log(z) - (t1 * et + t2 * nt);
    return s;
  };
  auto resid = [&](const State& s) { return std::max(std::abs(s.me - et), std::abs(s.mn - nt)); };

  double best_res = std::numeric_limits<double>::infinity();
  const std::array<std::array<double, 2>, 9> starts{{{0, 0}, {1, 1}, {1, -1}, {-1, 1}, {-1, -1}, {1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
  for (const auto& st : starts) {
    double t1 = -st[0] * se, t2 = st[1] * st[0] * sn;  // from (beta, mu) start
    State s = eval(t1, t2);
    int it = 0;
    for (; it < opt.max_iter && resid(s) >= opt.tol; ++it) {
      const double g1 = s.me - et, g2 = s.mn - nt;
      double a11 = s.vee, a12 = s.ven, a22 = s.vnn;
      const double ridge = 1e-14 * std::max(1.0, a11 + a22);
      a11 += ridge;
      a22 += ridge;
      const double det = a11 * a22 - a12 * a12;
      double d1, d2;
      if (det > 0.0 && std::isfinite(det)) {
        d1 = -(a22 * g1 - a12 * g2) / det;
        d2 = -(-a12 * g1 + a11 * g2) / det;
      } else {
        d1 = -g1;
        d2 = -g2;
      }
      const double r0 = std::hypot(g1, g2);
      double lam = 1.0;
      bool accepted = false;
      for (int h = 0; h < 60; ++h, lam *= 0.5) {
        State c = eval(t1 + lam * d1, t2 + lam * d2);
        const double rc = std::hypot(c.me - et, c.mn - nt);
        const bool armijo = c.dual <= s.dual + 1e-4 * lam * (g1 * d1 + g2 * d2);
        if (std::isfinite(rc) && (rc < r0 || armijo)) {
          t1 += lam * d1;
          t2 += lam * d2;
          s = std::move(c);
          accepted = true;
          break;
        }
      }
      if (!accepted) break;
    }
    const double r = resid(s);
    best_res = std::min(best_res, r);
    if (r < opt.tol) {
      EnsembleParams p;
      p.beta = -t1 / se;
      p.nu = t2 / sn;
      p.mu = detail::mu_of(p.beta, p.nu);
      p.weights = s.w;
      p.residual = r;
      p.iterations = it;
      return p;
    }
  }
  throw ConvergenceError("grand_canonical_params: Newton iteration did not converge from any start", best_res);
}

/// sum_i w_i values_i.
inline double ensemble_average(const EnsembleParams& p, const VectorXr& values) {
  if (values.size() != p.weights.size()) throw ValidationError("ensemble_average: length mismatch");
  return p.weights.dot(values);
}

/// Partial trace bookkeeping for a subsystem A of a constrained basis: each
/// basis state splits into an A configuration and a complement key.
class PartialTrace {
 public:
  PartialTrace(const ConstrainedBasis& basis, std::vector<int> sites) : sites_(std::move(sites)) {
    const SiteModel& m = basis.model();
    for (std::size_t a = 0; a < sites_.size(); ++a) {
      if (sites_[a] < 0 || sites_[a] >= m.n_sites) throw ValidationError("reduced_dm: subsystem site out of range");
      for (std::size_t b = 0; b < a; ++b)
        if (sites_[a] == sites_[b]) throw ValidationError("reduced_dm: repeated subsystem site");
    }
    d_ = m.d;
    dimA_ = 1;
    for (std::size_t k = 0; k < sites_.size(); ++k) dimA_ *= d_;
    const Radix& rx = basis.radix();
    std::unordered_map<std::uint64_t, Index> key_index;
    std::vector<std::pair<Index, Index>> tmp;  // (group, state)
    a_of_.resize(static_cast<std::size_t>(basis.dim()));
    for (Index i = 0; i < basis.dim(); ++i) {
      std::uint64_t idx = basis.state(i);
      Index a = 0;
      for (int s : sites_) {
        a = a * d_ + rx.digit(idx, s);
        idx = rx.with_digit(idx, s, 0);
      }
      a_of_[i] = a;
      auto [it, fresh] = key_index.emplace(idx, static_cast<Index>(key_index.size()));
      tmp.emplace_back(it->second, i);
    }
    std::sort(tmp.begin(), tmp.end());
    for (std::size_t q = 0; q < tmp.size();) {
      std::size_t r = q;
      std::vector<Index> g;
      while (r < tmp.size() && tmp[r].first == tmp[q].first) g.push_back(tmp[r++].second);
      groups_.push_back(std::move(g));
      q = r;
    }
  }

  Index dim() const { return dimA_; }
  const std::vector<int>& sites() const { return sites_; }

  /// rho_A of a constrained-basis pure state; A labels ordered as `sites`, site
  /// label 0 first.
  MatrixXc reduce(const VectorXc& psi) const {
    MatrixXc r = MatrixXc::Zero(dimA_, dimA_);
    add(psi, 1.0, r);
    return r;
  }

  void add(const VectorXc& psi, double weight, MatrixXc& out) const {
    for (const auto& g : groups_)
      for (Index x : g) {
        const cplx px = weight * psi(x);
        if (px == cplx(0.0, 0.0)) continue;
        for (Index y : g) out(a_of_[x], a_of_[y]) += px * std::conj(psi(y));
      }
  }

 private:
  std::vector<int> sites_;
  int d_{0};
  Index dimA_{1};
  std::vector<Index> a_of_;
  std::vector<std::vector<Index>> groups_;
};

inline MatrixXc reduced_dm(const ConstrainedBasis& basis, const VectorXc& psi, const std::vector<int>& sites) {
  if (psi.size() != basis.dim()) throw ConsistencyError("reduced_dm: state is not in this basis");
  return PartialTrace(basis, sites).reduce(psi);
}

/// sum_i w_i Tr_rest |E_i><E_i|, skipping weights below skip * max weight.
inline MatrixXc reduced_dm(const PartialTrace& pt, const MatrixXc& eigvecs, const VectorXr& weights, double skip = 1e-16) {
  if (weights.size() != eigvecs.cols()) throw ValidationError("reduced_dm: weight/eigenvector count mismatch");
  MatrixXc r = MatrixXc::Zero(pt.dim(), pt.dim());
  const double wmax = weights.maxCoeff();
  for (Index i = 0; i < weights.size(); ++i)
    if (weights(i) > skip * wmax) pt.add(eigvecs.col(i), weights(i), r);
  return r;
}

/// Schatten p-norm of a square matrix from its singular values.
inline double schatten_norm(const MatrixXc& a, double p) {
  const VectorXr s = Eigen::JacobiSVD<MatrixXc>(a).singularValues();
  if (std::isinf(p)) return s.size() ? s.maxCoeff() : 0.0;
  return std::pow(s.array().pow(p).sum(), 1.0 / p);
}

/// d_p = || rho/||rho||_p - sigma/||sigma||_p ||_p.
inline double schatten_distance(const MatrixXc& rho, const MatrixXc& sigma, double p) {
  if (rho.rows() != sigma.rows() || rho.cols() != sigma.cols() || rho.rows() != rho.cols())
    throw ValidationError("schatten_distance: dimension mismatch");
  if (!(p >= 1.0)) throw ValidationError("schatten_distance: p must be >= 1");
  const double nr = schatten_norm(rho, p), ns = schatten_norm(sigma, p);
  if (!(nr > 0.0) || !(ns > 0.0)) throw ValidationError("schatten_distance: zero operator");
  return schatten_norm(rho / nr - sigma / ns, p);
}

}  // namespace scarkit
