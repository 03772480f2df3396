#pragma once

#include <cmath>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/QR>

#include "scarkit/errors.hpp"
#include "scarkit/types.hpp"

namespace scarkit {

/// Least-squares result. For the exponential model coefficients = {alpha};
/// linear = {slope, intercept}; through-origin = {slope}; cubic surfaces carry
/// their monomial coefficients.
struct FitResult {
  VectorXr coefficients;
  MatrixXr covariance;
  VectorXr residuals;  // per used sample
  double residual_rms{0.0};
  Index n{0};
  double intercept{0.0};  // exponential: log-amplitude; otherwise unused

  double operator[](Index k) const { return coefficients(k); }
};

namespace detail {

inline FitResult least_squares(const MatrixXr& X, const VectorXr& y, const char* what) {
  const Index n = X.rows(), p = X.cols();
  Eigen::ColPivHouseholderQR<MatrixXr> qr(X);
  qr.setThreshold(1e-12);
  if (qr.rank() < p) throw ValidationError(std::string(what) + ": rank-deficient design matrix");
  FitResult r;
  r.coefficients = qr.solve(y);
  r.residuals = y - X * r.coefficients;
  r.n = n;
  r.residual_rms = std::sqrt(r.residuals.squaredNorm() / static_cast<double>(n));
  const double dof = static_cast<double>(std::max<Index>(1, n - p));
  const double s2 = r.residuals.squaredNorm() / dof;
  r.covariance = s2 * (X.transpose() * X).inverse();
  return r;
}

}  // namespace detail

/// Straight line y = slope x + intercept.
inline FitResult fit_linear(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ValidationError("fit_linear: x and y lengths differ");
  bool distinct = false;
  for (double v : x) distinct = distinct || v != x.front();
  if (x.size() < 2 || !distinct) throw ValidationError("fit_linear: needs at least 2 distinct x values");
  MatrixXr X(x.size(), 2);
  VectorXr Y(y.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    X(k, 0) = x[k];
    X(k, 1) = 1.0;
    Y(k) = y[k];
  }
  return detail::least_squares(X, Y, "fit_linear");
}

/// y = slope x.
inline FitResult fit_through_origin(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ValidationError("fit_through_origin: x and y lengths differ");
  bool nonzero = false;
  for (double v : x) nonzero = nonzero || v != 0.0;
  if (x.empty() || !nonzero) throw ValidationError("fit_through_origin: needs a nonzero x value");
  MatrixXr X(x.size(), 1);
  VectorXr Y(y.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    X(k, 0) = x[k];
    Y(k) = y[k];
  }
  return detail::least_squares(X, Y, "fit_through_origin");
}

/// rms(residual) / rms(y).
inline double relative_residual(const FitResult& f, const std::vector<double>& y) {
  double s = 0.0;
  for (double v : y) s += v * v;
  s = std::sqrt(s / static_cast<double>(y.size()));
  return s > 0.0 ? f.residual_rms / s : 0.0;
}

/// v(t) ~ A exp(-alpha t): unweighted least squares of log v on t over the
/// leading run of samples with v > window_fraction * v(0).
inline FitResult fit_exponential(const std::vector<double>& t, const std::vector<double>& v, double window_fraction = 0.1) {
  if (t.size() != v.size()) throw ValidationError("fit_exponential: times and values lengths differ");
  if (v.empty() || !(v.front() > 0.0)) throw ValidationError("fit_exponential: nonpositive values throughout the window");
  const double floor = window_fraction * v.front();
  std::vector<double> x, y;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (!(v[k] > floor) || !(v[k] > 0.0)) break;
    x.push_back(t[k]);
    y.push_back(std::log(v[k]));
  }
  if (x.size() < 3) throw ValidationError("fit_exponential: fewer than 3 usable points (" + std::to_string(x.size()) + ")");
  FitResult lin = fit_linear(x, y);
  FitResult r;
  r.coefficients = VectorXr::Constant(1, -lin.coefficients(0));
  r.covariance = lin.covariance.topLeftCorner(1, 1);
  r.residuals = lin.residuals;
  r.residual_rms = lin.residual_rms;
  r.n = lin.n;
  r.intercept = lin.coefficients(1);
  return r;
}

/// Cubic surface in standardized (e, n):
/// {1, e, n, e^2, e n, n^2, e^3, e^2 n, e n^2, n^3}.
struct CubicSurface {
  FitResult fit;
  double e_mean{0.0}, e_scale{1.0}, n_mean{0.0}, n_scale{1.0};

  static VectorXr monomials(double e, double n) {
    VectorXr m(10);
    m << 1.0, e, n, e * e, e * n, n * n, e * e * e, e * e * n, e * n * n, n * n * n;
    return m;
  }
  double predict(double E, double N) const {
    return monomials((E - e_mean) / e_scale, (N - n_mean) / n_scale).dot(fit.coefficients);
  }
};

namespace detail {
inline std::pair<double, double> standardize(const std::vector<double>& x) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  s = std::sqrt(s / static_cast<double>(x.size()));
  return {m, s > 0.0 ? s : 1.0};
}
}  // namespace detail

inline CubicSurface fit_bivariate_cubic(const std::vector<double>& E, const std::vector<double>& N, const std::vector<double>& O) {
  if (E.size() != N.size() || E.size() != O.size()) throw ValidationError("fit_bivariate_cubic: input lengths differ");
  if (E.size() < 10) throw ValidationError("fit_bivariate_cubic: needs at least 10 samples");
  CubicSurface s;
  std::tie(s.e_mean, s.e_scale) = detail::standardize(E);
  std::tie(s.n_mean, s.n_scale) = detail::standardize(N);
  MatrixXr X(E.size(), 10);
  VectorXr Y(E.size());
  for (std::size_t k = 0; k < E.size(); ++k) {
    X.row(k) = CubicSurface::monomials((E[k] - s.e_mean) / s.e_scale, (N[k] - s.n_mean) / s.n_scale).transpose();
    Y(k) = O[k];
  }
  s.fit = detail::least_squares(X, Y, "fit_bivariate_cubic");
  return s;
}

/// Cubic in standardized E alone: {1, e, e^2, e^3}.
struct CubicCurve {
  FitResult fit;
  double e_mean{0.0}, e_scale{1.0};
  double predict(double E) const {
    const double e = (E - e_mean) / e_scale;
    return fit.coefficients(0) + e * (fit.coefficients(1) + e * (fit.coefficients(2) + e * fit.coefficients(3)));
  }
};

inline CubicCurve fit_energy_cubic(const std::vector<double>& E, const std::vector<double>& O) {
  if (E.size() != O.size()) throw ValidationError("fit_energy_cubic: input lengths differ");
  if (E.size() < 4) throw ValidationError("fit_energy_cubic: needs at least 4 samples");
  CubicCurve c;
  std::tie(c.e_mean, c.e_scale) = detail::standardize(E);
  MatrixXr X(E.size(), 4);
  VectorXr Y(E.size());
  for (std::size_t k = 0; k < E.size(); ++k) {
    const double e = (E[k] - c.e_mean) / c.e_scale;
    X.row(k) << 1.0, e, e * e, e * e * e;
    Y(k) = O[k];
  }
  c.fit = detail::least_squares(X, Y, "fit_energy_cubic");
  return c;
}

}  // namespace scarkit
