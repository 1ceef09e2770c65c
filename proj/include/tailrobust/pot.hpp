#pragma once

// Peaks-over-threshold baseline: generalized Pareto fit to excesses by maximum
// likelihood, delta-method upper bounds, and mean-excess threshold selection.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>

#include "distributions.hpp"
#include "model.hpp"

namespace tailrobust {

namespace detail {

/// log1p(x t) / x and its derivative in x, with a series where the closed form cancels.
struct Log1pRatio {
  double value;
  double dx;
};

inline Log1pRatio log1p_ratio(double x, double t) {
  const double u = x * t;
  if (std::abs(u) < 0.05) {
    double v = 0.0, d = 0.0, tk = t, xk = 1.0;  // tk = t^k, xk = x^(k-1)
    double xkm2 = 0.0;                          // x^(k-2)
    for (int k = 1; k <= 24; ++k) {
      const double sgn = k % 2 == 1 ? 1.0 : -1.0;
      v += sgn * xk * tk / k;
      if (k >= 2) d += sgn * (k - 1) * xkm2 * tk / k;
      xkm2 = k == 1 ? 1.0 : xkm2 * x;
      xk *= x;
      tk *= t;
    }
    return {v, d};
  }
  const double l = std::log1p(u);
  return {l / x, (u / (1.0 + u) - l) / (x * x)};
}

}  // namespace detail

struct GpdFit {
  double xi = 0.0;
  double sigma = 1.0;
  Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();
  std::size_t n_exceed = 0;
  double threshold = 0.0;
  double log_likelihood = 0.0;
  bool converged = false;
  /// Delta-method output is unreliable when xi <= -1/2.
  bool irregular = false;
};

/// GPD log-likelihood of the excesses y; -inf outside the support.
inline double gpd_log_likelihood(std::span<const double> y, double xi, double sigma) {
  if (!(sigma > 0.0)) return -kInf;
  const double n = static_cast<double>(y.size());
  double s = 0.0;
  for (double v : y) {
    const double t = v / sigma;
    if (1.0 + xi * t <= 0.0) return -kInf;
    const auto r = detail::log1p_ratio(xi, t);
    s += std::log1p(xi * t) + r.value;  // (1 + 1/xi) log(1 + xi t)
  }
  return -n * std::log(sigma) - s;
}

/// Gradient of the log-likelihood in (xi, sigma).
inline Eigen::Vector2d gpd_gradient(std::span<const double> y, double xi, double sigma) {
  const double n = static_cast<double>(y.size());
  double gx = 0.0, gs = -n / sigma;
  for (double v : y) {
    const double t = v / sigma;
    const double z = 1.0 + xi * t;
    const auto r = detail::log1p_ratio(xi, t);
    gx -= t / z + r.dx;
    // d/dsigma of (1 + 1/xi) log(1 + xi t) is -(1 + xi) t / (sigma z)
    gs += (1.0 + xi) * t / (sigma * z);
  }
  return {gx, gs};
}

inline Eigen::Matrix2d gpd_hessian(std::span<const double> y, double xi, double sigma) {
  Eigen::Matrix2d H;
  const double hx = 1e-5 * std::max(1.0, std::abs(xi));
  const double hs = 1e-5 * sigma;
  H.col(0) = (gpd_gradient(y, xi + hx, sigma) - gpd_gradient(y, xi - hx, sigma)) / (2.0 * hx);
  H.col(1) = (gpd_gradient(y, xi, sigma + hs) - gpd_gradient(y, xi, sigma - hs)) / (2.0 * hs);
  return 0.5 * (H + H.transpose());
}

/// Maximum likelihood through the profile in tau = xi / sigma, then Newton polishing.
inline GpdFit fit_gpd_mle(std::span<const double> excesses) {
  if (excesses.size() < 30) throw std::invalid_argument("fit_gpd_mle: need at least 30 excesses");
  std::vector<double> y(excesses.begin(), excesses.end());
  for (double v : y)
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("fit_gpd_mle: excesses must be positive");
  std::sort(y.begin(), y.end());
  const double n = static_cast<double>(y.size());
  const double ymax = y.back();
  double ybar = 0.0;
  for (double v : y) ybar += v;
  ybar /= n;

  auto profile = [&](double tau, double& xi, double& sigma) {
    double s = 0.0;
    for (double v : y) s += std::log1p(tau * v);
    xi = s / n;
    sigma = tau == 0.0 ? ybar : xi / tau;
    return sigma > 0.0 ? gpd_log_likelihood(y, xi, sigma) : -kInf;
  };

  // coarse scan of s = log(1 + tau * ymax) keeps the search inside the support
  auto tau_of = [&](double s) { return std::expm1(s) / ymax; };
  const double s_lo = -12.0, s_hi = 8.0;
  const int grid = 400;
  double best_s = 0.0, best = -kInf, xi = 0.0, sigma = ybar;
  for (int k = 0; k <= grid; ++k) {
    const double s = s_lo + (s_hi - s_lo) * k / grid;
    const double v = profile(tau_of(s), xi, sigma);
    if (v > best) {
      best = v;
      best_s = s;
    }
  }
  const double step = (s_hi - s_lo) / grid;
  auto neg = [&](double s) {
    double a, b;
    return -profile(tau_of(s), a, b);
  };
  const auto m = boost::math::tools::brent_find_minima(neg, best_s - step, best_s + step, 60);
  profile(tau_of(m.first), xi, sigma);

  GpdFit fit;
  fit.n_exceed = y.size();
  // Newton polish on (xi, sigma) with backtracking
  for (int it = 0; it < 20; ++it) {
    const Eigen::Vector2d g = gpd_gradient(y, xi, sigma);
    if (std::abs(g(0)) / n < 1e-12 && std::abs(g(1)) * sigma / n < 1e-12) break;
    const Eigen::Matrix2d H = gpd_hessian(y, xi, sigma);
    Eigen::Vector2d d = -H.ldlt().solve(g);
    if (!d.allFinite() || g.dot(d) <= 0.0) break;
    const double f0 = gpd_log_likelihood(y, xi, sigma);
    double t = 1.0;
    while (t > 1e-8 && !(gpd_log_likelihood(y, xi + t * d(0), sigma + t * d(1)) >= f0)) t *= 0.5;
    if (t <= 1e-8) break;
    xi += t * d(0);
    sigma += t * d(1);
  }
  fit.xi = xi;
  fit.sigma = sigma;
  fit.log_likelihood = gpd_log_likelihood(y, xi, sigma);
  const Eigen::Vector2d g = gpd_gradient(y, xi, sigma);
  fit.converged = std::isfinite(fit.log_likelihood) && std::abs(g(0)) / n < 1e-6 && std::abs(g(1)) * sigma / n < 1e-6;
  fit.irregular = xi <= -0.5;
  const Eigen::Matrix2d info = -gpd_hessian(y, xi, sigma);
  fit.covariance = info.inverse();
  if (!fit.covariance.allFinite()) fit.covariance.setConstant(kInf);
  return fit;
}

/// Fit to the excesses of the sample over u.
inline GpdFit fit_gpd_above(const TailSample& sample, double u) {
  std::vector<double> y;
  for (double v : sample.values())
    if (v > u) y.push_back(v - u);
  GpdFit f = fit_gpd_mle(y);
  f.threshold = u;
  return f;
}

/// GPD survival function and its gradient in (xi, sigma).
struct GpdTail {
  double value;
  Eigen::Vector2d grad;
};

inline GpdTail gpd_survival(double y, double xi, double sigma) {
  if (y <= 0.0) return {1.0, Eigen::Vector2d::Zero()};
  if (!std::isfinite(y)) return {0.0, Eigen::Vector2d::Zero()};
  const double t = y / sigma;
  if (1.0 + xi * t <= 0.0) return {0.0, Eigen::Vector2d::Zero()};
  const auto r = detail::log1p_ratio(xi, t);
  const double v = std::exp(-r.value);
  return {v, {-v * r.dx, v * t / (sigma * (1.0 + xi * t))}};
}

struct PotBound {
  double point = 0.0;
  double se = 0.0;
  double upper = 0.0;
  GpdFit fit;
};

/// Delta-method upper confidence bound on P(L <= X <= R) from a GPD fit above u.
inline PotBound pot_upper_bound(const TailSample& sample, double u, double L, double R, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("pot_upper_bound: alpha must lie in (0,1)");
  if (!(L >= u && R >= L)) throw std::invalid_argument("pot_upper_bound: need u <= L <= R");
  PotBound out;
  out.fit = fit_gpd_above(sample, u);
  const double n = static_cast<double>(sample.n());
  const double zeta = static_cast<double>(out.fit.n_exceed) / n;
  const GpdTail gl = gpd_survival(L - u, out.fit.xi, out.fit.sigma);
  const GpdTail gr = gpd_survival(R - u, out.fit.xi, out.fit.sigma);
  const double diff = gl.value - gr.value;
  out.point = zeta * diff;
  // zeta is binomial and asymptotically independent of the GPD estimates
  const Eigen::Vector2d gth = zeta * (gl.grad - gr.grad);
  const double var = diff * diff * zeta * (1.0 - zeta) / n + gth.dot(out.fit.covariance * gth);
  out.se = std::sqrt(std::max(0.0, var));
  out.upper = std::clamp(out.point + normal_quantile(1.0 - alpha) * out.se, 0.0, 1.0);
  return out;
}

struct MeanExcessPoint {
  double u;
  double e;
  std::size_t exceedances;
};

struct MeanExcessCurve {
  std::vector<MeanExcessPoint> points;
  double suggested_threshold = 0.0;
  double r_squared = 0.0;
  /// False when no candidate reached the R^2 target and the best fit was used instead.
  bool rule_met = false;
};

/// e(u) = mean(x - u | x > u); NaN when nothing exceeds u.
inline double mean_excess(const TailSample& sample, double u) {
  const auto& v = sample.values();
  const auto it = std::upper_bound(v.begin(), v.end(), u);
  if (it == v.end()) return std::numeric_limits<double>::quiet_NaN();
  double acc = 0.0;
  for (auto j = it; j != v.end(); ++j) acc += *j - u;
  return acc / static_cast<double>(v.end() - it);
}

/// Mean excess at each order statistic with at least 10 exceedances; the suggested
/// threshold is the smallest u (leaving at least `min_fit` exceedances and not above
/// `u_cap`) whose downstream linear fit reaches R^2 >= 0.98.
inline MeanExcessCurve mean_excess_curve(const TailSample& sample, std::size_t min_fit = 30, double u_cap = kInf) {
  const auto& v = sample.values();
  const std::size_t n = v.size();
  if (n < 50) throw std::invalid_argument("mean_excess_curve: need at least 50 observations");
  std::vector<double> suffix(n + 1, 0.0);
  for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] + v[i];
  MeanExcessCurve c;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0 && v[i] == v[i - 1]) continue;
    const std::size_t above = static_cast<std::size_t>(v.end() - std::upper_bound(v.begin(), v.end(), v[i]));
    if (above < 10) break;
    const std::size_t first = n - above;
    c.points.push_back({v[i], (suffix[first] - static_cast<double>(above) * v[i]) / static_cast<double>(above), above});
  }
  // downstream fits via suffix sums
  const std::size_t m = c.points.size();
  std::vector<double> su(m + 1, 0.0), se(m + 1, 0.0), suu(m + 1, 0.0), see(m + 1, 0.0), sue(m + 1, 0.0);
  for (std::size_t k = m; k-- > 0;) {
    const double u = c.points[k].u, e = c.points[k].e;
    su[k] = su[k + 1] + u;
    se[k] = se[k + 1] + e;
    suu[k] = suu[k + 1] + u * u;
    see[k] = see[k + 1] + e * e;
    sue[k] = sue[k + 1] + u * e;
  }
  double best_r2 = -1.0, best_u = m ? c.points.front().u : v.front();
  for (std::size_t k = 0; k + 3 <= m; ++k) {
    if (c.points[k].exceedances < min_fit || c.points[k].u > u_cap) continue;
    const double cnt = static_cast<double>(m - k);
    const double muu = suu[k] - su[k] * su[k] / cnt;
    const double mee = see[k] - se[k] * se[k] / cnt;
    const double mue = sue[k] - su[k] * se[k] / cnt;
    const double r2 = muu > 0.0 && mee > 0.0 ? mue * mue / (muu * mee) : 0.0;
    if (r2 >= 0.98) {
      c.suggested_threshold = c.points[k].u;
      c.r_squared = r2;
      c.rule_met = true;
      return c;
    }
    if (r2 > best_r2) {
      best_r2 = r2;
      best_u = c.points[k].u;
    }
  }
  c.suggested_threshold = best_u;
  c.r_squared = std::max(best_r2, 0.0);
  return c;
}

}  // namespace tailrobust
