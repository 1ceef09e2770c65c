#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "../piecewise.hpp"

namespace tailrobust::conic {

struct NonnegCheck {
  bool nonnegative = true;
  /// Minimizer (or a witness far out when unbounded below).
  double x = 0.0;
  double value = 0.0;
  bool unbounded_below = false;
};

namespace detail {

inline Poly trimmed(const Poly& p, double rel = 1e-13) {
  double mx = 0.0;
  for (double c : p) mx = std::max(mx, std::abs(c));
  Poly q = p;
  while (q.size() > 1 && std::abs(q.back()) <= rel * mx) q.pop_back();
  return q;
}

/// Root of p in [lo, hi] given a sign change, by bisection polished with Newton steps.
inline double bracketed_root(const Poly& p, const Poly& dp, double lo, double hi) {
  double flo = poly_eval(p, lo);
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double fx = poly_eval(p, x);
    if (fx == 0.0) return x;
    if ((fx < 0.0) == (flo < 0.0)) {
      lo = x;
      flo = fx;
    } else {
      hi = x;
    }
    const double d = poly_eval(dp, x);
    double xn = d != 0.0 ? x - fx / d : 0.5 * (lo + hi);
    if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
    if (std::abs(xn - x) <= 1e-15 * std::max(1.0, std::abs(x)) || hi - lo <= 1e-15 * std::max(1.0, std::abs(x)))
      return xn;
    x = xn;
  }
  return x;
}

/// Real roots of p in the finite interval [lo, hi], ascending.
inline std::vector<double> real_roots(const Poly& p0, double lo, double hi) {
  const Poly p = trimmed(p0);
  const int d = static_cast<int>(p.size()) - 1;
  if (d <= 0) return {};
  if (d == 1) {
    const double r = -p[0] / p[1];
    return (r >= lo && r <= hi) ? std::vector<double>{r} : std::vector<double>{};
  }
  const Poly dp = poly_derivative(p);
  std::vector<double> pts{lo};
  for (double c : real_roots(dp, lo, hi)) pts.push_back(c);
  pts.push_back(hi);
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double a = pts[i], b = pts[i + 1];
    const double fa = poly_eval(p, a), fb = poly_eval(p, b);
    if (fa == 0.0) {
      if (out.empty() || out.back() != a) out.push_back(a);
    } else if ((fa < 0.0) != (fb < 0.0) && fb != 0.0) {
      out.push_back(bracketed_root(p, dp, a, b));
    }
  }
  if (poly_eval(p, hi) == 0.0 && (out.empty() || out.back() != hi)) out.push_back(hi);
  return out;
}

/// Cauchy bound on the magnitude of the real roots.
inline double cauchy_bound(const Poly& p) {
  const double lead = std::abs(p.back());
  double m = 0.0;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) m = std::max(m, std::abs(p[i]) / lead);
  return 1.0 + m;
}

}  // namespace detail

/// Global minimum of p over [lo, hi] (hi may be +inf) via critical points and endpoints.
inline NonnegCheck check_poly_nonneg(const Poly& p0, double lo, double hi) {
  const Poly p = detail::trimmed(p0);
  const int d = static_cast<int>(p.size()) - 1;
  NonnegCheck res;
  if (std::isinf(hi) && d >= 1 && p.back() < 0.0) {
    res.nonnegative = false;
    res.unbounded_below = true;
    res.x = std::max(lo, 0.0) + 2.0 * detail::cauchy_bound(p);
    res.value = poly_eval(p, res.x);
    return res;
  }
  double hi_eff = hi;
  if (std::isinf(hi)) hi_eff = lo + (d >= 2 ? 2.0 * detail::cauchy_bound(poly_derivative(p)) + std::abs(lo) : 1.0);
  std::vector<double> cand{lo};
  if (std::isfinite(hi)) cand.push_back(hi);
  if (d >= 2)
    for (double c : detail::real_roots(poly_derivative(p), lo, hi_eff)) cand.push_back(c);
  res.x = lo;
  res.value = poly_eval(p, lo);
  for (double x : cand) {
    const double v = poly_eval(p, x);
    if (v < res.value) {
      res.value = v;
      res.x = x;
    }
  }
  res.nonnegative = res.value >= 0.0;
  return res;
}

}  // namespace tailrobust::conic
