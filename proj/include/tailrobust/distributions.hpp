#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

namespace tailrobust {

inline double chi2_quantile(double dof, double level) {
  boost::math::chi_squared_distribution<double> d(dof);
  return boost::math::quantile(d, level);
}

inline double normal_quantile(double level) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), level);
}

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

/// Upper tail of the standard normal, accurate far into the tail.
inline double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

/// CDF of sup_t |B(t) - t B(1)|.
inline double kolmogorov_cdf(double x) {
  if (x <= 0.0) return 0.0;
  if (x < 0.6) {
    // theta-function form converges fast for small x
    const double pi2 = std::numbers::pi * std::numbers::pi;
    double s = 0.0;
    for (int k = 1; k < 50; ++k) {
      const double t = std::exp(-static_cast<double>((2 * k - 1) * (2 * k - 1)) * pi2 / (8.0 * x * x));
      s += t;
      if (t < 1e-18) break;
    }
    return std::sqrt(2.0 * std::numbers::pi) / x * s;
  }
  double s = 0.0;
  for (int k = 1; k < 100; ++k) {
    const double t = std::exp(-2.0 * k * k * x * x);
    s += (k % 2 == 1 ? t : -t);
    if (t < 1e-18) break;
  }
  return 1.0 - 2.0 * s;
}

inline double kolmogorov_quantile(double level) {
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("kolmogorov_quantile: level must lie in (0,1)");
  double lo = 0.0, hi = 1.0;
  while (kolmogorov_cdf(hi) < level) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-14 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (kolmogorov_cdf(mid) < level ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace tailrobust
