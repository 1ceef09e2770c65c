#pragma once

// Limits of worst-case over true tail quantities as the threshold grows, their
// finite-threshold counterparts, and the finite-endpoint change of variable.

#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "bound.hpp"
#include "distributions.hpp"
#include "model.hpp"

namespace tailrobust {

struct TailRegime {
  enum class Mode { probability, quantile };
  /// xi > 0 Frechet, xi = 0 Gumbel.
  double xi = 0.0;
  Mode mode = Mode::probability;
  /// probability: b = a + x u(a); quantile: 1 - p = x beta.
  double x = 0.0;

  void validate() const {
    if (!(xi >= 0.0) || !std::isfinite(xi)) throw std::invalid_argument("TailRegime: xi must be finite and >= 0");
    if (mode == Mode::probability) {
      if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument("TailRegime: x must be >= 0");
      return;
    }
    const double lo = xi > 0.0 ? 1.0 - 1.0 / (2.0 * (xi + 1.0)) : 0.5;
    if (!(x > lo && x <= 1.0)) throw std::invalid_argument("TailRegime: x outside the finite-quantile range");
  }
};

/// Limit of z*(a, b) / P(X >= b) for b = a + x u(a).
inline double limit_ratio_prob(const TailRegime& r) {
  if (r.mode != TailRegime::Mode::probability) throw std::invalid_argument("limit_ratio_prob: probability regime expected");
  r.validate();
  const double x = r.x, xi = r.xi;
  if (xi > 0.0) {
    const double growth = std::pow(1.0 + xi * x, 1.0 / xi);
    if (x >= 1.0 / (xi + 1.0)) return (1.0 - 1.0 / (2.0 * (xi + 1.0))) * growth;
    return (1.0 - x + 0.5 * (xi + 1.0) * x * x) * growth;
  }
  if (x >= 1.0) return 0.5 * std::exp(x);
  return (1.0 - x + 0.5 * x * x) * std::exp(x);
}

inline double limit_ratio_prob(double xi, double x) {
  return limit_ratio_prob(TailRegime{xi, TailRegime::Mode::probability, x});
}

/// Frechet limit for b = k a (x = (k - 1) / xi, since u(a) ~ xi a).
inline double limit_ratio_prob_multiple(double xi, double k) {
  if (!(xi > 0.0)) throw std::invalid_argument("limit_ratio_prob_multiple: needs xi > 0");
  if (!(k >= 1.0)) throw std::invalid_argument("limit_ratio_prob_multiple: needs k >= 1");
  return limit_ratio_prob(xi, (k - 1.0) / xi);
}

/// Limit of q* / q for 1 - p = x beta.
inline double limit_ratio_quantile(const TailRegime& r) {
  if (r.mode != TailRegime::Mode::quantile) throw std::invalid_argument("limit_ratio_quantile: quantile regime expected");
  r.validate();
  if (r.xi == 0.0) return 1.0;
  const double xi = r.xi, x = r.x;
  const double rad = std::max(0.0, 1.0 - 2.0 * (1.0 - x) * (xi + 1.0));
  return std::pow(x, xi) * (xi / (xi + 1.0) * (1.0 - std::sqrt(rad)) + 1.0);
}

inline double limit_ratio_quantile(double xi, double x) {
  return limit_ratio_quantile(TailRegime{xi, TailRegime::Mode::quantile, x});
}

/// Sample of Y = 1 / (x_F - X); thresholds map as a -> 1 / (x_F - a).
inline TailSample endpoint_transform(const TailSample& s, double x_F) {
  std::vector<double> y;
  y.reserve(s.n());
  for (double v : s.values()) {
    if (!(v < x_F)) throw std::invalid_argument("endpoint_transform: observation at or beyond the endpoint");
    y.push_back(1.0 / (x_F - v));
  }
  return TailSample(std::move(y));
}

inline double endpoint_threshold(double a, double x_F) {
  if (!(a < x_F)) throw std::invalid_argument("endpoint_threshold: threshold at or beyond the endpoint");
  return 1.0 / (x_F - a);
}

/// Analytic tail description: survival function, density and its derivative, and
/// optionally the quantile function.
struct AnalyticTail {
  std::function<double(double)> sf;
  std::function<double(double)> pdf;
  std::function<double(double)> pdf_derivative;
  std::function<double(double)> quantile;

  static AnalyticTail pareto(double alpha, double x_m = 1.0) {
    if (!(alpha > 0.0 && x_m > 0.0)) throw std::invalid_argument("pareto: need alpha, x_m > 0");
    AnalyticTail t;
    t.sf = [=](double x) { return x <= x_m ? 1.0 : std::pow(x_m / x, alpha); };
    t.pdf = [=](double x) { return x < x_m ? 0.0 : alpha / x * std::pow(x_m / x, alpha); };
    t.pdf_derivative = [=](double x) { return x < x_m ? 0.0 : -alpha * (alpha + 1.0) / (x * x) * std::pow(x_m / x, alpha); };
    t.quantile = [=](double p) { return x_m * std::pow(1.0 - p, -1.0 / alpha); };
    return t;
  }

  static AnalyticTail normal() {
    AnalyticTail t;
    t.sf = [](double x) { return normal_sf(x); };
    t.pdf = [](double x) { return normal_pdf(x); };
    t.pdf_derivative = [](double x) { return -x * normal_pdf(x); };
    t.quantile = [](double p) { return normal_quantile(p); };
    return t;
  }
};

struct FiniteRatio {
  /// z* / P(X >= b) or q* / q.
  double ratio = 0.0;
  /// ratio - 1
  double relative_error = 0.0;
  ClosedFormParams params;
};

/// Worst-case over true tail probability of [b, inf) given exact boundary data at a.
inline FiniteRatio finite_a_ratio_prob(const AnalyticTail& d, double a, double b) {
  FiniteRatio out;
  out.params = ClosedFormParams{a, b, d.sf(a), d.pdf(a), -d.pdf_derivative(a)};
  const double z = closed_form_zstar(out.params);
  const double truth = d.sf(b);
  if (!(truth > 0.0)) throw std::domain_error("finite_a_ratio: true tail probability underflows");
  out.ratio = z / truth;
  out.relative_error = (z - truth) / truth;
  return out;
}

/// Worst-case over true p-quantile given exact boundary data at a.
inline FiniteRatio finite_a_ratio_quantile(const AnalyticTail& d, double a, double p) {
  if (!d.quantile) throw std::invalid_argument("finite_a_ratio: quantile function required");
  FiniteRatio out;
  out.params = ClosedFormParams{a, a, d.sf(a), d.pdf(a), -d.pdf_derivative(a)};
  const double qs = closed_form_qstar(a, p, out.params.beta, out.params.eta, out.params.nu);
  const double q = d.quantile(p);
  out.ratio = qs / q;
  out.relative_error = (qs - q) / q;
  return out;
}

}  // namespace tailrobust
