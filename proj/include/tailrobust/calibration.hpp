#pragma once

// Data-driven shape parameters and moment sets with a Bonferroni split of the
// confidence budget across every calibrated constraint.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "distributions.hpp"
#include "model.hpp"
#include "rng.hpp"

namespace tailrobust {

struct CalibrationConfig {
  double alpha = 0.05;
  int bootstrap_B = 500;
  /// Fixed KDE bandwidth; empty means Silverman's rule on each (re)sample.
  std::optional<double> bandwidth;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("CalibrationConfig: alpha must lie in (0,1)");
    if (bootstrap_B < 100) throw std::invalid_argument("CalibrationConfig: bootstrap_B must be >= 100");
    if (bandwidth && !(*bandwidth > 0.0)) throw std::invalid_argument("CalibrationConfig: bandwidth must be > 0");
  }
};

// ---------------------------------------------------------------------------
// kernel density

inline double silverman_bandwidth(std::span<const double> x) {
  const double n = static_cast<double>(x.size());
  if (x.size() < 2) return 1.0;
  double m = 0.0;
  for (double v : x) m += v;
  m /= n;
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  const double sd = std::sqrt(s / (n - 1.0));
  return sd > 0.0 ? 1.06 * sd * std::pow(n, -0.2) : 1.0;
}

/// Gaussian-kernel density estimate at x.
inline double kde_density(std::span<const double> sample, double x, std::optional<double> bandwidth = {}) {
  if (sample.empty()) return 0.0;
  const double h = bandwidth ? *bandwidth : silverman_bandwidth(sample);
  if (!(h > 0.0)) throw std::invalid_argument("kde_density: bandwidth must be > 0");
  double s = 0.0;
  for (double v : sample) {
    const double t = (x - v) / h;
    s += std::exp(-0.5 * t * t);
  }
  return s / (static_cast<double>(sample.size()) * h * std::sqrt(2.0 * std::numbers::pi));
}

/// Derivative in x of the Gaussian-kernel estimate.
inline double kde_density_derivative(std::span<const double> sample, double x, std::optional<double> bandwidth = {}) {
  if (sample.empty()) return 0.0;
  const double h = bandwidth ? *bandwidth : silverman_bandwidth(sample);
  if (!(h > 0.0)) throw std::invalid_argument("kde_density_derivative: bandwidth must be > 0");
  double s = 0.0;
  for (double v : sample) {
    const double t = (x - v) / h;
    s -= t * std::exp(-0.5 * t * t);
  }
  return s / (static_cast<double>(sample.size()) * h * h * std::sqrt(2.0 * std::numbers::pi));
}

inline double kde_density(const TailSample& s, double x, std::optional<double> bandwidth = {}) {
  return kde_density(std::span<const double>(s.values()), x, bandwidth);
}

inline double kde_density_derivative(const TailSample& s, double x, std::optional<double> bandwidth = {}) {
  return kde_density_derivative(std::span<const double>(s.values()), x, bandwidth);
}

// ---------------------------------------------------------------------------
// budget

enum class SetKind { ellipsoid, rectangle };

inline const char* to_string(SetKind k) { return k == SetKind::ellipsoid ? "chi2" : "KS"; }

/// Confidence levels of the individual constraints. With m thresholds the budget
/// alpha is shared by m moment sets and (for D = 1, 2) one or two shape statements
/// per threshold.
struct BudgetSplit {
  double moment_level = 0.95;
  double eta_level = 0.0;        // D = 1
  double density_lo = 0.0;       // D = 2, lower percentile for eta_lo
  double density_hi = 0.0;       // D = 2, upper percentile for eta_hi
  double nu_level = 0.0;         // D = 2
  int pieces = 1;                // number of parts alpha was divided into
};

inline BudgetSplit bonferroni_split(double alpha, int D, int m) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("bonferroni_split: alpha must lie in (0,1)");
  if (m < 1) throw std::invalid_argument("bonferroni_split: need m >= 1");
  BudgetSplit s;
  switch (D) {
    case 0:
      s.pieces = m;
      s.moment_level = 1.0 - alpha / m;
      break;
    case 1:
      s.pieces = m + 1;
      s.moment_level = 1.0 - alpha / (m + 1);
      s.eta_level = 1.0 - alpha / (m + 1);
      break;
    case 2:
      s.pieces = 2 * m + 1;
      s.moment_level = 1.0 - alpha / (2 * m + 1);
      s.density_lo = alpha / (4 * m + 2);
      s.density_hi = 1.0 - alpha / (4 * m + 2);
      s.nu_level = 1.0 - alpha / (2 * m + 1);
      break;
    default:
      throw std::invalid_argument("bonferroni_split: D must be 0, 1 or 2");
  }
  return s;
}

// ---------------------------------------------------------------------------
// bootstrap helpers

/// Order statistic at ceil(level * size) of an ascending vector.
inline double sorted_percentile(const std::vector<double>& sorted, double level) {
  if (sorted.empty()) throw std::invalid_argument("sorted_percentile: empty input");
  const double pos = level * static_cast<double>(sorted.size());
  auto k = static_cast<std::ptrdiff_t>(std::ceil(pos - 1e-9 * std::max(1.0, pos)));
  k = std::clamp<std::ptrdiff_t>(k, 1, static_cast<std::ptrdiff_t>(sorted.size()));
  return sorted[static_cast<std::size_t>(k - 1)];
}

inline std::vector<double> resample(const std::vector<double>& x, std::mt19937_64& g) {
  std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
  std::vector<double> out(x.size());
  for (double& v : out) v = x[pick(g)];
  std::sort(out.begin(), out.end());
  return out;
}

// bootstrap stream indices are offset per use so different statistics do not share draws
inline constexpr std::uint64_t kShapeStream = 0;
inline constexpr std::uint64_t kRadiusStream = 1ULL << 40;

// ---------------------------------------------------------------------------
// shape

struct ShapeCalibration {
  ShapeSpec shape;
  double density_estimate = 0.0;
  double derivative_estimate = 0.0;
  bool degenerate = false;
  std::vector<std::string> warnings;
};

inline ShapeCalibration calibrate_shape(const TailSample& sample, double a, int D, const BudgetSplit& split,
                                        const CalibrationConfig& cfg) {
  cfg.validate();
  if (D != 1 && D != 2) throw std::invalid_argument("calibrate_shape: D must be 1 or 2");
  if (sample.count_at_least(a) < 30) throw std::invalid_argument("calibrate_shape: fewer than 30 points above a");
  ShapeCalibration out;
  out.density_estimate = kde_density(sample, a, cfg.bandwidth);
  out.derivative_estimate = kde_density_derivative(sample, a, cfg.bandwidth);
  std::vector<double> dens, der;
  dens.reserve(cfg.bootstrap_B);
  der.reserve(cfg.bootstrap_B);
  for (int b = 0; b < cfg.bootstrap_B; ++b) {
    auto g = substream(cfg.seed, kShapeStream + static_cast<std::uint64_t>(b));
    const std::vector<double> xs = resample(sample.values(), g);
    const double h = cfg.bandwidth ? *cfg.bandwidth : silverman_bandwidth(xs);
    dens.push_back(kde_density(xs, a, h));
    if (D == 2) der.push_back(kde_density_derivative(xs, a, h));
  }
  std::sort(dens.begin(), dens.end());
  std::sort(der.begin(), der.end());
  if (D == 1) {
    out.shape = ShapeSpec::monotone(std::max(0.0, sorted_percentile(dens, split.eta_level)));
  } else {
    const double hi = std::max(0.0, sorted_percentile(dens, split.density_hi));
    const double lo = std::clamp(sorted_percentile(dens, split.density_lo), 0.0, hi);
    const double nu = std::max(0.0, -sorted_percentile(der, 1.0 - split.nu_level));
    out.shape = ShapeSpec::convex(lo, hi, nu);
    if (nu == 0.0 && hi == 0.0) {
      out.degenerate = true;
      out.warnings.push_back("degenerate shape calibration: nu = 0 and eta_hi = 0");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// moment sets

struct EllipsoidCalibration {
  Ellipsoid set;
  bool regularized = false;
  std::vector<std::string> warnings;
};

/// Values g_j(x_i) for every observation (rows) and generator (columns).
inline Eigen::MatrixXd generator_matrix(std::span<const double> x, const std::vector<PiecewisePoly>& g) {
  Eigen::MatrixXd M(static_cast<Eigen::Index>(x.size()), static_cast<Eigen::Index>(g.size()));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j) M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = g[j](x[i]);
  return M;
}

inline Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& M, const Eigen::VectorXd& mean) {
  const Eigen::MatrixXd C = M.rowwise() - mean.transpose();
  return C.transpose() * C / static_cast<double>(M.rows() - 1);
}

/// Ridge-regularizes a covariance that is not numerically positive definite.
inline bool regularize_covariance(Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  const double top = std::max(es.eigenvalues().maxCoeff(), 0.0);
  if (es.eigenvalues().minCoeff() > 1e-12 * top && top > 0.0) return false;
  const double tr = S.trace();
  const double eps = tr > 0.0 ? 1e-8 * tr : 1e-8;
  S += eps * Eigen::MatrixXd::Identity(S.rows(), S.cols());
  return true;
}

inline EllipsoidCalibration calibrate_ellipsoid(const TailSample& sample, double a,
                                                const std::vector<PiecewisePoly>& generators, double level,
                                                std::optional<double> radius_statistic = {}) {
  if (generators.empty()) throw std::invalid_argument("calibrate_ellipsoid: no generators");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("calibrate_ellipsoid: level must lie in (0,1)");
  for (const auto& g : generators)
    if (g.start() < a) throw std::invalid_argument("calibrate_ellipsoid: generators must vanish below a");
  const Eigen::MatrixXd M = generator_matrix(sample.values(), generators);
  EllipsoidCalibration out;
  out.set.mu = M.colwise().mean().transpose();
  out.set.sigma = sample_covariance(M, out.set.mu);
  if (regularize_covariance(out.set.sigma)) {
    out.regularized = true;
    out.warnings.push_back("singular moment covariance; ridge-regularized");
  }
  const double d = static_cast<double>(generators.size());
  const double stat = radius_statistic ? *radius_statistic : chi2_quantile(d, level);
  out.set.r = stat / static_cast<double>(sample.n());
  return out;
}

/// Up to `max_points` evenly spaced order statistics above a (the largest one included).
inline std::vector<double> ks_points(const TailSample& sample, double a, int max_points = 50) {
  const auto& v = sample.values();
  const std::size_t first = sample.n() - sample.count_at_least(a);
  std::vector<double> tail;
  for (std::size_t i = first; i < v.size(); ++i)
    if (v[i] > a && (tail.empty() || v[i] > tail.back())) tail.push_back(v[i]);
  if (tail.empty()) return tail;
  const std::size_t k = std::min<std::size_t>(tail.size(), static_cast<std::size_t>(std::max(1, max_points)));
  std::vector<double> out;
  for (std::size_t j = 1; j <= k; ++j) {
    const double x = tail[(j * tail.size()) / k - 1];
    if (out.empty() || x > out.back()) out.push_back(x);
  }
  return out;
}

/// Rectangle over {I(x >= a)} and {I(a <= x <= x_j)} with half-width z; z defaults to
/// the Kolmogorov quantile at `level` over sqrt(n).
inline MomentSpec calibrate_rectangle(const TailSample& sample, double a, double level,
                                      std::optional<double> z_override = {}, int max_points = 50) {
  if (sample.count_at_least(a) == 0) throw std::invalid_argument("calibrate_rectangle: no observations above a");
  const double n = static_cast<double>(sample.n());
  const double z = z_override ? *z_override : kolmogorov_quantile(level) / std::sqrt(n);
  const std::vector<double> xs = ks_points(sample, a, max_points);
  MomentSpec m;
  m.generators.push_back(PiecewisePoly::indicator(a, a, kInf));
  std::vector<double> freq{static_cast<double>(sample.count_at_least(a)) / n};
  const auto& v = sample.values();
  for (double x : xs) {
    m.generators.push_back(PiecewisePoly::indicator(a, a, x));
    const auto lo = std::lower_bound(v.begin(), v.end(), a);
    const auto hi = std::upper_bound(v.begin(), v.end(), x);
    freq.push_back(static_cast<double>(hi - lo) / n);
  }
  Rectangle r{Eigen::VectorXd(static_cast<Eigen::Index>(freq.size())), Eigen::VectorXd(static_cast<Eigen::Index>(freq.size()))};
  for (std::size_t j = 0; j < freq.size(); ++j) {
    r.lo(static_cast<Eigen::Index>(j)) = std::clamp(freq[j] - z, 0.0, 1.0);
    r.hi(static_cast<Eigen::Index>(j)) = std::clamp(freq[j] + z, 0.0, 1.0);
  }
  m.set = r;
  return m;
}

// ---------------------------------------------------------------------------
// bootstrap radius

struct BootstrapRadius {
  /// Ellipsoid: quantile of the quadratic-form statistic (use z / n as r).
  /// Rectangle: quantile of the scaled sup statistic divided by sqrt(n).
  double z = 0.0;
  /// Per-resample statistics, ascending (unscaled by n or sqrt(n)).
  std::vector<double> statistics;
};

/// Resampled max over thresholds of n (mu_b - mu)' Sigma^{-1} (mu_b - mu).
inline BootstrapRadius bootstrap_radius_ellipsoid(const TailSample& sample,
                                                  const std::vector<std::vector<PiecewisePoly>>& generators,
                                                  double delta, const CalibrationConfig& cfg) {
  cfg.validate();
  if (generators.empty()) throw std::invalid_argument("bootstrap_radius: no thresholds");
  if (!(delta > 0.0 && delta <= 1.0)) throw std::invalid_argument("bootstrap_radius: delta must lie in (0,1]");
  const double n = static_cast<double>(sample.n());
  struct Ref {
    Eigen::VectorXd mu;
    Eigen::LDLT<Eigen::MatrixXd> solver;
  };
  std::vector<Ref> refs;
  for (const auto& g : generators) {
    const Eigen::MatrixXd M = generator_matrix(sample.values(), g);
    Ref r;
    r.mu = M.colwise().mean().transpose();
    Eigen::MatrixXd S = sample_covariance(M, r.mu);
    regularize_covariance(S);
    r.solver.compute(S);
    refs.push_back(std::move(r));
  }
  BootstrapRadius out;
  for (int b = 0; b < cfg.bootstrap_B; ++b) {
    auto g = substream(cfg.seed, kRadiusStream + static_cast<std::uint64_t>(b));
    const std::vector<double> xs = resample(sample.values(), g);
    double stat = 0.0;
    for (std::size_t i = 0; i < generators.size(); ++i) {
      const Eigen::VectorXd d = generator_matrix(xs, generators[i]).colwise().mean().transpose() - refs[i].mu;
      stat = std::max(stat, n * d.dot(refs[i].solver.solve(d)));
    }
    out.statistics.push_back(stat);
  }
  std::sort(out.statistics.begin(), out.statistics.end());
  out.z = sorted_percentile(out.statistics, delta);
  return out;
}

/// Resampled max over thresholds of sqrt(n) sup_{x >= a_i} |F_b[a_i, x] - F_n[a_i, x]|,
/// evaluated at the resampled tail points on both sides of each jump.
inline BootstrapRadius bootstrap_radius_ks(const TailSample& sample, const std::vector<double>& thresholds,
                                           double delta, const CalibrationConfig& cfg) {
  cfg.validate();
  if (thresholds.empty()) throw std::invalid_argument("bootstrap_radius: no thresholds");
  if (!(delta > 0.0 && delta <= 1.0)) throw std::invalid_argument("bootstrap_radius: delta must lie in (0,1]");
  const double n = static_cast<double>(sample.n());
  const auto& v = sample.values();
  BootstrapRadius out;
  for (int b = 0; b < cfg.bootstrap_B; ++b) {
    auto g = substream(cfg.seed, kRadiusStream + static_cast<std::uint64_t>(b));
    const std::vector<double> xs = resample(v, g);
    double stat = 0.0;
    for (double a : thresholds) {
      const auto v0 = std::lower_bound(v.begin(), v.end(), a);
      const auto j0 = std::lower_bound(xs.begin(), xs.end(), a);
      for (auto it = j0; it != xs.end(); ++it) {
        const double j = static_cast<double>(it - j0 + 1);
        const double c = static_cast<double>(std::upper_bound(v0, v.end(), *it) - v0);
        stat = std::max({stat, (j - c) / n, (c - (j - 1.0)) / n});
      }
    }
    out.statistics.push_back(std::sqrt(n) * stat);
  }
  std::sort(out.statistics.begin(), out.statistics.end());
  out.z = sorted_percentile(out.statistics, delta) / std::sqrt(n);
  return out;
}

}  // namespace tailrobust
