#pragma once

// Synthetic experiments: sample from a known distribution, calibrate, bound, and
// compare with the exact tail quantity over many repetitions.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/lognormal.hpp>
#include <boost/math/distributions/pareto.hpp>

#include "bound.hpp"
#include "calibration.hpp"
#include "model.hpp"
#include "pot.hpp"
#include "rng.hpp"

namespace tailrobust {

struct DistributionSpec {
  enum class Kind { gamma, lognormal, pareto };
  Kind kind = Kind::gamma;
  /// gamma: (shape, scale); lognormal: (mu, sigma); pareto: (shape, scale)
  double p1 = 0.5;
  double p2 = 1.0;

  static DistributionSpec gamma(double shape, double scale) { return {Kind::gamma, shape, scale}; }
  static DistributionSpec lognormal(double mu, double sigma) { return {Kind::lognormal, mu, sigma}; }
  static DistributionSpec pareto(double shape, double scale) { return {Kind::pareto, shape, scale}; }

  void validate() const {
    if (!std::isfinite(p1) || !std::isfinite(p2)) throw std::invalid_argument("DistributionSpec: non-finite parameter");
    if (kind != Kind::lognormal && !(p1 > 0.0)) throw std::invalid_argument("DistributionSpec: shape must be > 0");
    if (!(p2 > 0.0)) throw std::invalid_argument("DistributionSpec: scale must be > 0");
  }

  std::string name() const {
    switch (kind) {
      case Kind::gamma: return "gamma";
      case Kind::lognormal: return "lognormal";
      case Kind::pareto: return "pareto";
    }
    return "?";
  }

  double cdf(double x) const {
    switch (kind) {
      case Kind::gamma:
        return x <= 0.0 ? 0.0 : boost::math::cdf(boost::math::gamma_distribution<double>(p1, p2), x);
      case Kind::lognormal:
        return x <= 0.0 ? 0.0 : boost::math::cdf(boost::math::lognormal_distribution<double>(p1, p2), x);
      case Kind::pareto:
        return x <= p2 ? 0.0 : -std::expm1(-p1 * std::log(x / p2));
    }
    return 0.0;
  }

  double sf(double x) const {
    if (!std::isfinite(x)) return x > 0 ? 0.0 : 1.0;
    switch (kind) {
      case Kind::gamma:
        return x <= 0.0 ? 1.0 : boost::math::cdf(boost::math::complement(boost::math::gamma_distribution<double>(p1, p2), x));
      case Kind::lognormal:
        return x <= 0.0 ? 1.0
                        : boost::math::cdf(boost::math::complement(boost::math::lognormal_distribution<double>(p1, p2), x));
      case Kind::pareto:
        return x <= p2 ? 1.0 : std::pow(x / p2, -p1);
    }
    return 1.0;
  }

  double quantile(double u) const {
    if (!(u >= 0.0 && u < 1.0)) throw std::invalid_argument("quantile: level must lie in [0,1)");
    switch (kind) {
      case Kind::gamma: return boost::math::quantile(boost::math::gamma_distribution<double>(p1, p2), u);
      case Kind::lognormal: return boost::math::quantile(boost::math::lognormal_distribution<double>(p1, p2), u);
      case Kind::pareto: return p2 * std::pow(1.0 - u, -1.0 / p1);
    }
    return 0.0;
  }

  double pdf(double x) const {
    switch (kind) {
      case Kind::gamma: return x <= 0.0 ? 0.0 : boost::math::pdf(boost::math::gamma_distribution<double>(p1, p2), x);
      case Kind::lognormal:
        return x <= 0.0 ? 0.0 : boost::math::pdf(boost::math::lognormal_distribution<double>(p1, p2), x);
      case Kind::pareto: return x < p2 ? 0.0 : p1 / p2 * std::pow(x / p2, -p1 - 1.0);
    }
    return 0.0;
  }

  double pdf_derivative(double x) const {
    if (x <= 0.0) return 0.0;
    switch (kind) {
      case Kind::gamma: return pdf(x) * ((p1 - 1.0) / x - 1.0 / p2);
      case Kind::lognormal: return -pdf(x) / x * (1.0 + (std::log(x) - p1) / (p2 * p2));
      case Kind::pareto: return x < p2 ? 0.0 : -(p1 + 1.0) / x * pdf(x);
    }
    return 0.0;
  }
};

inline std::vector<double> draw(const DistributionSpec& d, std::size_t n, std::mt19937_64& g) {
  std::vector<double> x(n);
  switch (d.kind) {
    case DistributionSpec::Kind::gamma: {
      std::gamma_distribution<double> dist(d.p1, d.p2);
      for (double& v : x) v = dist(g);
      break;
    }
    case DistributionSpec::Kind::lognormal: {
      std::normal_distribution<double> dist(d.p1, d.p2);
      for (double& v : x) v = std::exp(dist(g));
      break;
    }
    case DistributionSpec::Kind::pareto:
      for (double& v : x) v = d.p2 * std::pow(1.0 - open_uniform(g), -1.0 / d.p1);
      break;
  }
  return x;
}

inline TailSample sample_distribution(const DistributionSpec& d, std::size_t n, std::uint64_t seed) {
  d.validate();
  auto g = substream(seed, 0);
  return TailSample(draw(d, n, g));
}

/// Target quantity. Interval objectives are given by quantile levels of the true
/// distribution: P(q_lo <= X <= q_hi).
struct ObjectiveSpec {
  enum class Kind { interval, quantile };
  Kind kind = Kind::interval;
  double lo = 0.99;
  double hi = 0.995;
  double p = 0.99;

  static ObjectiveSpec interval(double lo, double hi) { return {Kind::interval, lo, hi, 0.0}; }
  static ObjectiveSpec quantile(double p) { return {Kind::quantile, 0.0, 0.0, p}; }

  std::string name() const {
    return kind == Kind::interval ? "P(q" + std::to_string(lo) + "<=X<=q" + std::to_string(hi) + ")"
                                  : "q" + std::to_string(p);
  }
};

inline double true_quantity(const DistributionSpec& d, const ObjectiveSpec& o) {
  if (o.kind == ObjectiveSpec::Kind::quantile) return d.quantile(o.p);
  return d.sf(d.quantile(o.lo)) - d.sf(d.quantile(o.hi));
}

/// Generator families for ellipsoidal moment sets.
enum class ChiGenerators {
  /// I(x >= a) and (x - a) I(x >= a)
  mass_and_mean,
  /// I(x >= a) and I(a <= x <= t) for tail sample quantiles t
  tail_indicators,
};

inline std::vector<PiecewisePoly> chi_generators(const TailSample& s, double a, ChiGenerators family,
                                                 int extra = 2) {
  std::vector<PiecewisePoly> g{PiecewisePoly::indicator(a, a, kInf)};
  if (family == ChiGenerators::mass_and_mean) {
    g.push_back(PiecewisePoly({a}, {Poly{0.0, 1.0}}));
    return g;
  }
  const double above = static_cast<double>(s.count_at_least(a));
  const double below = static_cast<double>(s.n()) - above;
  for (int k = 1; k <= extra; ++k) {
    const double level = (below + above * k / (extra + 1.0)) / static_cast<double>(s.n());
    const double t = s.quantile(std::min(level, 1.0 - 1e-12));
    if (t > a && (g.size() == 1 || t > g.back().breaks().back())) g.push_back(PiecewisePoly::indicator(a, a, t));
  }
  return g;
}

struct Setting {
  enum class Method { dro, pot };
  Method method = Method::dro;
  int D = 2;
  SetKind set = SetKind::ellipsoid;

  static Setting dro(int D, SetKind s) { return {Method::dro, D, s}; }
  static Setting pot() { return {Method::pot, 0, SetKind::ellipsoid}; }

  std::string name() const {
    if (method == Method::pot) return "POT";
    return "(" + std::to_string(D) + "," + to_string(set) + ")";
  }
};

struct ExperimentConfig {
  DistributionSpec distribution;
  std::size_t n = 500;
  int reps = 200;
  ObjectiveSpec objective;
  std::vector<Setting> settings{Setting::dro(2, SetKind::ellipsoid)};
  ThresholdSpec thresholds = ThresholdSpec::quantile({0.7});
  double alpha = 0.05;
  std::uint64_t seed = 2024;
  int bootstrap_B = 500;
  ChiGenerators chi_family = ChiGenerators::mass_and_mean;
  SolveOptions solve;
  unsigned threads = 0;  // 0: hardware concurrency

  void validate() const {
    distribution.validate();
    if (reps < 1) throw std::invalid_argument("ExperimentConfig: reps must be >= 1");
    if (n < 50) throw std::invalid_argument("ExperimentConfig: n must be >= 50");
    if (settings.empty()) throw std::invalid_argument("ExperimentConfig: no settings");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("ExperimentConfig: alpha must lie in (0,1)");
    if (bootstrap_B < 100) throw std::invalid_argument("ExperimentConfig: bootstrap_B must be >= 100");
    if (thresholds.kind != ThresholdSpec::Kind::quantile_of_sample)
      throw std::invalid_argument("ExperimentConfig: thresholds must be sample quantile levels");
    thresholds.validate();
    if (objective.kind == ObjectiveSpec::Kind::interval && !(objective.lo < objective.hi && objective.hi < 1.0))
      throw std::invalid_argument("ExperimentConfig: bad interval levels");
  }
};

struct RepRecord {
  int rep = 0;
  std::size_t setting = 0;
  double bound = kInf;
  Status status = Status::numerical_failure;
  bool covered = false;
  double threshold = 0.0;
  bool conservative = false;
  std::string error;
};

struct ExperimentRow {
  std::string distribution;
  std::string setting;
  std::string objective;
  double truth = 0.0;
  double ratio_mean = 0.0, ratio_hw = 0.0;
  double bound_mean = 0.0, bound_hw = 0.0;
  double coverage = 0.0, coverage_hw = 0.0;
  int reps_ok = 0;
  int failures = 0;
  int infinite = 0;
  bool valid = true;
};

struct ExperimentResult {
  std::vector<ExperimentRow> rows;
  std::vector<RepRecord> records;
};

/// Problems at every threshold for one sample, calibrated with the m-threshold budget.
struct CalibratedProblems {
  std::vector<DROProblem> problems;
  std::vector<double> nontail_cdfs;
};

inline CalibratedProblems calibrate_problems(std::shared_ptr<const TailSample> sample, const ThresholdSpec& thr,
                                             int D, SetKind set, const Objective& objective,
                                             const CalibrationConfig& cfg,
                                             ChiGenerators family = ChiGenerators::mass_and_mean) {
  const std::vector<double> as = thr.resolve(*sample);
  const int m = static_cast<int>(as.size());
  const BudgetSplit split = bonferroni_split(cfg.alpha, D, m);
  CalibratedProblems out;
  for (int i = 0; i < m; ++i) {
    const double a = as[i];
    CalibrationConfig c = cfg;
    c.seed = splitmix64(cfg.seed ^ (0x51ed2701ULL * static_cast<std::uint64_t>(i + 1)));
    ShapeSpec shape = ShapeSpec::none();
    if (D > 0) shape = calibrate_shape(*sample, a, D, split, c).shape;
    MomentSpec moments;
    if (set == SetKind::ellipsoid) {
      moments.generators = chi_generators(*sample, a, family);
      moments.set = calibrate_ellipsoid(*sample, a, moments.generators, split.moment_level).set;
    } else {
      moments = calibrate_rectangle(*sample, a, split.moment_level);
    }
    out.problems.push_back(build_problem(sample, ThresholdSpec::absolute(as), shape, moments, objective,
                                         static_cast<std::size_t>(i)));
    out.nontail_cdfs.push_back(sample->cdf_below(a));
  }
  return out;
}

inline RepRecord run_repetition(const ExperimentConfig& cfg, int rep, std::size_t si) {
  RepRecord r;
  r.rep = rep;
  r.setting = si;
  const Setting& st = cfg.settings[si];
  const std::uint64_t rep_seed = splitmix64(cfg.seed ^ splitmix64(static_cast<std::uint64_t>(rep)));
  auto sample = std::make_shared<const TailSample>(sample_distribution(cfg.distribution, cfg.n, rep_seed));
  const double truth = true_quantity(cfg.distribution, cfg.objective);
  try {
    if (st.method == Setting::Method::pot) {
      if (cfg.objective.kind != ObjectiveSpec::Kind::interval)
        throw std::invalid_argument("POT baseline supports interval objectives only");
      const double L = cfg.distribution.quantile(cfg.objective.lo);
      const double R = cfg.distribution.quantile(cfg.objective.hi);
      const MeanExcessCurve me = mean_excess_curve(*sample, 30, L);
      const PotBound pb = pot_upper_bound(*sample, me.suggested_threshold, L, R, cfg.alpha);
      r.threshold = me.suggested_threshold;
      r.bound = pb.upper;
      r.status = pb.fit.converged ? Status::optimal : Status::numerical_failure;
    } else {
      Objective obj;
      if (cfg.objective.kind == ObjectiveSpec::Kind::interval)
        obj = TailInterval{cfg.distribution.quantile(cfg.objective.lo), cfg.distribution.quantile(cfg.objective.hi)};
      else
        obj = QuantileObjective{cfg.objective.p};
      CalibrationConfig cc;
      cc.alpha = cfg.alpha;
      cc.bootstrap_B = cfg.bootstrap_B;
      cc.seed = rep_seed;
      const CalibratedProblems cp = calibrate_problems(sample, cfg.thresholds, st.D, st.set, obj, cc, cfg.chi_family);
      const BoundResult b = multi_threshold_bound(cp.problems, cfg.solve, cp.nontail_cdfs);
      r.bound = b.value;
      r.status = b.status;
      r.threshold = b.threshold_used.value_or(0.0);
      r.conservative = b.diagnostics.conservative;
    }
  } catch (const std::exception& e) {
    r.status = Status::numerical_failure;
    r.error = e.what();
  }
  const bool ok = r.status == Status::optimal || r.status == Status::unbounded;
  if (!ok) r.bound = kInf;
  r.covered = ok && r.bound >= truth;
  return r;
}

/// Mean and 1.96 sd / sqrt(k) half-width; the half-width is 0 for k = 1.
inline std::pair<double, double> mean_halfwidth(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  const double k = static_cast<double>(v.size());
  double m = 0.0;
  for (double x : v) m += x;
  m /= k;
  if (v.size() < 2) return {m, 0.0};
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, 1.96 * std::sqrt(s / (k - 1.0)) / std::sqrt(k)};
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::size_t ns = cfg.settings.size();
  const std::size_t total = static_cast<std::size_t>(cfg.reps) * ns;
  std::vector<RepRecord> recs(total);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t k = next++; k < total; k = next++)
      recs[k] = run_repetition(cfg, static_cast<int>(k / ns), k % ns);
  };
  unsigned nt = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  nt = static_cast<unsigned>(std::min<std::size_t>(nt, total));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < nt; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  ExperimentResult res;
  const double truth = true_quantity(cfg.distribution, cfg.objective);
  for (std::size_t si = 0; si < ns; ++si) {
    ExperimentRow row;
    row.distribution = cfg.distribution.name();
    row.setting = cfg.settings[si].name();
    row.objective = cfg.objective.name();
    row.truth = truth;
    std::vector<double> bounds, cover;
    for (std::size_t k = si; k < total; k += ns) {
      const RepRecord& r = recs[k];
      if (r.status != Status::optimal && r.status != Status::unbounded) {
        ++row.failures;
        continue;
      }
      ++row.reps_ok;
      if (!std::isfinite(r.bound)) ++row.infinite;
      bounds.push_back(r.bound);
      cover.push_back(r.covered ? 1.0 : 0.0);
    }
    std::tie(row.bound_mean, row.bound_hw) = mean_halfwidth(bounds);
    std::tie(row.coverage, row.coverage_hw) = mean_halfwidth(cover);
    row.ratio_mean = row.bound_mean / truth;
    row.ratio_hw = row.bound_hw / truth;
    row.valid = row.failures <= 0.02 * cfg.reps;
    res.rows.push_back(row);
  }
  res.records = std::move(recs);
  return res;
}

}  // namespace tailrobust
