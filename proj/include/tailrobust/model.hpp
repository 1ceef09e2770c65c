#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "piecewise.hpp"

namespace tailrobust {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Default cap on piece degree after transformation.
inline constexpr int kDefaultMaxDegree = 4;

class TailSample {
 public:
  explicit TailSample(std::vector<double> values) : values_(std::move(values)) {
    if (values_.size() < 2) throw std::invalid_argument("TailSample: need at least two observations");
    for (double v : values_)
      if (!std::isfinite(v)) throw std::invalid_argument("TailSample: non-finite observation");
    std::sort(values_.begin(), values_.end());
  }

  const std::vector<double>& values() const { return values_; }
  std::size_t n() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

  /// Order statistic at ceil(q n), 1-based.
  double quantile(double q) const {
    if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("quantile level must lie in (0,1)");
    const double pos = q * static_cast<double>(n());
    auto k = static_cast<std::size_t>(std::ceil(pos - 1e-9 * std::max(1.0, pos)));
    k = std::clamp<std::size_t>(k, 1, n());
    return values_[k - 1];
  }

  /// Number of observations >= x.
  std::size_t count_at_least(double x) const {
    return static_cast<std::size_t>(values_.end() - std::lower_bound(values_.begin(), values_.end(), x));
  }

  /// Empirical P(X < x).
  double cdf_below(double x) const {
    return static_cast<double>(n() - count_at_least(x)) / static_cast<double>(n());
  }

  double mean() const {
    double s = 0.0;
    for (double v : values_) s += v;
    return s / static_cast<double>(n());
  }

  double stddev() const {
    const double m = mean();
    double s = 0.0;
    for (double v : values_) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(n() - 1));
  }

  friend bool operator==(const TailSample&, const TailSample&) = default;

 private:
  std::vector<double> values_;
};

struct ThresholdSpec {
  enum class Kind { quantile_of_sample, absolute };
  Kind kind = Kind::quantile_of_sample;
  std::vector<double> levels;

  static ThresholdSpec quantile(std::vector<double> q) { return {Kind::quantile_of_sample, std::move(q)}; }
  static ThresholdSpec absolute(std::vector<double> a) { return {Kind::absolute, std::move(a)}; }

  void validate() const {
    if (levels.empty()) throw std::invalid_argument("ThresholdSpec: no levels");
    for (std::size_t i = 0; i < levels.size(); ++i) {
      if (!std::isfinite(levels[i])) throw std::invalid_argument("ThresholdSpec: non-finite level");
      if (kind == Kind::quantile_of_sample && !(levels[i] > 0.0 && levels[i] < 1.0))
        throw std::invalid_argument("ThresholdSpec: quantile levels must lie in (0,1)");
      if (i > 0 && !(levels[i] > levels[i - 1]))
        throw std::invalid_argument("ThresholdSpec: levels must be strictly increasing");
    }
  }

  std::vector<double> resolve(const TailSample& s) const {
    validate();
    std::vector<double> out;
    for (double l : levels) out.push_back(kind == Kind::absolute ? l : s.quantile(l));
    return out;
  }

  friend bool operator==(const ThresholdSpec&, const ThresholdSpec&) = default;
};

struct ShapeSpec {
  int order = 0;
  double eta = 0.0;
  double eta_lo = 0.0;
  double eta_hi = 0.0;
  double nu = 0.0;

  static ShapeSpec none() { return {}; }
  static ShapeSpec monotone(double eta) { return {1, eta, 0.0, 0.0, 0.0}; }
  static ShapeSpec convex(double eta_lo, double eta_hi, double nu) { return {2, 0.0, eta_lo, eta_hi, nu}; }

  void validate() const {
    auto ok = [](double v) { return std::isfinite(v) && v >= 0.0; };
    switch (order) {
      case 0:
        if (eta != 0.0 || eta_lo != 0.0 || eta_hi != 0.0 || nu != 0.0)
          throw std::invalid_argument("ShapeSpec: order 0 takes no parameters");
        break;
      case 1:
        if (!ok(eta)) throw std::invalid_argument("ShapeSpec: eta must be finite and >= 0");
        if (eta_lo != 0.0 || eta_hi != 0.0 || nu != 0.0)
          throw std::invalid_argument("ShapeSpec: order 1 takes only eta");
        break;
      case 2:
        if (!ok(eta_lo) || !ok(eta_hi) || !ok(nu))
          throw std::invalid_argument("ShapeSpec: eta_lo, eta_hi, nu must be finite and >= 0");
        if (eta_lo > eta_hi) throw std::invalid_argument("ShapeSpec: eta_lo > eta_hi");
        if (eta != 0.0) throw std::invalid_argument("ShapeSpec: order 2 does not take eta");
        break;
      default:
        throw std::invalid_argument("ShapeSpec: order must be 0, 1 or 2");
    }
  }

  friend bool operator==(const ShapeSpec&, const ShapeSpec&) = default;
};

struct Ellipsoid {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  double r = 0.0;
};

struct Rectangle {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
};

using MomentSet = std::variant<Ellipsoid, Rectangle>;

inline Eigen::Index set_dimension(const MomentSet& s) {
  return std::visit([](const auto& v) -> Eigen::Index {
    if constexpr (std::is_same_v<std::decay_t<decltype(v)>, Ellipsoid>)
      return v.mu.size();
    else
      return v.lo.size();
  }, s);
}

inline void validate_set(const MomentSet& s) {
  if (const auto* e = std::get_if<Ellipsoid>(&s)) {
    const auto d = e->mu.size();
    if (d == 0 || e->sigma.rows() != d || e->sigma.cols() != d)
      throw std::invalid_argument("Ellipsoid: dimension mismatch");
    if (!(e->r > 0.0) || !std::isfinite(e->r)) throw std::invalid_argument("Ellipsoid: r must be > 0");
    if (!e->mu.allFinite() || !e->sigma.allFinite()) throw std::invalid_argument("Ellipsoid: non-finite data");
    const double asym = (e->sigma - e->sigma.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-10 * std::max(1.0, e->sigma.cwiseAbs().maxCoeff()))
      throw std::invalid_argument("Ellipsoid: covariance not symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(e->sigma);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("Ellipsoid: covariance not positive definite");
  } else {
    const auto& rc = std::get<Rectangle>(s);
    if (rc.lo.size() == 0 || rc.lo.size() != rc.hi.size())
      throw std::invalid_argument("Rectangle: dimension mismatch");
    for (Eigen::Index i = 0; i < rc.lo.size(); ++i) {
      if (!std::isfinite(rc.lo[i]) || !std::isfinite(rc.hi[i]))
        throw std::invalid_argument("Rectangle: bounds must be finite");
      if (rc.lo[i] > rc.hi[i]) throw std::invalid_argument("Rectangle: lo > hi");
    }
  }
}

struct MomentSpec {
  std::vector<PiecewisePoly> generators;
  MomentSet set;

  void validate(double a) const {
    if (generators.empty()) throw std::invalid_argument("MomentSpec: no generators");
    validate_set(set);
    if (static_cast<std::size_t>(set_dimension(set)) != generators.size())
      throw std::invalid_argument("MomentSpec: set dimension differs from generator count");
    const PiecewisePoly ind = PiecewisePoly::indicator(a, a, kInf);
    if (!(generators.front().simplified() == ind.simplified()))
      throw std::invalid_argument("MomentSpec: first generator must be the indicator of x >= a");
    for (const auto& g : generators)
      if (g.start() < a) throw std::invalid_argument("MomentSpec: generators must vanish below a");
  }
};

/// Tail interval probability P(L <= X <= R); R may be +inf.
struct TailInterval {
  double L = 0.0;
  double R = kInf;
};

/// Quantile at level p.
struct QuantileObjective {
  double p = 0.5;
};

using Objective = std::variant<TailInterval, QuantileObjective>;

struct DROProblem {
  std::shared_ptr<const TailSample> sample;
  double a = 0.0;
  ShapeSpec shape;
  MomentSpec moments;
  Objective objective;
};

/// Indicator of [L, R] on [a, inf).
inline PiecewisePoly objective_function(double a, const TailInterval& t) {
  return PiecewisePoly::indicator(a, t.L, t.R);
}

/// Resolves thresholds and validates everything; `which` picks the threshold used as a.
inline DROProblem build_problem(std::shared_ptr<const TailSample> sample, const ThresholdSpec& thr,
                                const ShapeSpec& shape, const MomentSpec& moments, const Objective& objective,
                                std::size_t which = 0) {
  if (!sample) throw std::invalid_argument("build_problem: null sample");
  const std::vector<double> as = thr.resolve(*sample);
  if (which >= as.size()) throw std::invalid_argument("build_problem: threshold index out of range");
  const double a = as[which];
  const double a_max = as.back();
  shape.validate();
  moments.validate(a);
  if (sample->count_at_least(a) == 0) throw std::invalid_argument("build_problem: no observations above threshold");
  if (const auto* t = std::get_if<TailInterval>(&objective)) {
    if (!(t->L >= a_max)) throw std::invalid_argument("build_problem: objective region lies below the threshold");
    if (!(t->R >= t->L)) throw std::invalid_argument("build_problem: interval with R < L");
  } else {
    const double p = std::get<QuantileObjective>(objective).p;
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("build_problem: quantile level must lie in (0,1)");
  }
  return DROProblem{std::move(sample), a, shape, moments, objective};
}

enum class Status { optimal, unbounded, infeasible, numerical_failure };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::optimal: return "optimal";
    case Status::unbounded: return "unbounded";
    case Status::infeasible: return "infeasible";
    case Status::numerical_failure: return "numerical-failure";
  }
  return "?";
}

/// Named dual multipliers. Entries absent from the problem are left empty / zero.
struct DualRecord {
  double kappa = 0.0;
  double lambda = 0.0;
  Eigen::VectorXd u;
  Eigen::VectorXd lambda1;
  Eigen::VectorXd lambda2;
  double delta1 = 0.0;
  double delta2 = 0.0;
};

struct Diagnostics {
  int iterations = 0;
  int cuts = 0;
  double gap = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  bool conservative = false;
  std::string backend;
  double runtime_ms = 0.0;
};

struct BoundResult {
  double value = kInf;
  Status status = Status::numerical_failure;
  std::optional<DualRecord> dual;
  Diagnostics diagnostics;
  std::optional<double> threshold_used;
};

/// Single-column CSV; a non-numeric first row is taken as a header.
inline std::vector<double> read_csv_column(std::istream& in) {
  std::vector<double> out;
  std::string line;
  bool first = true;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto b = line.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    auto e = line.find_first_of(",;\t", b);
    std::string cell = line.substr(b, e == std::string::npos ? std::string::npos : e - b);
    while (!cell.empty() && (cell.back() == ' ')) cell.pop_back();
    if (cell.size() >= 2 && cell.front() == '"' && cell.back() == '"') cell = cell.substr(1, cell.size() - 2);
    std::size_t used = 0;
    double v = 0.0;
    bool parsed = false;
    try {
      v = std::stod(cell, &used);
      parsed = used == cell.size();
    } catch (const std::exception&) {
      parsed = false;
    }
    if (!parsed) {
      if (first) {
        first = false;
        continue;
      }
      throw std::runtime_error("read_csv_column: bad value on line " + std::to_string(lineno));
    }
    first = false;
    out.push_back(v);
  }
  return out;
}

inline TailSample read_sample_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return TailSample(read_csv_column(in));
}

}  // namespace tailrobust
