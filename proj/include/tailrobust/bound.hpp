#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "conic/cutting_plane.hpp"
#include "conic/dual.hpp"
#include "conic/ipm.hpp"
#include "conic/sos.hpp"
#include "model.hpp"
#include "transform.hpp"

namespace tailrobust {

// ---------------------------------------------------------------------------
// closed forms for the convex class with a known tail mass

struct ClosedFormParams {
  double a = 0.0;
  double b = 0.0;
  double beta = 0.0;
  double eta = 0.0;
  double nu = 1.0;

  double mu() const { return eta / nu; }
  double sigma() const { return 2.0 * beta / nu; }

  void validate() const {
    if (!(b >= a)) throw std::invalid_argument("ClosedFormParams: need b >= a");
    if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("ClosedFormParams: beta must lie in (0,1]");
    if (!(eta >= 0.0) || !(nu > 0.0)) throw std::invalid_argument("ClosedFormParams: need eta >= 0, nu > 0");
    if (!(eta * eta < 2.0 * beta * nu)) throw std::domain_error("ClosedFormParams: requires eta^2 < 2 beta nu");
  }
};

/// Worst-case P(X >= b) over convex tails with mass beta, f(a) = eta, f'(a) >= -nu.
inline double closed_form_zstar(const ClosedFormParams& p) {
  p.validate();
  const double mu = p.mu(), sigma = p.sigma(), d = p.b - p.a;
  if (mu <= d) return 0.5 * p.nu * (sigma - mu * mu);
  return 0.5 * p.nu * (sigma - 2.0 * d * mu + d * d);
}

/// Worst-case p-quantile over the same class; +inf past the attainable range.
inline double closed_form_qstar(double a, double p, double beta, double eta, double nu) {
  ClosedFormParams cp{a, a, beta, eta, nu};
  cp.validate();
  if (!(p >= 1.0 - beta - 1e-15)) throw std::domain_error("closed_form_qstar: requires p >= 1 - beta");
  if (p > 1.0 - beta + eta * eta / (2.0 * nu)) return kInf;
  const double mu = cp.mu(), sigma = cp.sigma();
  const double rad = std::max(0.0, mu * mu - sigma + 2.0 * (1.0 - p) / nu);
  return a + mu - std::sqrt(rad);
}

// ---------------------------------------------------------------------------
// generic solve

enum class Backend { interior_point, cutting_plane, automatic };

struct SolveOptions {
  Backend backend = Backend::automatic;
  conic::IpmOptions ipm;
  conic::CuttingPlaneOptions cutting;
  /// Run the primal grid oracle after solving and flag large duality gaps.
  bool check_gap = false;
  int gap_grid = 2000;
  int max_degree = kDefaultMaxDegree;
};

struct GridOracleResult {
  bool feasible = false;
  double value = -kInf;
  DiscreteMeasure measure;
  /// Largest constraint violation of the reported measure (mass and rectangle rows in
  /// absolute terms, ellipsoids in units of the radius).
  double residual = kInf;
};

namespace detail {

/// Function values at a grid point, taken either from the right (the piece value) or as a left limit.
struct GridPoint {
  double x;
  bool left_limit;
};

inline double eval_at(const PiecewisePoly& f, const GridPoint& g) {
  return g.left_limit ? f.left_limit(g.x) : f(g.x);
}

}  // namespace detail

/// Lower bound on the moment problem from discrete measures on a grid of [a, x_max].
inline GridOracleResult primal_grid_oracle(const MomentProblem& mp, int grid_size, double x_max,
                                           const conic::IpmOptions& opt = {}) {
  if (grid_size < 1) throw std::invalid_argument("primal_grid_oracle: empty grid");
  if (!(x_max >= mp.a)) throw std::invalid_argument("primal_grid_oracle: x_max < a");
  std::vector<detail::GridPoint> pts;
  const double span = x_max - mp.a;
  if (grid_size == 1 || span == 0.0) {
    pts.push_back({mp.a, false});
  } else {
    const int nu = grid_size / 2, ng = grid_size - nu;
    for (int k = 0; k < nu; ++k) pts.push_back({mp.a + span * k / std::max(1, nu - 1), false});
    const double lo = span * 1e-6;
    for (int k = 0; k < ng; ++k)
      pts.push_back({mp.a + lo * std::pow(span / lo, static_cast<double>(k) / std::max(1, ng - 1)), false});
    std::vector<double> br;
    for (double x : mp.H.breaks()) br.push_back(x);
    for (const auto& g : mp.G)
      for (double x : g.breaks()) br.push_back(x);
    for (double x : br)
      if (x >= mp.a && x <= x_max) {
        pts.push_back({x, false});
        if (x > mp.a) pts.push_back({x, true});
      }
  }
  const int np = static_cast<int>(pts.size());
  const int nG = static_cast<int>(mp.G.size());
  Eigen::VectorXd hv(np);
  Eigen::MatrixXd gv(nG, np);
  for (int k = 0; k < np; ++k) {
    hv(k) = detail::eval_at(mp.H, pts[k]);
    for (int j = 0; j < nG; ++j) gv(j, k) = detail::eval_at(mp.G[j], pts[k]);
  }

  // columns: q (np) | orthant slacks | soc blocks
  struct RowSpec {
    Eigen::VectorXd qcoef;
    double rhs;
    int slack_sign;  // 0 none, +1 or -1
  };
  std::vector<RowSpec> rows;
  rows.push_back({Eigen::VectorXd::Ones(np), mp.mass, mp.null_atom ? 1 : 0});
  struct SocSpec {
    int row0;
    Eigen::MatrixXd T;
    Eigen::VectorXd Tmu;
    int j0;
  };
  std::vector<SocSpec> socs;
  int j = 0;
  for (const auto& blk : mp.blocks) {
    if (const auto* rc = std::get_if<Rectangle>(&blk)) {
      for (Eigen::Index k = 0; k < rc->lo.size(); ++k, ++j) {
        const Eigen::VectorXd g = gv.row(j).transpose();
        if (rc->lo(k) == rc->hi(k)) {
          rows.push_back({g, rc->lo(k), 0});
        } else {
          rows.push_back({g, rc->hi(k), 1});
          rows.push_back({g, rc->lo(k), -1});
        }
      }
    } else {
      const auto& el = std::get<Ellipsoid>(blk);
      const int d = static_cast<int>(el.mu.size());
      const Eigen::MatrixXd T = conic::detail::inv_sqrt_spd(el.sigma) / std::sqrt(el.r);
      socs.push_back({0, T, T * el.mu, j});
      j += d;
    }
  }
  int nslack = 0;
  for (const auto& r : rows)
    if (r.slack_sign != 0) ++nslack;
  int nsoc_rows = 0, nsoc_cols = 0;
  for (const auto& s : socs) {
    nsoc_rows += 1 + static_cast<int>(s.T.rows());
    nsoc_cols += 1 + static_cast<int>(s.T.rows());
  }
  conic::ConeProgram P;
  P.dims.orthant = np + nslack;
  for (const auto& s : socs) P.dims.soc.push_back(1 + static_cast<int>(s.T.rows()));
  const int ncols = np + nslack + nsoc_cols;
  const int nrows = static_cast<int>(rows.size()) + nsoc_rows;
  P.A = Eigen::MatrixXd::Zero(nrows, ncols);
  P.b = Eigen::VectorXd::Zero(nrows);
  P.c = Eigen::VectorXd::Zero(ncols);
  P.c.head(np) = -hv;
  int sl = np, r = 0;
  for (const auto& rs : rows) {
    P.A.row(r).head(np) = rs.qcoef.transpose();
    if (rs.slack_sign != 0) P.A(r, sl++) = rs.slack_sign;
    P.b(r) = rs.rhs;
    ++r;
  }
  int sc = np + nslack;
  for (const auto& s : socs) {
    const int d = static_cast<int>(s.T.rows());
    P.A(r, sc) = 1.0;
    P.b(r) = 1.0;
    ++r;
    const Eigen::MatrixXd TG = s.T * gv.middleRows(s.j0, d);
    for (int i = 0; i < d; ++i, ++r) {
      P.A(r, sc + 1 + i) = 1.0;
      P.A.row(r).head(np) = -TG.row(i);
      P.b(r) = -s.Tmu(i);
    }
    sc += d + 1;
  }
  const conic::ConeSolution s = conic::solve_cone_program(P, opt);
  GridOracleResult out;
  if (s.status != conic::ConeStatus::optimal) return out;
  out.feasible = true;
  out.value = -s.primal_objective;
  // report a value that is attained by a nonnegative measure on the grid
  double attained = 0.0;
  for (int k = 0; k < np; ++k) {
    const double w = std::max(0.0, s.x(k));
    attained += w * hv(k);
    if (w > 1e-12) out.measure.emplace_back(pts[k].x, w);
  }
  out.value = std::min(out.value, attained + 1e-12);
  Eigen::VectorXd w = s.x.head(np).cwiseMax(0.0);
  const Eigen::VectorXd gw = gv * w;
  const double total = w.sum();
  double res = mp.null_atom ? std::max(0.0, total - mp.mass) : std::abs(total - mp.mass);
  j = 0;
  for (const auto& blk : mp.blocks) {
    if (const auto* rc = std::get_if<Rectangle>(&blk)) {
      for (Eigen::Index k = 0; k < rc->lo.size(); ++k, ++j)
        res = std::max({res, gw(j) - rc->hi(k), rc->lo(k) - gw(j)});
    } else {
      const auto& el = std::get<Ellipsoid>(blk);
      const int d = static_cast<int>(el.mu.size());
      const Eigen::MatrixXd T = conic::detail::inv_sqrt_spd(el.sigma) / std::sqrt(el.r);
      res = std::max(res, (T * (gw.segment(j, d) - el.mu)).norm() - 1.0);
      j += d;
    }
  }
  out.residual = std::max(res, 0.0);
  // the LP tolerances are relative; on wide grids the rounded measure can miss the set
  if (out.residual > 1e-6) out.feasible = false;
  return out;
}

inline BoundResult solve_moment_problem(const MomentProblem& mp, const SolveOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const conic::DualProgram dp = conic::dualize(mp);
  conic::DualSolve ds;
  std::string backend;
  if (opt.backend != Backend::cutting_plane) {
    ds = conic::solve_sos(dp, opt.ipm);
    backend = "interior-point";
  }
  // an infeasibility verdict on badly scaled data is cross-checked as well
  const bool failed = ds.status == conic::ConeStatus::numerical_failure ||
                      ds.status == conic::ConeStatus::max_iterations ||
                      ds.status == conic::ConeStatus::primal_infeasible;
  if (opt.backend == Backend::cutting_plane || (opt.backend == Backend::automatic && failed)) {
    ds = conic::cutting_plane_solve(dp, opt.cutting);
    backend = "cutting-plane";
  }
  BoundResult res;
  res.diagnostics.backend = backend;
  res.diagnostics.iterations = ds.iterations;
  res.diagnostics.cuts = ds.cuts;
  res.diagnostics.primal_residual = ds.primal_residual;
  res.diagnostics.dual_residual = ds.dual_residual;
  res.diagnostics.gap = ds.gap;
  switch (ds.status) {
    case conic::ConeStatus::optimal:
      res.status = Status::optimal;
      res.value = ds.value;
      res.dual = conic::dual_record(dp, ds.z);
      break;
    case conic::ConeStatus::primal_infeasible:
      res.status = Status::unbounded;
      res.value = kInf;
      break;
    case conic::ConeStatus::dual_infeasible:
      res.status = Status::infeasible;
      res.value = -kInf;
      break;
    default:
      res.status = Status::numerical_failure;
      res.value = kInf;
  }
  if (opt.check_gap && res.status == Status::optimal) {
    double x_max = mp.a;
    for (const auto& g : mp.G) x_max = std::max(x_max, g.breaks().back());
    x_max = std::max(x_max, mp.H.breaks().back());
    const double L = mp.length_scale > 0.0 ? mp.length_scale : std::max(1.0, x_max - mp.a);
    x_max += 10.0 * L;
    const GridOracleResult g = primal_grid_oracle(mp, opt.gap_grid, x_max, opt.ipm);
    if (g.feasible) {
      const double gap = (res.value - g.value) / std::max(1e-12, std::abs(res.value));
      res.diagnostics.gap = std::max(res.diagnostics.gap, gap);
      res.diagnostics.conservative = gap > 1e-4;
    }
  }
  res.diagnostics.runtime_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

/// Largest value of E[I(X >= a)] allowed by the first coordinate of the moment set.
inline double mass_cap(const MomentSpec& m) {
  double cap = 1.0;
  if (const auto* e = std::get_if<Ellipsoid>(&m.set))
    cap = std::min(cap, e->mu(0) + std::sqrt(e->r * e->sigma(0, 0)));
  else
    cap = std::min(cap, std::get<Rectangle>(m.set).hi(0));
  return std::max(cap, 0.0);
}

inline BoundResult worst_case_tail_prob(const DROProblem& problem, const SolveOptions& opt = {}) {
  const MomentProblem mp = to_moment_problem(problem, opt.max_degree);
  BoundResult res = solve_moment_problem(mp, opt);
  res.threshold_used = problem.a;
  const double cap = mass_cap(problem.moments);
  if (res.status == Status::unbounded) {
    res.status = Status::optimal;
    res.value = cap;
    res.dual.reset();
    res.diagnostics.conservative = true;
  }
  if (res.status == Status::optimal) res.value = std::clamp(res.value, 0.0, cap);
  return res;
}

/// Smallest q with worst-case P(X >= q) <= 1 - p: an upper bound on the p-quantile of
/// every member of the ambiguity set. `nontail_cdf_at_a` only short-circuits p <= P(X < a).
/// +inf when the ambiguity set can push mass 1 - p to infinity.
inline BoundResult worst_case_quantile(const DROProblem& problem, double p, double nontail_cdf_at_a,
                                       const SolveOptions& opt = {}) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("worst_case_quantile: p must lie in (0,1)");
  const auto t0 = std::chrono::steady_clock::now();
  BoundResult res;
  res.threshold_used = problem.a;
  auto done = [&]() {
    res.diagnostics.runtime_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return res;
  };
  if (p <= nontail_cdf_at_a) {
    res.status = Status::optimal;
    res.value = problem.a;
    return done();
  }
  const double target = 1.0 - p;
  const double slack = 1e-10 * target;
  double unit = 1.0;
  if (problem.sample) {
    const double sd = problem.sample->stddev();
    if (sd > 0.0) unit = sd;
  }
  DROProblem tail = problem;
  int solves = 0;
  auto reaches = [&](double q, bool& ok) {
    tail.objective = TailInterval{q, kInf};
    const BoundResult r = worst_case_tail_prob(tail, opt);
    ++solves;
    res.diagnostics.iterations += r.diagnostics.iterations;
    ok = r.status == Status::optimal;
    return ok && r.value <= target + slack;
  };
  bool ok = true;
  if (reaches(problem.a, ok)) {
    res.status = Status::optimal;
    res.value = problem.a;
    res.diagnostics.cuts = solves;
    return done();
  }
  double lo = problem.a, hi = problem.a + unit;
  int doublings = 0;
  while (!reaches(hi, ok)) {
    // far out the polynomial data spans too many orders of magnitude to resolve; +inf is still a valid bound
    if (!ok && doublings < 10) {
      res.status = Status::numerical_failure;
      return done();
    }
    if (!ok || ++doublings > 60) {
      res.diagnostics.conservative = !ok;
      res.status = Status::unbounded;
      res.value = kInf;
      res.diagnostics.cuts = solves;
      return done();
    }
    lo = hi;
    hi = problem.a + 2.0 * (hi - problem.a);
  }
  while (hi - lo > 1e-12 * std::max(unit, hi - problem.a)) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (reaches(mid, ok))
      hi = mid;
    else if (ok)
      lo = mid;
    else {
      res.status = Status::numerical_failure;
      return done();
    }
  }
  res.status = Status::optimal;
  res.value = hi;
  res.diagnostics.cuts = solves;
  return done();
}

/// Minimum of the per-threshold bounds; each problem must carry the m-threshold calibration.
inline BoundResult multi_threshold_bound(const std::vector<DROProblem>& problems, const SolveOptions& opt = {},
                                         const std::vector<double>& nontail_cdfs = {}) {
  if (problems.empty()) throw std::invalid_argument("multi_threshold_bound: no problems");
  BoundResult best;
  best.status = Status::numerical_failure;
  bool any = false;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    BoundResult r;
    if (const auto* q = std::get_if<QuantileObjective>(&problems[i].objective)) {
      const double F = i < nontail_cdfs.size() ? nontail_cdfs[i]
                                               : (problems[i].sample ? problems[i].sample->cdf_below(problems[i].a) : 0.0);
      r = worst_case_quantile(problems[i], q->p, F, opt);
    } else {
      r = worst_case_tail_prob(problems[i], opt);
    }
    if (r.status == Status::numerical_failure || r.status == Status::infeasible) continue;
    if (!any || r.value < best.value) {
      best = r;
      any = true;
    }
  }
  return best;
}

/// Directional derivative of the optimal value when the moment vector (mass first)
/// moves along dr; every block must be a singleton rectangle.
struct SensitivityResult {
  Status status = Status::numerical_failure;
  double value = 0.0;
  double derivative = 0.0;
};

inline SensitivityResult sensitivity(const MomentProblem& mp, const Eigen::VectorXd& dr,
                                     const conic::IpmOptions& opt = {}) {
  for (const auto& b : mp.blocks) {
    const auto* rc = std::get_if<Rectangle>(&b);
    if (!rc || (rc->lo - rc->hi).cwiseAbs().maxCoeff() != 0.0)
      throw std::invalid_argument("sensitivity: requires a singleton moment set");
  }
  const int nG = static_cast<int>(mp.G.size());
  if (dr.size() != nG + 1) throw std::invalid_argument("sensitivity: direction must have 1 + dim entries");
  const conic::DualProgram dp = conic::dualize(mp);
  const conic::DualSolve base = conic::solve_sos(dp, opt);
  SensitivityResult out;
  if (base.status != conic::ConeStatus::optimal) {
    out.status = base.status == conic::ConeStatus::primal_infeasible ? Status::unbounded : Status::infeasible;
    return out;
  }
  out.value = base.value;
  const conic::SosProgram sp = conic::sos_reformulate(dp);
  const auto& P0 = sp.program;
  // insert one orthant slack column right after the existing orthant variables
  const int ins = P0.dims.free + P0.dims.orthant;
  const int n0 = static_cast<int>(P0.A.cols()), m0 = static_cast<int>(P0.A.rows());
  conic::ConeProgram P;
  P.dims = P0.dims;
  P.dims.orthant += 1;
  P.A = Eigen::MatrixXd::Zero(m0 + 1, n0 + 1);
  P.A.topLeftCorner(m0, ins) = P0.A.leftCols(ins);
  P.A.topRightCorner(m0, n0 - ins) = P0.A.rightCols(n0 - ins);
  P.b.resize(m0 + 1);
  P.b.head(m0) = P0.b;
  Eigen::VectorXd crow = Eigen::VectorXd::Zero(n0 + 1);
  crow.head(ins) = P0.c.head(ins);
  crow.tail(n0 - ins) = P0.c.tail(n0 - ins);
  P.A.row(m0) = crow.transpose();
  P.A(m0, ins) = 1.0;
  // dr'y with y = (kappa, multipliers of each coordinate)
  Eigen::VectorXd zc = Eigen::VectorXd::Zero(dp.size());
  zc(dp.kappa) += dr(0);
  for (int k = 0; k < nG; ++k) zc += dr(k + 1) * dp.wmap.row(k).transpose();
  P.c = Eigen::VectorXd::Zero(n0 + 1);
  for (int jj = 0; jj < dp.size(); ++jj) P.c(jj < ins ? jj : jj + 1) = zc(jj);
  // the relaxed optimal face is O(sqrt(slack)) wide, so use the smallest slack the solver accepts
  for (double slack : {1e-12, 1e-10, 1e-8}) {
    P.b(m0) = base.value + slack * (1.0 + std::abs(base.value));
    const conic::ConeSolution s = conic::solve_cone_program(P, opt);
    if (s.status == conic::ConeStatus::dual_infeasible) {
      out.status = Status::unbounded;
      out.derivative = -kInf;
      return out;
    }
    if (s.status == conic::ConeStatus::optimal) {
      out.status = Status::optimal;
      out.derivative = s.primal_objective;
      return out;
    }
  }
  return out;
}

/// Moment problem with every moment coordinate (mass included) scaled by (1 + c).
inline MomentProblem scale_moments(MomentProblem mp, double c) {
  mp.mass *= 1.0 + c;
  for (auto& b : mp.blocks) {
    if (auto* rc = std::get_if<Rectangle>(&b)) {
      rc->lo *= 1.0 + c;
      rc->hi *= 1.0 + c;
    } else {
      std::get<Ellipsoid>(b).mu *= 1.0 + c;
    }
  }
  return mp;
}

/// Moment problem shifted along dr (mass first) by rho.
inline MomentProblem shift_moments(MomentProblem mp, const Eigen::VectorXd& dr, double rho) {
  mp.mass += rho * dr(0);
  int j = 1;
  for (auto& b : mp.blocks) {
    if (auto* rc = std::get_if<Rectangle>(&b)) {
      for (Eigen::Index k = 0; k < rc->lo.size(); ++k, ++j) {
        rc->lo(k) += rho * dr(j);
        rc->hi(k) += rho * dr(j);
      }
    } else {
      auto& e = std::get<Ellipsoid>(b);
      for (Eigen::Index k = 0; k < e.mu.size(); ++k, ++j) e.mu(k) += rho * dr(j);
    }
  }
  return mp;
}

}  // namespace tailrobust
