// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <tailrobust/asymptotics.hpp>
#include <tailrobust/bound.hpp>
#include <tailrobust/harness.hpp>

#include "instances.hpp"

using namespace tailrobust;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double rel(double x, double ref) { return std::abs(x - ref) / std::max(std::abs(ref), 1e-300); }

DROProblem quantile_problem(const ClosedFormParams& p, double level) {
  DROProblem pr = fixtures::closed_form_instance(p).problem;
  pr.objective = QuantileObjective{level};
  return pr;
}

Outcome closed_form_agreement() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 g(7);
  std::uniform_real_distribution<double> U(0.05, 0.95);
  double worst_z = 0.0, worst_q = 0.0;
  int bad_status = 0;
  for (int k = 0; k < 50; ++k) {
    const auto p = fixtures::random_closed_form(g);
    const auto z = worst_case_tail_prob(fixtures::closed_form_instance(p).problem);
    if (z.status != Status::optimal) ++bad_status;
    worst_z = std::max(worst_z, rel(z.value, closed_form_zstar(p)));
    const double level = 1.0 - p.beta + p.eta * p.eta / (2.0 * p.nu) * U(g);
    const auto q = worst_case_quantile(quantile_problem(p, level), level, 1.0 - p.beta);
    if (q.status != Status::optimal) ++bad_status;
    worst_q = std::max(worst_q, rel(q.value, closed_form_qstar(p.a, level, p.beta, p.eta, p.nu)));
  }
  const double s = seconds_since(t0);
  return {worst_z <= 1e-6 && worst_q <= 1e-6 && bad_status == 0 && s < 5.0,
          fmt("worst rel err z* %.2e, q* %.2e; non-optimal %d; %.2f s", worst_z, worst_q, bad_status, s)};
}

// Grid oracle at `n` points; on a residual failure the span is shrunk by 4 and retried.
GridOracleResult grid_with_retry(const MomentProblem& mp, int n, double span) {
  for (int t = 0; t < 4; ++t, span /= 4.0) {
    const auto r = primal_grid_oracle(mp, n, mp.a + span);
    if (r.feasible) return r;
  }
  return {};
}

Outcome duality_sandwich() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 g(11);
  int count = 0, above = 0, no_grid = 0, wide = 0;
  double worst_gap = 0.0;
  auto check = [&](const MomentProblem& mp, double span) {
    ++count;
    const double dual = solve_moment_problem(mp).value;
    const auto g1 = grid_with_retry(mp, 2000, span);
    const auto g4 = grid_with_retry(mp, 8000, span);
    if (!g1.feasible || !g4.feasible) {
      ++no_grid;
      return;
    }
    if (g1.value > dual + 1e-7 || g4.value > dual + 1e-7) ++above;
    const double gap = (dual - g4.value) / std::abs(dual);
    worst_gap = std::max(worst_gap, gap);
    if (gap >= 1e-3) ++wide;
  };
  for (int k = 0; k < 30; ++k) {
    const auto p = fixtures::random_closed_form(g);
    check(to_moment_problem(fixtures::closed_form_instance(p).problem), 4000.0 * std::max(p.eta / p.nu, p.b - p.a));
  }
  for (int k = 0; k < 30; ++k) {
    const auto in = fixtures::random_instance(g, k % 3, k % 2 == 0);
    check(to_moment_problem(in.problem), 4000.0 / in.truth.lambda);
  }
  return {above == 0 && no_grid == 0 && wide == 0,
          fmt("%d instances; grid above dual %d; no feasible grid %d; refined gap >= 1e-3 on %d (worst %.2e); %.1f s",
              count, above, no_grid, wide, worst_gap, seconds_since(t0))};
}

Outcome backend_agreement() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 g(13);
  SolveOptions ipm, cut;
  ipm.backend = Backend::interior_point;
  cut.backend = Backend::cutting_plane;
  double worst = 0.0;
  int bad_status = 0;
  for (int k = 0; k < 50; ++k) {
    // cycles through monotone/convex shape with ellipsoid/rectangle sets
    const auto in = fixtures::random_instance(g, 1 + (k % 4) / 2, k % 2 == 0);
    const auto a = worst_case_tail_prob(in.problem, ipm), b = worst_case_tail_prob(in.problem, cut);
    if (a.status != Status::optimal || b.status != Status::optimal) ++bad_status;
    worst = std::max(worst, rel(b.value, a.value));
  }
  return {worst <= 1e-6 && bad_status == 0,
          fmt("worst rel diff %.2e over 50 instances; non-optimal %d; %.1f s", worst, bad_status, seconds_since(t0))};
}

Outcome conservativeness_limit() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto pareto = AnalyticTail::pareto(1.0);
  double worst = 0.0;
  for (double a : {1e3, 1e4, 1e5, 1e6}) worst = std::max(worst, rel(finite_a_ratio_prob(pareto, a, 2.0 * a).ratio, 1.5));
  const auto normal = AnalyticTail::normal();
  bool increasing = true;
  double prev = 0.0, first = 0.0;
  for (double a = 1.0; a <= 18.0; a += 1.0) {
    const double r = finite_a_ratio_prob(normal, a, 2.0 * a).ratio;
    if (a == 1.0) first = r;
    increasing = increasing && r > prev;
    prev = r;
  }
  const double s = seconds_since(t0);
  return {worst <= 0.05 && increasing && prev > 1e3 * first && s < 1.0,
          fmt("Pareto worst rel dev from 1.5: %.2e; normal ratio %.3g at a=1 to %.3g at a=18 (%s); %.3f s", worst, first,
              prev, increasing ? "increasing" : "NOT increasing", s)};
}

ExperimentConfig table_config(const DistributionSpec& d) {
  ExperimentConfig c;
  c.distribution = d;
  c.n = 500;
  c.reps = 200;
  c.objective = ObjectiveSpec::interval(0.99, 0.995);
  c.settings = {Setting::dro(2, SetKind::ellipsoid)};
  c.thresholds = ThresholdSpec::quantile({0.7});
  c.seed = 2024;
  return c;
}

Outcome table_replication() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto gamma = run_experiment(table_config(DistributionSpec::gamma(0.5, 1.0))).rows.at(0);
  const auto pareto = run_experiment(table_config(DistributionSpec::pareto(1.5, 1.0))).rows.at(0);
  const double s = seconds_since(t0);
  const bool ok = gamma.valid && pareto.valid && gamma.coverage >= 0.98 && gamma.bound_mean >= 1.2e-2 &&
                  gamma.bound_mean <= 1.9e-2 && pareto.coverage >= 0.97 && s < 1800.0;
  return {ok, fmt("gamma coverage %.3f, mean bound %.3e +- %.1e; pareto coverage %.3f; failures %d/%d; %.0f s",
                  gamma.coverage, gamma.bound_mean, gamma.bound_hw, pareto.coverage, gamma.failures, pareto.failures, s)};
}

Outcome pot_undercoverage() {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig c = table_config(DistributionSpec::gamma(0.5, 1.0));
  c.objective = ObjectiveSpec::interval(0.9, 0.905);
  c.settings = {Setting::pot(), Setting::dro(2, SetKind::ellipsoid)};
  const auto rows = run_experiment(c).rows;
  const auto& pot = rows.at(0);
  const auto& dro = rows.at(1);
  return {pot.valid && dro.valid && pot.coverage <= 0.80 && dro.coverage >= 0.95,
          fmt("POT coverage %.3f, DRO coverage %.3f; failures %d/%d; %.0f s", pot.coverage, dro.coverage, pot.failures,
              dro.failures, seconds_since(t0))};
}

Outcome statistical_guarantee() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 g(17);
  int violations = 0, bad_status = 0;
  double worst = -kInf;
  for (int k = 0; k < 500; ++k) {
    const auto in = fixtures::random_instance(g, k % 3, (k / 3) % 2 == 0);
    const auto& iv = std::get<TailInterval>(in.problem.objective);
    const double truth = in.truth.interval_prob(iv.L, iv.R);
    const auto r = worst_case_tail_prob(in.problem);
    if (r.status != Status::optimal && r.status != Status::unbounded) {
      ++bad_status;
      continue;
    }
    worst = std::max(worst, truth - r.value);
    if (truth > r.value + 1e-7) ++violations;
  }
  return {violations == 0 && bad_status == 0,
          fmt("500 instances: truth above bound %d, solver failures %d, max(truth - bound) %.2e; %.1f s", violations,
              bad_status, worst, seconds_since(t0))};
}

Outcome sensitivity_check() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 g(19);
  double worst_scale = 0.0, worst_fd = 0.0;
  int bad_status = 0;
  for (int k = 0; k < 12; ++k) {
    auto in = fixtures::random_instance(g, 1 + k % 2, false);
    const Eigen::Vector2d mu = in.truth.moments();
    in.problem.moments.set = Rectangle{mu, mu};
    if (in.order == 2) in.problem.shape.eta_lo = in.problem.shape.eta_hi = in.truth.density_at_a();
    const auto mp = to_moment_problem(in.problem);
    const auto base = solve_moment_problem(mp);
    if (base.status != Status::optimal) {
      ++bad_status;
      continue;
    }
    const double v = base.value;
    for (double c : {-0.1, 0.1, 0.5})
      worst_scale = std::max(worst_scale, std::abs(solve_moment_problem(scale_moments(mp, c)).value - (1.0 + c) * v) /
                                              std::max(v, 1e-3));

    const int dim = static_cast<int>(mp.G.size());
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    Eigen::VectorXd m(dim + 1);
    m(0) = mp.mass;
    int j = 1;
    for (const auto& b : mp.blocks)
      for (Eigen::Index i = 0; i < std::get<Rectangle>(b).lo.size(); ++i) m(j++) = std::get<Rectangle>(b).lo(i);
    // generic direction in the two data moments, sized relative to each coordinate
    Eigen::VectorXd dr = Eigen::VectorXd::Zero(dim + 1);
    dr(dim - 1) = U(g) * m(dim - 1);
    dr(dim) = U(g) * m(dim);
    const auto sd = sensitivity(mp, dr);
    if (sd.status != Status::optimal) {
      ++bad_status;
      continue;
    }
    const double rho = 1e-4;
    const double fd = (solve_moment_problem(shift_moments(mp, dr, rho)).value -
                       solve_moment_problem(shift_moments(mp, dr, -rho)).value) /
                      (2.0 * rho);
    worst_fd = std::max(worst_fd, std::abs(sd.derivative - fd) / std::max(std::abs(fd), 1e-3));
  }
  return {worst_scale <= 1e-6 && worst_fd <= 1e-3 && bad_status == 0,
          fmt("scaling worst rel err %.2e; derivative vs central difference worst rel err %.2e; failures %d; %.1f s",
              worst_scale, worst_fd, bad_status, seconds_since(t0))};
}

Outcome monotonicity() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 g(23);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  int zb = 0, qp = 0, set = 0, checks = 0;
  const double tol = 1e-7;
  // z* in b: closed form and the full pipeline
  for (int k = 0; k < 20; ++k) {
    auto in = fixtures::random_instance(g, k % 3, k % 2 == 0);
    double prev = kInf;
    for (double d = 0.0; d <= 3.0; d += 0.5) {
      in.problem.objective = TailInterval{in.truth.a + d / in.truth.lambda, kInf};
      const double v = worst_case_tail_prob(in.problem).value;
      ++checks;
      if (v > prev + tol) ++zb;
      prev = v;
    }
    ClosedFormParams p = fixtures::random_closed_form(g);
    prev = kInf;
    for (double d = 0.0; d <= 5.0; d += 0.1) {
      p.b = p.a + d;
      const double v = closed_form_zstar(p);
      ++checks;
      if (v > prev + 1e-15) ++zb;
      prev = v;
    }
  }
  // q* in p through the pipeline
  for (int k = 0; k < 10; ++k) {
    const auto p = fixtures::random_closed_form(g);
    const double top = p.eta * p.eta / (2.0 * p.nu);
    double prev = -kInf;
    for (double t = 0.05; t < 1.0; t += 0.15) {
      const double level = 1.0 - p.beta + top * t;
      const double v = worst_case_quantile(quantile_problem(p, level), level, 1.0 - p.beta).value;
      ++checks;
      if (v < prev - tol * std::max(1.0, std::abs(prev))) ++qp;
      prev = v;
    }
  }
  // enlarging the moment set never lowers the bound
  for (int k = 0; k < 30; ++k) {
    auto in = fixtures::random_instance(g, k % 3, k % 2 == 0);
    double prev = worst_case_tail_prob(in.problem).value;
    for (int step = 0; step < 3; ++step) {
      if (auto* e = std::get_if<Ellipsoid>(&in.problem.moments.set)) {
        e->r *= 1.0 + 2.0 * U(g);
      } else {
        auto& rc = std::get<Rectangle>(in.problem.moments.set);
        rc.lo -= 0.01 * U(g) * Eigen::Vector2d::Ones();
        rc.hi += 0.02 * U(g) * Eigen::Vector2d::Ones();
      }
      const double v = worst_case_tail_prob(in.problem).value;
      ++checks;
      if (v < prev - tol) ++set;
      prev = v;
    }
  }
  return {zb == 0 && qp == 0 && set == 0,
          fmt("%d checks; violations: z* in b %d, q* in p %d, set enlargement %d; %.1f s", checks, zb, qp, set,
              seconds_since(t0))};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"closed-form oracle agreement", closed_form_agreement},
      {"duality sandwich", duality_sandwich},
      {"backend agreement", backend_agreement},
      {"conservativeness convergence", conservativeness_limit},
      {"table replication (gamma, pareto)", table_replication},
      {"POT undercoverage", pot_undercoverage},
      {"statistical guarantee", statistical_guarantee},
      {"sensitivity", sensitivity_check},
      {"monotonicity", monotonicity},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("[%s] %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
