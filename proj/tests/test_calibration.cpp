#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <tailrobust/calibration.hpp>

using namespace tailrobust;

namespace {

std::vector<double> draw(int n, std::uint64_t seed, auto&& dist) {
  std::mt19937_64 g(seed);
  std::vector<double> v(n);
  for (double& x : v) x = dist(g);
  return v;
}

TailSample exp_sample(int n, std::uint64_t seed) {
  return TailSample(draw(n, seed, std::exponential_distribution<double>(1.0)));
}

// alternating series 1 - 2 sum (-1)^{k-1} exp(-2 k^2 x^2), valid for moderate x
double kolmogorov_series(double x) {
  double s = 0.0;
  for (int k = 1; k < 200; ++k) s += (k % 2 ? 1.0 : -1.0) * std::exp(-2.0 * k * k * x * x);
  return 1.0 - 2.0 * s;
}

CalibrationConfig config(std::uint64_t seed, int B = 500) {
  CalibrationConfig c;
  c.seed = seed;
  c.bootstrap_B = B;
  return c;
}

}  // namespace

TEST(Kde, SingleKernelAnalyticValues) {
  const std::vector<double> one{0.0};
  const double h = 0.7;
  const double c = 1.0 / (h * std::sqrt(2.0 * std::numbers::pi));
  EXPECT_NEAR(kde_density(one, 0.0, h), c, 1e-15);
  EXPECT_NEAR(kde_density_derivative(one, 0.0, h), 0.0, 1e-15);
  EXPECT_NEAR(kde_density_derivative(one, h, h), -c / h * std::exp(-0.5), 1e-15);
  EXPECT_EQ(kde_density(one, 100.0, h), 0.0);
}

TEST(Kde, SilvermanBandwidth) {
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0, 5.0};
  double m = 3.0, ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  EXPECT_NEAR(silverman_bandwidth(x), 1.06 * std::sqrt(ss / 4.0) * std::pow(5.0, -0.2), 1e-12);
}

TEST(Kde, MonteCarloOracles) {
  const auto normal = draw(100000, 1, std::normal_distribution<double>());
  EXPECT_NEAR(kde_density(normal, 0.0), 1.0 / std::sqrt(2.0 * std::numbers::pi), 0.02);
  const auto unif = draw(100000, 2, std::uniform_real_distribution<double>());
  EXPECT_NEAR(kde_density(unif, 0.5), 1.0, 0.05);
  const auto ex = draw(100000, 3, std::exponential_distribution<double>(1.0));
  EXPECT_NEAR(kde_density_derivative(ex, 1.0), -std::exp(-1.0), 0.05);
}

TEST(Bonferroni, Levels) {
  const auto d1 = bonferroni_split(0.05, 1, 1);
  EXPECT_NEAR(d1.moment_level, 0.975, 1e-15);
  EXPECT_NEAR(d1.eta_level, 0.975, 1e-15);
  const auto d2 = bonferroni_split(0.05, 2, 1);
  EXPECT_NEAR(d2.moment_level, 1.0 - 0.05 / 3.0, 1e-15);
  EXPECT_NEAR(d2.density_lo, 0.05 / 6.0, 1e-15);
  EXPECT_NEAR(d2.density_hi, 1.0 - 0.05 / 6.0, 1e-15);
  EXPECT_NEAR(d2.nu_level, 1.0 - 0.05 / 3.0, 1e-15);
  EXPECT_NEAR(bonferroni_split(0.05, 2, 4).moment_level, 1.0 - 0.05 / 9.0, 1e-15);
  EXPECT_NEAR(bonferroni_split(0.05, 0, 4).moment_level, 1.0 - 0.05 / 4.0, 1e-15);
  // with one threshold the miss probabilities of all statements add up to alpha
  const auto one1 = bonferroni_split(0.1, 1, 1), one2 = bonferroni_split(0.1, 2, 1);
  EXPECT_NEAR((1.0 - one1.moment_level) + (1.0 - one1.eta_level), 0.1, 1e-15);
  EXPECT_NEAR((1.0 - one2.moment_level) + one2.density_lo + (1.0 - one2.density_hi) + (1.0 - one2.nu_level), 0.1,
              1e-15);
  EXPECT_THROW(bonferroni_split(1.0, 1, 1), std::invalid_argument);
  EXPECT_THROW(bonferroni_split(0.05, 3, 1), std::invalid_argument);
  EXPECT_THROW(bonferroni_split(0.05, 1, 0), std::invalid_argument);
}

TEST(Quantiles, ChiSquareAndKolmogorov) {
  // chi-square with 2 degrees of freedom has the closed-form quantile -2 log(1 - p)
  EXPECT_NEAR(chi2_quantile(2.0, 0.975), -2.0 * std::log(0.025), 1e-10);
  EXPECT_NEAR(chi2_quantile(2.0, 0.975), 7.3778, 1e-4);
  for (double x : {0.3, 0.59, 0.61, 1.0, 1.5, 2.5}) EXPECT_NEAR(kolmogorov_cdf(x), kolmogorov_series(x), 1e-12) << x;
  const double k = kolmogorov_quantile(0.975);
  EXPECT_NEAR(k, 1.4802, 1e-4);
  EXPECT_NEAR(kolmogorov_series(k), 0.975, 1e-12);
}

TEST(Ellipsoid, RadiusIsChiSquareOverN) {
  const auto s = exp_sample(500, 4);
  const double a = s.quantile(0.7);
  const std::vector<PiecewisePoly> g{PiecewisePoly::indicator(a, a, kInf), PiecewisePoly::power(a, 1)};
  const auto e = calibrate_ellipsoid(s, a, g, 0.975);
  EXPECT_NEAR(e.set.r, 7.3778 / 500.0, 1e-4 / 500.0);
  EXPECT_FALSE(e.regularized);
  // mean over the full sample: the generators vanish below a
  double m0 = 0.0, m1 = 0.0;
  for (double x : s.values())
    if (x >= a) m0 += 1.0, m1 += x;
  EXPECT_NEAR(e.set.mu(0), m0 / 500.0, 1e-15);
  EXPECT_NEAR(e.set.mu(1), m1 / 500.0, 1e-12);
  EXPECT_NO_THROW(validate_set(MomentSet{e.set}));
  EXPECT_GT(calibrate_ellipsoid(s, a, g, 0.99).set.r, e.set.r);
}

TEST(Ellipsoid, SingularCovarianceIsRegularized) {
  std::vector<double> v(100, 0.0);
  for (int i = 50; i < 100; ++i) v[i] = 2.0;
  const TailSample s(v);
  const std::vector<PiecewisePoly> g{PiecewisePoly::indicator(1.0, 1.0, kInf), PiecewisePoly::power(1.0, 1)};
  const auto e = calibrate_ellipsoid(s, 1.0, g, 0.95);
  EXPECT_TRUE(e.regularized);
  EXPECT_FALSE(e.warnings.empty());
  EXPECT_NO_THROW(validate_set(MomentSet{e.set}));
}

TEST(Ellipsoid, CoversTrueMoments) {
  // Exp(1), a fixed: E I(X >= a) = e^{-a}, E X I(X >= a) = (a + 1) e^{-a}
  const double a = -std::log(0.3);
  const Eigen::Vector2d truth(0.3, 0.3 * (a + 1.0));
  const std::vector<PiecewisePoly> g{PiecewisePoly::indicator(a, a, kInf), PiecewisePoly::power(a, 1)};
  int hits = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const auto e = calibrate_ellipsoid(exp_sample(500, 1000 + rep), a, g, 0.95).set;
    const Eigen::Vector2d d = truth - e.mu;
    if (d.dot(e.sigma.ldlt().solve(d)) <= e.r) ++hits;
  }
  EXPECT_GE(hits, 930);
}

TEST(Rectangle, CenterAndHalfWidth) {
  const auto s = exp_sample(500, 5);
  const double a = s.quantile(0.7);
  const auto m = calibrate_rectangle(s, a, 0.975);
  const auto& r = std::get<Rectangle>(m.set);
  const double z = 1.4802 / std::sqrt(500.0);
  EXPECT_NEAR(0.5 * (r.lo(0) + r.hi(0)), 0.30, 0.005);
  EXPECT_NEAR(0.5 * (r.hi(0) - r.lo(0)), z, 1e-4);
  EXPECT_LE(m.generators.size(), 51u);
  EXPECT_NO_THROW(m.validate(a));
  // each coordinate counts a <= x <= x_j
  for (std::size_t j = 1; j < m.generators.size(); ++j) {
    double cnt = 0.0;
    for (double x : s.values()) cnt += m.generators[j](x) + (m.generators[j](x) == 0.0 ? m.generators[j].left_limit(x) : 0.0);
    EXPECT_NEAR(std::clamp(cnt / 500.0 - z, 0.0, 1.0), r.lo(static_cast<Eigen::Index>(j)), 1e-4) << j;
  }
}

TEST(Rectangle, LargeRadiusIsVacuous) {
  const auto s = exp_sample(200, 6);
  const auto m = calibrate_rectangle(s, s.quantile(0.5), 0.975, 1.0);
  const auto& r = std::get<Rectangle>(m.set);
  EXPECT_TRUE((r.lo.array() == 0.0).all());
  EXPECT_TRUE((r.hi.array() == 1.0).all());
}

TEST(Rectangle, KsPointsAreTailOrderStatistics) {
  const auto s = exp_sample(1000, 7);
  const double a = s.quantile(0.6);
  const auto xs = ks_points(s, a);
  EXPECT_EQ(xs.size(), 50u);
  EXPECT_EQ(xs.back(), s.values().back());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    EXPECT_GT(xs[i], a);
    if (i) EXPECT_GT(xs[i], xs[i - 1]);
  }
}

TEST(Shape, StructureAndDeterminism) {
  const auto s = exp_sample(500, 8);
  const double a = s.quantile(0.7);
  const auto split = bonferroni_split(0.05, 2, 1);
  const auto c1 = calibrate_shape(s, a, 2, split, config(42));
  const auto c2 = calibrate_shape(s, a, 2, split, config(42));
  EXPECT_EQ(c1.shape, c2.shape);
  EXPECT_LE(c1.shape.eta_lo, c1.shape.eta_hi);
  EXPECT_GE(c1.shape.eta_lo, 0.0);
  EXPECT_GE(c1.shape.nu, 0.0);
  EXPECT_NO_THROW(c1.shape.validate());
  // the band brackets the true density e^{-a}
  EXPECT_LE(c1.shape.eta_lo, std::exp(-a) * 1.15);
  EXPECT_GE(c1.shape.eta_hi, std::exp(-a) * 0.85);
  EXPECT_FALSE(calibrate_shape(s, a, 2, split, config(43)).shape == c1.shape);
}

TEST(Shape, HigherLevelsWidenTheBand) {
  const auto s = exp_sample(500, 9);
  const double a = s.quantile(0.7);
  const auto lo = calibrate_shape(s, a, 2, bonferroni_split(0.2, 2, 1), config(1)).shape;
  const auto hi = calibrate_shape(s, a, 2, bonferroni_split(0.02, 2, 1), config(1)).shape;
  EXPECT_GE(hi.eta_hi, lo.eta_hi);
  EXPECT_LE(hi.eta_lo, lo.eta_lo);
  EXPECT_GE(hi.nu, lo.nu);
  const auto m1 = calibrate_shape(s, a, 1, bonferroni_split(0.2, 1, 1), config(1)).shape;
  const auto m2 = calibrate_shape(s, a, 1, bonferroni_split(0.02, 1, 1), config(1)).shape;
  EXPECT_GE(m2.eta, m1.eta);
}

TEST(Shape, Errors) {
  const auto s = exp_sample(100, 10);
  EXPECT_THROW(calibrate_shape(s, s.quantile(0.9), 1, bonferroni_split(0.05, 1, 1), config(1)),
               std::invalid_argument);
  EXPECT_THROW(calibrate_shape(s, s.quantile(0.5), 0, bonferroni_split(0.05, 1, 1), config(1)),
               std::invalid_argument);
  EXPECT_THROW(config(1, 50).validate(), std::invalid_argument);
}

TEST(Shape, MonotoneCoverage) {
  const double a = -std::log(0.3);
  int hits = 0;
  const int reps = 300;
  for (int rep = 0; rep < reps; ++rep) {
    const auto c = calibrate_shape(exp_sample(500, 2000 + rep), a, 1, bonferroni_split(0.05, 1, 1), config(rep, 200));
    if (c.shape.eta >= 0.3) ++hits;
  }
  EXPECT_GE(hits, static_cast<int>(0.97 * reps));
}

TEST(Bootstrap, DegenerateLevelGivesMaximum) {
  const auto s = exp_sample(300, 11);
  const double a = s.quantile(0.7);
  const std::vector<std::vector<PiecewisePoly>> g{{PiecewisePoly::indicator(a, a, kInf), PiecewisePoly::power(a, 1)}};
  const auto r = bootstrap_radius_ellipsoid(s, g, 1.0, config(3, 200));
  EXPECT_EQ(r.z, r.statistics.back());
  const auto k = bootstrap_radius_ks(s, {a}, 1.0, config(3, 200));
  EXPECT_NEAR(k.z * std::sqrt(300.0), k.statistics.back(), 1e-12);
}

TEST(Bootstrap, MoreThresholdsNeverShrink) {
  const auto s = exp_sample(500, 12);
  std::vector<double> as;
  std::vector<std::vector<PiecewisePoly>> g;
  for (double q : {0.6, 0.7, 0.8, 0.9}) {
    const double a = s.quantile(q);
    as.push_back(a);
    g.push_back({PiecewisePoly::indicator(a, a, kInf), PiecewisePoly::power(a, 1)});
  }
  const auto cfg = config(5, 300);
  const auto one = bootstrap_radius_ellipsoid(s, {g[1]}, 0.95, cfg);
  const auto four = bootstrap_radius_ellipsoid(s, g, 0.95, cfg);
  EXPECT_GE(four.z, one.z);
  for (std::size_t i = 0; i < one.statistics.size(); ++i) EXPECT_GE(four.statistics[i], one.statistics[i]);
  EXPECT_GE(bootstrap_radius_ks(s, as, 0.95, cfg).z, bootstrap_radius_ks(s, {as[1]}, 0.95, cfg).z);
}

TEST(Bootstrap, QuadraticFormIsApproximatelyChiSquare) {
  const auto s = exp_sample(500, 13);
  const double a = s.quantile(0.7);
  const std::vector<std::vector<PiecewisePoly>> g{{PiecewisePoly::indicator(a, a, kInf), PiecewisePoly::power(a, 1)}};
  const auto r = bootstrap_radius_ellipsoid(s, g, 0.95, config(7, 1000));
  double mean = 0.0;
  for (double v : r.statistics) mean += v;
  mean /= static_cast<double>(r.statistics.size());
  EXPECT_NEAR(mean, 2.0, 0.3);
  // KS statistic: its quantile should sit near the Kolmogorov one
  const auto k = bootstrap_radius_ks(s, {s.values().front()}, 0.95, config(7, 1000));
  EXPECT_NEAR(k.z * std::sqrt(500.0), kolmogorov_quantile(0.95), 0.15);
}

TEST(Bootstrap, Deterministic) {
  const auto s = exp_sample(300, 14);
  const auto a = s.quantile(0.7);
  EXPECT_EQ(bootstrap_radius_ks(s, {a}, 0.9, config(9, 150)).statistics,
            bootstrap_radius_ks(s, {a}, 0.9, config(9, 150)).statistics);
}

TEST(Joint, ConvexClassCoverage) {
  // Exp(1) tail beyond a fixed a: shape f(a) = e^{-a}, -f'(a) = e^{-a}; moments as above
  const double alpha = 0.05, a = -std::log(0.3);
  const Eigen::Vector2d truth(0.3, 0.3 * (a + 1.0));
  const std::vector<PiecewisePoly> g{PiecewisePoly::indicator(a, a, kInf), PiecewisePoly::power(a, 1)};
  const auto split = bonferroni_split(alpha, 2, 1);
  const int reps = 500;
  int hits = 0;
  for (int rep = 0; rep < reps; ++rep) {
    const auto s = exp_sample(500, 5000 + rep);
    const auto sh = calibrate_shape(s, a, 2, split, config(rep, 200)).shape;
    const auto e = calibrate_ellipsoid(s, a, g, split.moment_level).set;
    const Eigen::Vector2d d = truth - e.mu;
    const bool ok = sh.eta_lo <= 0.3 && 0.3 <= sh.eta_hi && sh.nu >= 0.3 && d.dot(e.sigma.ldlt().solve(d)) <= e.r;
    hits += ok;
  }
  EXPECT_GE(static_cast<double>(hits) / reps, 1.0 - alpha - 0.03);
}
