#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include <tailrobust/pot.hpp>

using namespace tailrobust;

namespace {

std::vector<double> exp_sample(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::exponential_distribution<double> E(1.0);
  std::vector<double> x(n);
  for (double& v : x) v = E(g);
  return x;
}

std::vector<double> pareto_sample(std::size_t n, double alpha, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> x(n);
  for (double& v : x) v = std::pow(1.0 - U(g), -1.0 / alpha);
  return x;
}

}  // namespace

TEST(GpdLikelihood, ExponentialCase) {
  const std::vector<double> y{0.5, 1.0, 2.5, 0.25};
  const double n = 4.0, ybar = 4.25 / 4.0;
  EXPECT_NEAR(gpd_log_likelihood(y, 0.0, ybar), -n * std::log(ybar) - n, 1e-12);
  // continuity through xi = 0
  EXPECT_NEAR(gpd_log_likelihood(y, 1e-9, ybar), gpd_log_likelihood(y, 0.0, ybar), 1e-7);
  EXPECT_EQ(gpd_log_likelihood(y, -1.0, 1.0), -std::numeric_limits<double>::infinity());
  EXPECT_EQ(gpd_log_likelihood(y, 0.1, 0.0), -std::numeric_limits<double>::infinity());
}

TEST(GpdLikelihood, GradientMatchesFiniteDifferences) {
  const auto y = exp_sample(200, 5);
  for (auto [xi, sigma] : {std::pair{0.2, 1.3}, std::pair{-0.1, 0.9}, std::pair{0.0, 1.0}, std::pair{1e-4, 1.1}}) {
    const auto g = gpd_gradient(y, xi, sigma);
    const double h = 1e-6;
    const double fx = (gpd_log_likelihood(y, xi + h, sigma) - gpd_log_likelihood(y, xi - h, sigma)) / (2 * h);
    const double fs = (gpd_log_likelihood(y, xi, sigma + h) - gpd_log_likelihood(y, xi, sigma - h)) / (2 * h);
    EXPECT_NEAR(g(0), fx, 1e-4 * std::max(1.0, std::abs(fx))) << xi;
    EXPECT_NEAR(g(1), fs, 1e-4 * std::max(1.0, std::abs(fs))) << xi;
  }
}

TEST(GpdFit, ExponentialRecovered) {
  const auto y = exp_sample(100000, 7);
  const GpdFit f = fit_gpd_mle(y);
  EXPECT_TRUE(f.converged);
  EXPECT_NEAR(f.xi, 0.0, 0.02);
  EXPECT_NEAR(f.sigma, 1.0, 0.02);
  EXPECT_FALSE(f.irregular);
}

TEST(GpdFit, ParetoExcessesRecovered) {
  // Pareto(1.5) over 1 gives GPD excesses with xi = sigma = 2/3
  auto x = pareto_sample(50000, 1.5, 9);
  for (double& v : x) v -= 1.0;
  std::erase_if(x, [](double v) { return !(v > 0.0); });
  const GpdFit f = fit_gpd_mle(x);
  EXPECT_TRUE(f.converged);
  EXPECT_NEAR(f.xi, 2.0 / 3.0, 0.03);
  EXPECT_NEAR(f.sigma, 2.0 / 3.0, 0.03);
}

TEST(GpdFit, StationaryAndPositiveDefinite) {
  const auto y = exp_sample(2000, 13);
  const GpdFit f = fit_gpd_mle(y);
  const auto g = gpd_gradient(y, f.xi, f.sigma);
  EXPECT_LT(std::abs(g(0)) / y.size(), 1e-6);
  EXPECT_LT(std::abs(g(1)) * f.sigma / y.size(), 1e-6);
  EXPECT_NEAR(f.covariance(0, 1), f.covariance(1, 0), 1e-12);
  EXPECT_GT(f.covariance(0, 0), 0.0);
  EXPECT_GT(f.covariance.determinant(), 0.0);
  // local maximum against nearby points
  for (double dx : {-1e-3, 1e-3})
    for (double ds : {-1e-3, 1e-3}) EXPECT_LE(gpd_log_likelihood(y, f.xi + dx, f.sigma + ds), f.log_likelihood);
}

TEST(GpdFit, ScaleEquivariant) {
  auto y = pareto_sample(3000, 2.0, 17);
  for (double& v : y) v -= 1.0;
  std::erase_if(y, [](double v) { return !(v > 0.0); });
  auto z = y;
  for (double& v : z) v *= 7.5;
  const GpdFit a = fit_gpd_mle(y), b = fit_gpd_mle(z);
  EXPECT_NEAR(a.xi, b.xi, 1e-6);
  EXPECT_NEAR(7.5 * a.sigma, b.sigma, 1e-5 * b.sigma);
}

TEST(GpdFit, RejectsBadInput) {
  EXPECT_THROW(fit_gpd_mle(std::vector<double>(10, 1.0)), std::invalid_argument);
  std::vector<double> y(40, 1.0);
  y[3] = -1.0;
  EXPECT_THROW(fit_gpd_mle(y), std::invalid_argument);
}

TEST(GpdSurvival, ValuesAndGradient) {
  EXPECT_EQ(gpd_survival(0.0, 0.3, 1.0).value, 1.0);
  EXPECT_EQ(gpd_survival(std::numeric_limits<double>::infinity(), 0.3, 1.0).value, 0.0);
  EXPECT_NEAR(gpd_survival(2.0, 0.0, 1.0).value, std::exp(-2.0), 1e-14);
  EXPECT_NEAR(gpd_survival(2.0, 1.0, 1.0).value, 1.0 / 3.0, 1e-14);
  EXPECT_EQ(gpd_survival(3.0, -0.5, 1.0).value, 0.0);
  const double y = 1.7, xi = 0.25, s = 0.8, h = 1e-6;
  const auto g = gpd_survival(y, xi, s).grad;
  EXPECT_NEAR(g(0), (gpd_survival(y, xi + h, s).value - gpd_survival(y, xi - h, s).value) / (2 * h), 1e-7);
  EXPECT_NEAR(g(1), (gpd_survival(y, xi, s + h).value - gpd_survival(y, xi, s - h).value) / (2 * h), 1e-7);
}

TEST(PotBound, DegenerateIntervalHasZeroMass) {
  const TailSample s(exp_sample(2000, 21));
  const auto b = pot_upper_bound(s, 1.0, 3.0, 3.0, 0.05);
  EXPECT_NEAR(b.point, 0.0, 1e-15);
  EXPECT_NEAR(b.upper, 0.0, 1e-12);
}

TEST(PotBound, UpperSitsAbovePoint) {
  const TailSample s(exp_sample(5000, 23));
  const auto mid = pot_upper_bound(s, 1.0, 4.0, 1e9, 0.5);
  EXPECT_NEAR(mid.upper, mid.point, 1e-15);
  for (double alpha : {0.2, 0.05, 0.01}) {
    const auto b = pot_upper_bound(s, 1.0, 4.0, 1e9, alpha);
    EXPECT_GE(b.upper, b.point);
    EXPECT_GT(b.se, 0.0);
    EXPECT_LE(b.upper, 1.0);
  }
  // exponential truth: P(X >= 4)
  EXPECT_NEAR(mid.point, std::exp(-4.0), 0.3 * std::exp(-4.0));
}

TEST(PotBound, ArgumentChecks) {
  const TailSample s(exp_sample(500, 1));
  EXPECT_THROW(pot_upper_bound(s, 1.0, 0.5, 2.0, 0.05), std::invalid_argument);
  EXPECT_THROW(pot_upper_bound(s, 1.0, 2.0, 1.5, 0.05), std::invalid_argument);
  EXPECT_THROW(pot_upper_bound(s, 1.0, 2.0, 3.0, 1.0), std::invalid_argument);
}

TEST(MeanExcess, PointwiseValues) {
  const TailSample s(std::vector<double>{1.0, 2.0});
  EXPECT_NEAR(mean_excess(s, 1.0), 1.0, 1e-15);
  EXPECT_NEAR(mean_excess(s, 0.0), 1.5, 1e-15);
  EXPECT_TRUE(std::isnan(mean_excess(s, 2.0)));
}

TEST(MeanExcess, ExponentialIsFlat) {
  const TailSample s(exp_sample(100000, 31));
  for (double u : {0.5, 1.0, 2.0, 3.0}) EXPECT_NEAR(mean_excess(s, u), 1.0, 0.05) << u;
}

TEST(MeanExcess, ParetoIsLinear) {
  // Pareto(1.5): e(u) = u / (alpha - 1) = 2u
  const TailSample s(pareto_sample(200000, 1.5, 37));
  const double slope = (mean_excess(s, 4.0) - mean_excess(s, 2.0)) / 2.0;
  EXPECT_NEAR(slope, 2.0, 0.3);
}

TEST(MeanExcess, CurveSuggestsThresholdBelowCap) {
  const TailSample s(exp_sample(3000, 41));
  const auto c = mean_excess_curve(s, 30, 2.0);
  ASSERT_FALSE(c.points.empty());
  EXPECT_LE(c.suggested_threshold, 2.0);
  for (std::size_t i = 1; i < c.points.size(); ++i) {
    EXPECT_GE(c.points[i].u, c.points[i - 1].u);
    EXPECT_GE(c.points[i].exceedances, 10u);
  }
  EXPECT_THROW(mean_excess_curve(TailSample(exp_sample(40, 1))), std::invalid_argument);
}
