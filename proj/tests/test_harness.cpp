#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <tailrobust/harness.hpp>
#include <tailrobust/io.hpp>

using namespace tailrobust;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.distribution = DistributionSpec::gamma(0.5, 1.0);
  c.n = 200;
  c.reps = 6;
  c.objective = ObjectiveSpec::interval(0.99, 0.995);
  c.settings = {Setting::dro(2, SetKind::ellipsoid), Setting::dro(1, SetKind::rectangle), Setting::pot()};
  c.bootstrap_B = 100;
  c.seed = 99;
  c.threads = 3;
  return c;
}

}  // namespace

TEST(TrueQuantity, KnownQuantiles) {
  EXPECT_NEAR(true_quantity(DistributionSpec::pareto(1.5, 1.0), ObjectiveSpec::quantile(0.99)), std::pow(100.0, 2.0 / 3.0), 1e-10);
  EXPECT_NEAR(std::pow(100.0, 2.0 / 3.0), 21.544, 5e-4);
  EXPECT_NEAR(true_quantity(DistributionSpec::lognormal(0.0, 1.0), ObjectiveSpec::quantile(0.99)), 10.24, 5e-3);
}

TEST(TrueQuantity, IntervalOfOwnQuantiles) {
  for (const auto& d : {DistributionSpec::gamma(0.5, 1.0), DistributionSpec::lognormal(0.0, 1.0), DistributionSpec::pareto(1.5, 1.0)})
    EXPECT_NEAR(true_quantity(d, ObjectiveSpec::interval(0.99, 0.995)), 0.005, 1e-10) << d.name();
}

TEST(Distributions, CdfAndQuantileInvert) {
  for (const auto& d : {DistributionSpec::gamma(0.5, 1.0), DistributionSpec::lognormal(0.3, 0.8), DistributionSpec::pareto(2.5, 3.0)})
    for (double u : {0.1, 0.5, 0.9, 0.999}) {
      const double q = d.quantile(u);
      EXPECT_NEAR(d.cdf(q), u, 1e-10) << d.name();
      EXPECT_NEAR(d.sf(q), 1.0 - u, 1e-10) << d.name();
    }
}

TEST(Distributions, PdfDerivativeMatchesFiniteDifference) {
  for (const auto& d : {DistributionSpec::gamma(0.5, 1.0), DistributionSpec::lognormal(0.3, 0.8), DistributionSpec::pareto(2.5, 3.0)})
    for (double x : {3.5, 5.0}) {
      const double h = 1e-6 * x;
      EXPECT_NEAR(d.pdf_derivative(x), (d.pdf(x + h) - d.pdf(x - h)) / (2 * h), 1e-6) << d.name();
    }
}

TEST(Sampling, ParetoInverseCdf) {
  const auto d = DistributionSpec::pareto(1.5, 1.0);
  for (double u : {0.0, 0.5, 0.99}) EXPECT_NEAR(d.quantile(u), std::pow(1.0 - u, -2.0 / 3.0), 1e-12);
  const TailSample s = sample_distribution(d, 1000, 3);
  for (double v : s.values()) EXPECT_GE(v, 1.0);
}

TEST(Sampling, DeterministicGivenSeed) {
  const auto d = DistributionSpec::lognormal(0.0, 1.0);
  const TailSample a = sample_distribution(d, 500, 17), b = sample_distribution(d, 500, 17), c = sample_distribution(d, 500, 18);
  ASSERT_EQ(a.n(), b.n());
  for (std::size_t i = 0; i < a.n(); ++i) EXPECT_EQ(a.values()[i], b.values()[i]);
  EXPECT_NE(a.values()[0], c.values()[0]);
}

TEST(Sampling, GammaMeanMatches) {
  const TailSample s = sample_distribution(DistributionSpec::gamma(0.5, 1.0), 1000000, 5);
  double m = 0.0;
  for (double v : s.values()) m += v;
  EXPECT_NEAR(m / s.n(), 0.5, 0.01);
}

TEST(Config, Validation) {
  auto c = small_config();
  c.reps = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small_config();
  c.n = 40;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small_config();
  c.objective = ObjectiveSpec::interval(0.995, 0.99);
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small_config();
  c.bootstrap_B = 50;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_THROW(DistributionSpec::gamma(-1.0, 1.0).validate(), std::invalid_argument);
}

TEST(Aggregation, HalfWidth) {
  const auto [m1, h1] = mean_halfwidth({0.3});
  EXPECT_EQ(m1, 0.3);
  EXPECT_EQ(h1, 0.0);
  const auto [m, h] = mean_halfwidth({1.0, 2.0, 3.0, 4.0});
  EXPECT_NEAR(m, 2.5, 1e-15);
  EXPECT_NEAR(h, 1.96 * std::sqrt(5.0 / 3.0) / 2.0, 1e-14);
}

TEST(Experiment, SingleRepHasZeroHalfWidths) {
  auto c = small_config();
  c.reps = 1;
  const auto res = run_experiment(c);
  ASSERT_EQ(res.rows.size(), 3u);
  for (const auto& r : res.rows) {
    if (r.reps_ok == 0) continue;
    EXPECT_EQ(r.bound_hw, 0.0);
    EXPECT_EQ(r.coverage_hw, 0.0);
  }
}

TEST(Experiment, BitIdenticalAcrossRunsAndThreadCounts) {
  auto c = small_config();
  const auto a = run_experiment(c);
  c.threads = 1;
  const auto b = run_experiment(c);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].bound_mean, b.rows[i].bound_mean);
    EXPECT_EQ(a.rows[i].bound_hw, b.rows[i].bound_hw);
    EXPECT_EQ(a.rows[i].coverage, b.rows[i].coverage);
  }
  std::ostringstream sa, sb;
  write_rows_csv(sa, a.rows);
  write_rows_csv(sb, b.rows);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(Experiment, RowsAreConsistent) {
  const auto c = small_config();
  const auto res = run_experiment(c);
  ASSERT_EQ(res.records.size(), static_cast<std::size_t>(c.reps) * c.settings.size());
  for (std::size_t k = 0; k < res.records.size(); ++k) {
    EXPECT_EQ(res.records[k].rep, static_cast<int>(k / c.settings.size()));
    EXPECT_EQ(res.records[k].setting, k % c.settings.size());
  }
  for (const auto& r : res.rows) {
    EXPECT_NEAR(r.truth, 0.005, 1e-10);
    EXPECT_GE(r.coverage, 0.0);
    EXPECT_LE(r.coverage, 1.0);
    EXPECT_EQ(r.reps_ok + r.failures, c.reps);
    EXPECT_EQ(r.failures, 0) << r.setting;
    if (std::isfinite(r.bound_mean)) EXPECT_NEAR(r.ratio_mean * r.truth, r.bound_mean, 1e-12 * std::max(1.0, r.bound_mean));
  }
  EXPECT_EQ(res.rows[0].setting, "(2,chi2)");
  EXPECT_EQ(res.rows[2].setting, "POT");
}

TEST(Experiment, QuantileObjectiveRejectedForPot) {
  auto c = small_config();
  c.reps = 1;
  c.objective = ObjectiveSpec::quantile(0.99);
  c.settings = {Setting::pot()};
  const auto res = run_experiment(c);
  EXPECT_EQ(res.rows[0].failures, 1);
  EXPECT_FALSE(res.records[0].error.empty());
  EXPECT_FALSE(res.records[0].covered);
}

TEST(Io, ExperimentConfigRoundTrip) {
  auto c = small_config();
  c.thresholds = ThresholdSpec::quantile({0.6, 0.8});
  c.chi_family = ChiGenerators::tail_indicators;
  const json j = to_json(c);
  const ExperimentConfig d = experiment_config_from_json(j);
  EXPECT_EQ(to_json(d), j);
  EXPECT_EQ(d.settings.size(), 3u);
  EXPECT_EQ(d.settings[1].set, SetKind::rectangle);
  EXPECT_EQ(d.settings[1].D, 1);
}

TEST(Io, SettingParsing) {
  EXPECT_EQ(setting_from_string("(0,KS)").D, 0);
  EXPECT_EQ(setting_from_string("( 2 , chi2 )").set, SetKind::ellipsoid);
  EXPECT_EQ(setting_from_string("pot").method, Setting::Method::pot);
  EXPECT_THROW(setting_from_string("(3,chi2)"), std::invalid_argument);
  EXPECT_THROW(distribution_from_json(json{{"family", "weibull"}}), std::invalid_argument);
  EXPECT_THROW(backend_from_string("simplex"), std::invalid_argument);
}

TEST(Io, CsvHeaderMatchesRowFields) {
  std::ostringstream os;
  write_rows_csv(os, {ExperimentRow{}});
  const std::string s = os.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), kExperimentHeader);
  const auto fields = to_json(ExperimentRow{});
  std::string header = kExperimentHeader;
  std::size_t count = 1;
  for (char ch : header) count += ch == ',';
  EXPECT_EQ(count, fields.size());
}
