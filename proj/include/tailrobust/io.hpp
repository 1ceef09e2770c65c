#pragma once

// JSON and CSV serialization for configs and results. Requires nlohmann/json.

#include <cstdio>
#include <ostream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "asymptotics.hpp"
#include "bound.hpp"
#include "calibration.hpp"
#include "harness.hpp"
#include "model.hpp"
#include "pot.hpp"

namespace tailrobust {

using json = nlohmann::json;

namespace detail {

inline json to_json_vector(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

inline json to_json_matrix(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

/// JSON has no infinity; non-finite numbers become strings.
inline json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace detail

// ---------------------------------------------------------------------------
// results

inline json to_json(const DualRecord& d) {
  return json{{"kappa", d.kappa},
              {"lambda", d.lambda},
              {"u", detail::to_json_vector(d.u)},
              {"lambda1", detail::to_json_vector(d.lambda1)},
              {"lambda2", detail::to_json_vector(d.lambda2)},
              {"delta1", d.delta1},
              {"delta2", d.delta2}};
}

inline json to_json(const BoundResult& r) {
  json j{{"value", detail::number(r.value)},
         {"status", to_string(r.status)},
         {"threshold_used", r.threshold_used ? json(*r.threshold_used) : json(nullptr)},
         {"dual", r.dual ? to_json(*r.dual) : json(nullptr)},
         {"gap", detail::number(r.diagnostics.gap)},
         {"runtime_ms", r.diagnostics.runtime_ms}};
  j["diagnostics"] = json{{"iterations", r.diagnostics.iterations},
                          {"cuts", r.diagnostics.cuts},
                          {"primal_residual", r.diagnostics.primal_residual},
                          {"dual_residual", r.diagnostics.dual_residual},
                          {"conservative", r.diagnostics.conservative},
                          {"backend", r.diagnostics.backend}};
  return j;
}

inline json to_json(const GpdFit& f) {
  return json{{"xi_hat", f.xi},
              {"sigma_hat", f.sigma},
              {"covariance", detail::to_json_matrix(f.covariance)},
              {"n_exceed", f.n_exceed},
              {"threshold", f.threshold},
              {"log_likelihood", f.log_likelihood},
              {"converged", f.converged},
              {"irregular", f.irregular}};
}

inline json to_json(const PotBound& b) {
  return json{{"point", b.point}, {"se", b.se}, {"upper", b.upper}, {"fit", to_json(b.fit)}};
}

inline json to_json(const ShapeSpec& s) {
  switch (s.order) {
    case 1: return json{{"D", 1}, {"eta", s.eta}};
    case 2: return json{{"D", 2}, {"eta_lo", s.eta_lo}, {"eta_hi", s.eta_hi}, {"nu", s.nu}};
    default: return json{{"D", 0}};
  }
}

inline json to_json(const PiecewisePoly& g) {
  json pieces = json::array();
  for (const auto& p : g.pieces()) pieces.push_back(p);
  json breaks = json::array();
  for (double b : g.breaks()) breaks.push_back(detail::number(b));
  return json{{"breaks", breaks}, {"local_coefficients", pieces}};
}

inline json to_json(const MomentSpec& m) {
  json j;
  j["generators"] = json::array();
  for (const auto& g : m.generators) j["generators"].push_back(to_json(g));
  std::visit([&](const auto& s) {
    if constexpr (std::is_same_v<std::decay_t<decltype(s)>, Ellipsoid>) {
      j["set"] = json{{"kind", "ellipsoid"},
                      {"mu", detail::to_json_vector(s.mu)},
                      {"sigma", detail::to_json_matrix(s.sigma)},
                      {"r", s.r}};
    } else {
      j["set"] = json{{"kind", "rectangle"}, {"lo", detail::to_json_vector(s.lo)}, {"hi", detail::to_json_vector(s.hi)}};
    }
  }, m.set);
  return j;
}

inline json to_json(const MeanExcessCurve& c) {
  json pts = json::array();
  for (const auto& p : c.points) pts.push_back(json{{"u", p.u}, {"e", p.e}, {"exceedances", p.exceedances}});
  return json{{"points", pts},
              {"suggested_threshold", c.suggested_threshold},
              {"r_squared", c.r_squared},
              {"rule_met", c.rule_met}};
}

// ---------------------------------------------------------------------------
// configs

inline json to_json(const CalibrationConfig& c) {
  return json{{"alpha", c.alpha},
              {"bootstrap_B", c.bootstrap_B},
              {"bandwidth", c.bandwidth ? json(*c.bandwidth) : json(nullptr)},
              {"seed", c.seed}};
}

inline CalibrationConfig calibration_config_from_json(const json& j) {
  CalibrationConfig c;
  c.alpha = j.value("alpha", c.alpha);
  c.bootstrap_B = j.value("bootstrap_B", c.bootstrap_B);
  if (j.contains("bandwidth") && !j["bandwidth"].is_null()) c.bandwidth = j["bandwidth"].get<double>();
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

inline const char* to_string(Backend b) {
  switch (b) {
    case Backend::interior_point: return "ipm";
    case Backend::cutting_plane: return "cutting-plane";
    case Backend::automatic: return "auto";
  }
  return "?";
}

inline Backend backend_from_string(const std::string& s) {
  if (s == "ipm") return Backend::interior_point;
  if (s == "cutting-plane") return Backend::cutting_plane;
  if (s == "auto") return Backend::automatic;
  throw std::invalid_argument("unknown backend '" + s + "' (ipm, cutting-plane, auto)");
}

inline Setting setting_from_string(const std::string& s) {
  if (s == "POT" || s == "pot") return Setting::pot();
  static const std::regex re(R"(\(\s*([012])\s*,\s*(chi2|KS)\s*\))");
  std::smatch m;
  if (!std::regex_match(s, m, re)) throw std::invalid_argument("bad setting '" + s + "' (expected e.g. (2,chi2), (1,KS), POT)");
  return Setting::dro(std::stoi(m[1].str()), m[2].str() == "chi2" ? SetKind::ellipsoid : SetKind::rectangle);
}

inline DistributionSpec distribution_from_json(const json& j) {
  const std::string fam = j.at("family").get<std::string>();
  DistributionSpec d;
  if (fam == "gamma")
    d = DistributionSpec::gamma(j.value("shape", 0.5), j.value("scale", 1.0));
  else if (fam == "lognormal")
    d = DistributionSpec::lognormal(j.value("mu", 0.0), j.value("sigma", 1.0));
  else if (fam == "pareto")
    d = DistributionSpec::pareto(j.value("shape", 1.5), j.value("scale", 1.0));
  else
    throw std::invalid_argument("unknown distribution family '" + fam + "'");
  d.validate();
  return d;
}

inline json to_json(const DistributionSpec& d) {
  switch (d.kind) {
    case DistributionSpec::Kind::gamma: return json{{"family", "gamma"}, {"shape", d.p1}, {"scale", d.p2}};
    case DistributionSpec::Kind::lognormal: return json{{"family", "lognormal"}, {"mu", d.p1}, {"sigma", d.p2}};
    case DistributionSpec::Kind::pareto: return json{{"family", "pareto"}, {"shape", d.p1}, {"scale", d.p2}};
  }
  return {};
}

inline ObjectiveSpec objective_from_json(const json& j) {
  const std::string kind = j.value("kind", std::string("interval"));
  if (kind == "interval") return ObjectiveSpec::interval(j.value("lo", 0.99), j.value("hi", 0.995));
  if (kind == "quantile") return ObjectiveSpec::quantile(j.value("p", 0.99));
  throw std::invalid_argument("unknown objective kind '" + kind + "'");
}

inline json to_json(const ObjectiveSpec& o) {
  if (o.kind == ObjectiveSpec::Kind::quantile) return json{{"kind", "quantile"}, {"p", o.p}};
  return json{{"kind", "interval"}, {"lo", o.lo}, {"hi", o.hi}};
}

inline ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig c;
  if (j.contains("distribution")) c.distribution = distribution_from_json(j["distribution"]);
  c.n = j.value("n", c.n);
  c.reps = j.value("reps", c.reps);
  if (j.contains("objective")) c.objective = objective_from_json(j["objective"]);
  if (j.contains("settings")) {
    c.settings.clear();
    for (const auto& s : j["settings"]) c.settings.push_back(setting_from_string(s.get<std::string>()));
  }
  if (j.contains("thresholds")) c.thresholds = ThresholdSpec::quantile(j["thresholds"].get<std::vector<double>>());
  c.alpha = j.value("alpha", c.alpha);
  c.seed = j.value("seed", c.seed);
  c.bootstrap_B = j.value("bootstrap_B", c.bootstrap_B);
  if (j.contains("chi_generators")) {
    const std::string f = j["chi_generators"].get<std::string>();
    if (f == "mass_and_mean")
      c.chi_family = ChiGenerators::mass_and_mean;
    else if (f == "tail_indicators")
      c.chi_family = ChiGenerators::tail_indicators;
    else
      throw std::invalid_argument("unknown chi_generators '" + f + "'");
  }
  if (j.contains("backend")) c.solve.backend = backend_from_string(j["backend"].get<std::string>());
  c.threads = j.value("threads", c.threads);
  c.validate();
  return c;
}

inline json to_json(const ExperimentConfig& c) {
  json settings = json::array();
  for (const auto& s : c.settings) settings.push_back(s.name());
  return json{{"distribution", to_json(c.distribution)},
              {"n", c.n},
              {"reps", c.reps},
              {"objective", to_json(c.objective)},
              {"settings", settings},
              {"thresholds", c.thresholds.levels},
              {"alpha", c.alpha},
              {"seed", c.seed},
              {"bootstrap_B", c.bootstrap_B},
              {"chi_generators", c.chi_family == ChiGenerators::mass_and_mean ? "mass_and_mean" : "tail_indicators"},
              {"backend", to_string(c.solve.backend)},
              {"threads", c.threads}};
}

// ---------------------------------------------------------------------------
// experiment tables

inline const char* kExperimentHeader =
    "distribution,setting,objective,truth,ratio_mean,ratio_hw,bound_mean,bound_hw,coverage,coverage_hw,"
    "reps_ok,failures,infinite,valid";

inline void write_rows_csv(std::ostream& os, const std::vector<ExperimentRow>& rows) {
  using detail::csv_number;
  os << kExperimentHeader << '\n';
  for (const auto& r : rows) {
    os << detail::csv_quote(r.distribution) << ',' << detail::csv_quote(r.setting) << ','
       << detail::csv_quote(r.objective) << ',' << csv_number(r.truth) << ',' << csv_number(r.ratio_mean) << ','
       << csv_number(r.ratio_hw) << ',' << csv_number(r.bound_mean) << ',' << csv_number(r.bound_hw) << ','
       << csv_number(r.coverage) << ',' << csv_number(r.coverage_hw) << ',' << r.reps_ok << ',' << r.failures << ','
       << r.infinite << ',' << (r.valid ? "true" : "false") << '\n';
  }
}

inline json to_json(const ExperimentRow& r) {
  return json{{"distribution", r.distribution},
              {"setting", r.setting},
              {"objective", r.objective},
              {"truth", r.truth},
              {"ratio_mean", detail::number(r.ratio_mean)},
              {"ratio_hw", detail::number(r.ratio_hw)},
              {"bound_mean", detail::number(r.bound_mean)},
              {"bound_hw", detail::number(r.bound_hw)},
              {"coverage", r.coverage},
              {"coverage_hw", r.coverage_hw},
              {"reps_ok", r.reps_ok},
              {"failures", r.failures},
              {"infinite", r.infinite},
              {"valid", r.valid}};
}

inline json to_json(const RepRecord& r) {
  return json{{"rep", r.rep},
              {"setting", r.setting},
              {"bound", detail::number(r.bound)},
              {"status", to_string(r.status)},
              {"covered", r.covered},
              {"threshold", r.threshold},
              {"conservative", r.conservative},
              {"error", r.error}};
}

inline json to_json(const ExperimentResult& res) {
  json rows = json::array(), recs = json::array();
  for (const auto& r : res.rows) rows.push_back(to_json(r));
  for (const auto& r : res.records) recs.push_back(to_json(r));
  return json{{"rows", rows}, {"records", recs}};
}

}  // namespace tailrobust
