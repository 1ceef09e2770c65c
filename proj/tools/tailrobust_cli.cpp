// Command-line front end: bounds, calibration, conservativeness tables, POT
// baseline, synthetic experiments and sensitivity.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include <tailrobust/io.hpp>
#include <tailrobust/plot.hpp>
#include <tailrobust/tailrobust.hpp>

using namespace tailrobust;

namespace {

struct Common {
  std::string data;
  std::string config;
  std::uint64_t seed = 1;
  std::string out;
  std::string format = "json";
  std::string plot;
};

void add_common(CLI::App* sc, Common& c, bool needs_data) {
  auto* d = sc->add_option("--data", c.data, "single-column CSV sample");
  if (needs_data) d->required()->check(CLI::ExistingFile);
  sc->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  sc->add_option("--seed", c.seed, "random seed");
  sc->add_option("--out", c.out, "output path (default stdout)");
  sc->add_option("--format", c.format, "output format")->check(CLI::IsMember({"json", "csv"}));
  sc->add_option("--plot", c.plot, "write an SVG plot to this path");
}

json load_config(const Common& c) {
  if (c.config.empty()) return json::object();
  std::ifstream in(c.config);
  return json::parse(in);
}

void emit(const Common& c, const std::string& text) {
  if (c.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(c.out);
  if (!f) throw std::runtime_error("cannot open " + c.out);
  f << text;
}

void emit_plot(const Common& c, const PlotSpec& spec, const std::vector<PlotSeries>& series) {
  if (c.plot.empty()) return;
  std::ofstream f(c.plot);
  if (!f) throw std::runtime_error("cannot open " + c.plot);
  write_svg(f, spec, series);
}

/// Key/value pairs as a one-row CSV.
std::string flat_csv(const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string h, v;
  for (std::size_t i = 0; i < kv.size(); ++i) {
    h += (i ? "," : "") + kv[i].first;
    v += (i ? "," : "") + kv[i].second;
  }
  return h + "\n" + v + "\n";
}

struct BoundArgs {
  std::vector<double> thresholds{0.7};
  bool absolute = false;
  int D = 2;
  std::string set = "chi2";
  double alpha = 0.05;
  int B = 500;
  std::string backend = "auto";
  std::string generators = "mass_and_mean";
};

void add_bound_args(CLI::App* sc, BoundArgs& b) {
  sc->add_option("--threshold", b.thresholds, "threshold(s): sample quantile levels, or values with --absolute");
  sc->add_flag("--absolute", b.absolute, "thresholds are absolute values");
  sc->add_option("-D,--shape", b.D, "shape class: 0 none, 1 monotone, 2 convex")->check(CLI::Range(0, 2));
  sc->add_option("--set", b.set, "moment set")->check(CLI::IsMember({"chi2", "KS"}));
  sc->add_option("--alpha", b.alpha, "1 - confidence level");
  sc->add_option("--bootstrap", b.B, "bootstrap resamples");
  sc->add_option("--backend", b.backend, "solver")->check(CLI::IsMember({"auto", "ipm", "cutting-plane"}));
  sc->add_option("--generators", b.generators, "chi2 generators")
      ->check(CLI::IsMember({"mass_and_mean", "tail_indicators"}));
}

void apply_bound_config(const json& j, BoundArgs& b, Common& c) {
  if (j.contains("thresholds")) b.thresholds = j["thresholds"].get<std::vector<double>>();
  b.absolute = j.value("absolute", b.absolute);
  b.D = j.value("D", b.D);
  b.set = j.value("set", b.set);
  b.alpha = j.value("alpha", b.alpha);
  b.B = j.value("bootstrap_B", b.B);
  b.backend = j.value("backend", b.backend);
  b.generators = j.value("chi_generators", b.generators);
  c.seed = j.value("seed", c.seed);
}

struct Prepared {
  std::shared_ptr<const TailSample> sample;
  ThresholdSpec thr;
  CalibratedProblems cp;
  SolveOptions opt;
};

Prepared prepare(const Common& c, const BoundArgs& b, const Objective& obj) {
  Prepared p;
  p.sample = std::make_shared<const TailSample>(read_sample_csv(c.data));
  p.thr = b.absolute ? ThresholdSpec::absolute(b.thresholds) : ThresholdSpec::quantile(b.thresholds);
  p.thr.validate();
  CalibrationConfig cc;
  cc.alpha = b.alpha;
  cc.bootstrap_B = b.B;
  cc.seed = c.seed;
  cc.validate();
  const ChiGenerators fam =
      b.generators == "tail_indicators" ? ChiGenerators::tail_indicators : ChiGenerators::mass_and_mean;
  p.cp = calibrate_problems(p.sample, p.thr, b.D, b.set == "chi2" ? SetKind::ellipsoid : SetKind::rectangle, obj, cc,
                            fam);
  p.opt.backend = backend_from_string(b.backend);
  return p;
}

/// Per-threshold bounds (each alone) plus the combined minimum.
std::string run_bound(const Common& c, const Prepared& p, const std::string& xlabel) {
  const BoundResult best = multi_threshold_bound(p.cp.problems, p.opt, p.cp.nontail_cdfs);
  std::vector<double> as, vals;
  json per = json::array();
  for (std::size_t i = 0; i < p.cp.problems.size(); ++i) {
    const BoundResult r = multi_threshold_bound({p.cp.problems[i]}, p.opt, {p.cp.nontail_cdfs[i]});
    as.push_back(p.cp.problems[i].a);
    vals.push_back(r.value);
    per.push_back(json{{"a", p.cp.problems[i].a}, {"value", detail::number(r.value)}, {"status", to_string(r.status)}});
  }
  emit_plot(c, PlotSpec{"worst-case bound vs threshold", "threshold a", xlabel, false},
            {PlotSeries{"bound", as, vals}});
  if (c.format == "csv") {
    std::ostringstream os;
    os << "a,value,status\n";
    for (std::size_t i = 0; i < as.size(); ++i)
      os << detail::csv_number(as[i]) << ',' << detail::csv_number(vals[i]) << ',' << per[i]["status"].get<std::string>()
         << '\n';
    os << "combined," << detail::csv_number(best.value) << ',' << to_string(best.status) << '\n';
    return os.str();
  }
  json j = to_json(best);
  j["per_threshold"] = per;
  return j.dump(2) + "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Worst-case tail bounds under shape and moment constraints"};
  app.require_subcommand(1);

  Common c_prob, c_quant, c_cal, c_cons, c_pot, c_exp, c_sens;
  BoundArgs b_prob, b_quant, b_cal, b_sens;

  // bound-prob
  double L = 0.0, R = kInf;
  auto* sp = app.add_subcommand("bound-prob", "upper bound on P(L <= X <= R)");
  add_common(sp, c_prob, true);
  add_bound_args(sp, b_prob);
  sp->add_option("--L", L, "interval left end")->required();
  sp->add_option("--R", R, "interval right end (default inf)");

  // bound-quantile
  double p_level = 0.99;
  auto* sq = app.add_subcommand("bound-quantile", "upper bound on the p-quantile");
  add_common(sq, c_quant, true);
  add_bound_args(sq, b_quant);
  sq->add_option("-p,--p", p_level, "quantile level")->check(CLI::Range(0.0, 1.0));

  // calibrate
  auto* sc = app.add_subcommand("calibrate", "calibrated shape and moment constraints");
  add_common(sc, c_cal, true);
  add_bound_args(sc, b_cal);

  // conserv
  double xi = 1.0, x_lo = 0.0, x_hi = 3.0;
  int steps = 31;
  std::string mode = "prob", dist;
  double k_mult = 2.0, pareto_alpha = 1.0;
  auto* sv = app.add_subcommand("conserv", "conservativeness ratio tables");
  add_common(sv, c_cons, false);
  sv->add_option("--xi", xi, "tail index (>= 0)");
  sv->add_option("--mode", mode, "limit table kind")->check(CLI::IsMember({"prob", "quantile"}));
  sv->add_option("--x-min", x_lo, "grid start");
  sv->add_option("--x-max", x_hi, "grid end");
  sv->add_option("--steps", steps, "grid points")->check(CLI::PositiveNumber);
  sv->add_option("--dist", dist, "finite-threshold table over a instead")->check(CLI::IsMember({"pareto", "normal"}));
  sv->add_option("--pareto-alpha", pareto_alpha, "Pareto shape for --dist pareto");
  sv->add_option("--k", k_mult, "b = k a for --dist tables");

  // pot
  double pot_L = 0.0, pot_R = kInf, pot_alpha = 0.05;
  std::optional<double> pot_u;
  auto* so = app.add_subcommand("pot", "peaks-over-threshold baseline bound");
  add_common(so, c_pot, true);
  so->add_option("--L", pot_L, "interval left end")->required();
  so->add_option("--R", pot_R, "interval right end (default inf)");
  so->add_option("--u", pot_u, "POT threshold (default: mean-excess rule)");
  so->add_option("--alpha", pot_alpha, "1 - confidence level");

  // experiment
  std::string records;
  auto* se = app.add_subcommand("experiment", "coverage experiment on a known distribution");
  add_common(se, c_exp, false);
  se->add_option("--records", records, "also write per-repetition records (JSON)");
  int reps_override = 0;
  se->add_option("--reps", reps_override, "override repetitions");

  // sensitivity
  std::vector<double> direction;
  double sens_L = 0.0, sens_R = kInf;
  auto* ss = app.add_subcommand("sensitivity", "directional derivative of the bound in the moment vector");
  add_common(ss, c_sens, true);
  add_bound_args(ss, b_sens);
  ss->add_option("--L", sens_L, "interval left end")->required();
  ss->add_option("--R", sens_R, "interval right end (default inf)");
  ss->add_option("--direction", direction, "direction over the moment vector (normalization first); default: the vector itself");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sp) {
      apply_bound_config(load_config(c_prob), b_prob, c_prob);
      const Prepared p = prepare(c_prob, b_prob, TailInterval{L, R});
      emit(c_prob, run_bound(c_prob, p, "bound on P(L <= X <= R)"));
    } else if (*sq) {
      apply_bound_config(load_config(c_quant), b_quant, c_quant);
      const Prepared p = prepare(c_quant, b_quant, QuantileObjective{p_level});
      emit(c_quant, run_bound(c_quant, p, "bound on quantile"));
    } else if (*sc) {
      apply_bound_config(load_config(c_cal), b_cal, c_cal);
      const Prepared p = prepare(c_cal, b_cal, TailInterval{kInf, kInf});
      json out = json::array();
      for (const auto& pr : p.cp.problems)
        out.push_back(json{{"a", pr.a}, {"shape", to_json(pr.shape)}, {"moments", to_json(pr.moments)}});
      if (c_cal.format == "csv") {
        std::ostringstream os;
        os << "a,D,eta,eta_lo,eta_hi,nu,set_dim\n";
        for (const auto& pr : p.cp.problems)
          os << detail::csv_number(pr.a) << ',' << pr.shape.order << ',' << detail::csv_number(pr.shape.eta) << ','
             << detail::csv_number(pr.shape.eta_lo) << ',' << detail::csv_number(pr.shape.eta_hi) << ','
             << detail::csv_number(pr.shape.nu) << ',' << pr.moments.generators.size() << '\n';
        emit(c_cal, os.str());
      } else {
        emit(c_cal, json{{"calibration", to_json(CalibrationConfig{b_cal.alpha, b_cal.B, std::nullopt, c_cal.seed})},
                         {"thresholds", out}}
                        .dump(2) +
                        "\n");
      }
    } else if (*sv) {
      std::vector<double> xs, rs;
      std::string xname = "x";
      if (!dist.empty()) {
        // geometric grid of thresholds a from 10^x_lo to 10^x_hi
        xname = "a";
        const AnalyticTail t = dist == "pareto" ? AnalyticTail::pareto(pareto_alpha) : AnalyticTail::normal();
        for (int i = 0; i < steps; ++i) {
          const double e = steps == 1 ? x_lo : x_lo + (x_hi - x_lo) * i / (steps - 1);
          const double a = dist == "pareto" ? std::pow(10.0, e) : e;
          try {
            const double r = finite_a_ratio_prob(t, a, k_mult * a).ratio;
            xs.push_back(a);
            rs.push_back(r);
          } catch (const std::exception&) {
            // premise fails or the true tail underflows at this a
          }
        }
      } else {
        for (int i = 0; i < steps; ++i) {
          const double x = steps == 1 ? x_lo : x_lo + (x_hi - x_lo) * i / (steps - 1);
          try {
            const double r = mode == "prob" ? limit_ratio_prob(xi, x) : limit_ratio_quantile(xi, x);
            xs.push_back(x);
            rs.push_back(r);
          } catch (const std::invalid_argument&) {
            // outside the feasible x range for this regime
          }
        }
      }
      emit_plot(c_cons, PlotSpec{"conservativeness ratio", xname, "ratio", !dist.empty()}, {PlotSeries{"ratio", xs, rs}});
      std::ostringstream os;
      if (c_cons.format == "json") {
        json j = json::array();
        for (std::size_t i = 0; i < xs.size(); ++i) j.push_back(json{{xname, xs[i]}, {"ratio", detail::number(rs[i])}});
        os << j.dump(2) << '\n';
      } else {
        os << xname << ",ratio\n";
        for (std::size_t i = 0; i < xs.size(); ++i) os << detail::csv_number(xs[i]) << ',' << detail::csv_number(rs[i]) << '\n';
      }
      emit(c_cons, os.str());
    } else if (*so) {
      const TailSample s = read_sample_csv(c_pot.data);
      const MeanExcessCurve me = mean_excess_curve(s, 30, pot_L);
      const double u = pot_u.value_or(me.suggested_threshold);
      const PotBound pb = pot_upper_bound(s, u, pot_L, pot_R, pot_alpha);
      std::vector<double> us, es;
      for (const auto& pt : me.points) {
        us.push_back(pt.u);
        es.push_back(pt.e);
      }
      emit_plot(c_pot, PlotSpec{"mean excess", "u", "e(u)", false}, {PlotSeries{"e(u)", us, es}});
      if (c_pot.format == "csv") {
        emit(c_pot, flat_csv({{"u", detail::csv_number(u)},
                              {"xi_hat", detail::csv_number(pb.fit.xi)},
                              {"sigma_hat", detail::csv_number(pb.fit.sigma)},
                              {"n_exceed", std::to_string(pb.fit.n_exceed)},
                              {"point", detail::csv_number(pb.point)},
                              {"se", detail::csv_number(pb.se)},
                              {"upper", detail::csv_number(pb.upper)}}));
      } else {
        json j = to_json(pb);
        j["threshold"] = u;
        j["threshold_rule"] = pot_u ? "user" : (me.rule_met ? "mean-excess R^2 >= 0.98" : "mean-excess max R^2");
        j["mean_excess"] = to_json(me);
        emit(c_pot, j.dump(2) + "\n");
      }
    } else if (*se) {
      ExperimentConfig cfg = experiment_config_from_json(load_config(c_exp));
      if (se->count("--seed")) cfg.seed = c_exp.seed;
      if (reps_override > 0) cfg.reps = reps_override;
      const ExperimentResult res = run_experiment(cfg);
      if (!records.empty()) {
        std::ofstream f(records);
        f << to_json(res).at("records").dump(1) << '\n';
      }
      std::vector<PlotSeries> bars;
      for (const auto& r : res.rows) bars.push_back(PlotSeries{r.setting, {0.0, 1.0}, {r.coverage, r.coverage}});
      emit_plot(c_exp, PlotSpec{"coverage by setting", "", "coverage", false}, bars);
      if (c_exp.format == "csv") {
        std::ostringstream os;
        write_rows_csv(os, res.rows);
        emit(c_exp, os.str());
      } else {
        json rows = json::array();
        for (const auto& r : res.rows) rows.push_back(to_json(r));
        emit(c_exp, json{{"config", to_json(cfg)}, {"rows", rows}}.dump(2) + "\n");
      }
    } else if (*ss) {
      apply_bound_config(load_config(c_sens), b_sens, c_sens);
      if (b_sens.thresholds.size() != 1) throw std::invalid_argument("sensitivity: exactly one threshold");
      const TailSample s = read_sample_csv(c_sens.data);
      const ThresholdSpec thr = b_sens.absolute ? ThresholdSpec::absolute(b_sens.thresholds)
                                                : ThresholdSpec::quantile(b_sens.thresholds);
      const double a = thr.resolve(s).front();
      // point estimates throughout so every moment set is a singleton
      ShapeSpec shape = ShapeSpec::none();
      if (b_sens.D == 1) shape = ShapeSpec::monotone(kde_density(s, a));
      if (b_sens.D == 2) {
        const double eta = kde_density(s, a);
        shape = ShapeSpec::convex(eta, eta, std::max(0.0, -kde_density_derivative(s, a)));
      }
      MomentSpec ms;
      ms.generators = chi_generators(s, a, ChiGenerators::mass_and_mean);
      Eigen::VectorXd pt = Eigen::VectorXd::Zero(2);
      for (double v : s.values())
        if (v >= a) pt += Eigen::Vector2d(1.0, v - a);
      pt /= static_cast<double>(s.n());
      ms.set = Rectangle{pt, pt};
      const MomentProblem mp = to_moment_problem(a, shape, ms, PiecewisePoly::indicator(a, sens_L, sens_R));
      // default direction: the moment vector itself (mass first)
      std::vector<double> base{mp.mass};
      for (const auto& blk : mp.blocks)
        for (double v : std::get<Rectangle>(blk).lo) base.push_back(v);
      if (direction.empty()) direction = base;
      if (direction.size() != base.size())
        throw std::invalid_argument("sensitivity: direction needs " + std::to_string(base.size()) + " entries");
      const Eigen::VectorXd dr = Eigen::Map<const Eigen::VectorXd>(direction.data(), static_cast<Eigen::Index>(direction.size()));
      const SensitivityResult sr = sensitivity(mp, dr);
      if (c_sens.format == "csv") {
        emit(c_sens, flat_csv({{"a", detail::csv_number(a)},
                               {"status", to_string(sr.status)},
                               {"value", detail::csv_number(sr.value)},
                               {"derivative", detail::csv_number(sr.derivative)}}));
      } else {
        emit(c_sens, json{{"a", a},
                          {"moment_vector", base},
                          {"shape", to_json(shape)},
                          {"direction", direction},
                          {"status", to_string(sr.status)},
                          {"value", detail::number(sr.value)},
                          {"derivative", detail::number(sr.derivative)}}
                             .dump(2) +
                         "\n");
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
