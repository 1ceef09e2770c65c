#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "model.hpp"
#include "piecewise.hpp"

namespace tailrobust {

/// Generalized moment problem over measures Q on [a, inf):
///   max E_Q[H]  s.t.  E_Q[G] in blocks[0] x blocks[1] x ...,  Q([a,inf)) = mass
/// (or <= mass when null_atom is set, which is the untransformed case).
struct MomentProblem {
  double a = 0.0;
  PiecewisePoly H;
  std::vector<PiecewisePoly> G;
  std::vector<MomentSet> blocks;
  double scale = 1.0;
  int order = 0;
  double mass = 1.0;
  bool null_atom = false;
  /// Typical length of the support, used to condition the polynomial bases; 0 means derive from breakpoints.
  double length_scale = 0.0;

  std::size_t dimension() const { return G.size(); }

  void validate() const {
    std::size_t d = 0;
    for (const auto& b : blocks) {
      validate_set(b);
      d += static_cast<std::size_t>(set_dimension(b));
    }
    if (d != G.size()) throw std::invalid_argument("MomentProblem: set dimension differs from constraint count");
    if (!(mass >= 0.0)) throw std::invalid_argument("MomentProblem: negative mass");
    if (H.start() < a) throw std::invalid_argument("MomentProblem: objective extends below a");
    for (const auto& g : G)
      if (g.start() < a) throw std::invalid_argument("MomentProblem: constraint extends below a");
  }
};

/// Exact antiderivative of order 1 or 2 vanishing (with its derivative) at a.
inline PiecewisePoly antiderivative(const PiecewisePoly& p, double a, int order, int max_degree = kDefaultMaxDegree) {
  if (order != 1 && order != 2) throw std::invalid_argument("antiderivative: order must be 1 or 2");
  if (p.start() < a) throw std::invalid_argument("antiderivative: function not supported on [a, inf)");
  if (p.degree() + order > max_degree) throw std::domain_error("antiderivative: degree overflow");
  const double extra[] = {a};
  PiecewisePoly q = p.refined(extra);
  for (int k = 0; k < order; ++k) q = q.integral();
  return q;
}

/// Moment problem for objective h on [a, inf) under the given shape class.
inline MomentProblem to_moment_problem(double a, const ShapeSpec& shape, const MomentSpec& moments,
                                       const PiecewisePoly& h, int max_degree = kDefaultMaxDegree) {
  shape.validate();
  MomentProblem mp;
  mp.a = a;
  mp.order = shape.order;
  switch (shape.order) {
    case 0: {
      const double extra[] = {a};
      mp.H = h.refined(extra);
      for (const auto& g : moments.generators) mp.G.push_back(g.refined(extra));
      mp.blocks.push_back(moments.set);
      mp.null_atom = true;
      break;
    }
    case 1: {
      mp.scale = shape.eta;
      mp.H = shape.eta * antiderivative(h, a, 1, max_degree);
      for (const auto& g : moments.generators) mp.G.push_back(shape.eta * antiderivative(g, a, 1, max_degree));
      mp.blocks.push_back(moments.set);
      break;
    }
    case 2: {
      mp.scale = shape.nu;
      mp.H = shape.nu * antiderivative(h, a, 2, max_degree);
      mp.G.push_back(PiecewisePoly({a}, {Poly{0.0, shape.nu}}));
      for (const auto& g : moments.generators) mp.G.push_back(shape.nu * antiderivative(g, a, 2, max_degree));
      Rectangle eta_box{Eigen::VectorXd::Constant(1, shape.eta_lo), Eigen::VectorXd::Constant(1, shape.eta_hi)};
      mp.blocks.push_back(eta_box);
      mp.blocks.push_back(moments.set);
      break;
    }
    default:
      throw std::invalid_argument("to_moment_problem: unsupported shape order");
  }
  return mp;
}

inline MomentProblem to_moment_problem(const DROProblem& problem, int max_degree = kDefaultMaxDegree) {
  const auto* t = std::get_if<TailInterval>(&problem.objective);
  if (!t) throw std::invalid_argument("to_moment_problem: quantile objectives are solved by bisection");
  MomentProblem mp =
      to_moment_problem(problem.a, problem.shape, problem.moments, objective_function(problem.a, *t), max_degree);
  if (problem.sample) {
    const auto& v = problem.sample->values();
    mp.length_scale = std::max(v.back() - problem.a, 0.0);
  }
  return mp;
}

/// Finitely supported measure: atoms (x_i, w_i).
using DiscreteMeasure = std::vector<std::pair<double, double>>;

/// Density on [a, inf) associated with Q under the shape bijection.
inline PiecewisePoly recover_density(const DiscreteMeasure& Q, const ShapeSpec& shape, double a) {
  DiscreteMeasure q = Q;
  for (const auto& [x, w] : q)
    if (x < a || w < 0.0) throw std::invalid_argument("recover_density: atoms must lie in [a, inf) with w >= 0");
  std::sort(q.begin(), q.end());
  std::vector<double> br{a};
  for (const auto& [x, w] : q)
    if (x > br.back()) br.push_back(x);
  std::vector<Poly> pieces;
  if (shape.order == 1) {
    for (double b : br) {
      double cdf = 0.0;
      for (const auto& [x, w] : q)
        if (x <= b) cdf += w;
      pieces.push_back({shape.eta * (1.0 - cdf)});
    }
  } else if (shape.order == 2) {
    // f(x) = nu * sum_i w_i (x_i - x)_+ , written in the local variable t = x - b
    for (double b : br) {
      Poly c{0.0, 0.0};
      for (const auto& [x, w] : q)
        if (x > b) {
          c[0] += shape.nu * w * (x - b);
          c[1] -= shape.nu * w;
        }
      pieces.push_back(c);
    }
  } else {
    throw std::invalid_argument("recover_density: only shape orders 1 and 2 have a density bijection");
  }
  return PiecewisePoly(std::move(br), std::move(pieces));
}

}  // namespace tailrobust
