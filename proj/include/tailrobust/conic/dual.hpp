#pragma once

// Semi-infinite dual of a moment problem:
//   min  mass*kappa + sum over set blocks of the block support function
//   s.t. -H(x) + kappa + w(z)'G(x) >= 0 for all x >= a,
// where the multipliers w are linear in the decision vector z. Rectangle
// coordinates contribute lambda1 - lambda2 (or one free multiplier when lo == hi);
// an ellipsoid contributes r^{-1/2} Sigma^{-1/2} u with ||u|| <= lambda.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "../model.hpp"
#include "../transform.hpp"
#include "ipm.hpp"

namespace tailrobust::conic {

/// Polynomial piece of the semi-infinite constraint in the scaled local variable
/// u = (x - left) / scale, on [0, width / scale] (width may be +inf):
///   p(u; z) = base(u) + sum_j coef(l, j) z_j u^l.
struct DualPiece {
  double left = 0.0;
  double width = kInf;
  double scale = 1.0;
  int degree = 0;
  Poly base;
  Eigen::MatrixXd coef;

  double u_max() const { return std::isfinite(width) ? width / scale : kInf; }

  Poly at(const Eigen::VectorXd& z) const {
    Poly p(static_cast<std::size_t>(degree) + 1, 0.0);
    const Eigen::VectorXd lin = coef * z;
    for (int l = 0; l <= degree; ++l) p[l] = base[l] + lin(l);
    return p;
  }
};

struct DualProgram {
  /// Layout of z: free | nonnegative | second-order cone blocks.
  ConeDims dims;
  Eigen::VectorXd c;
  std::vector<DualPiece> pieces;
  /// w = wmap z gives the multiplier of each constraint function G_k.
  Eigen::MatrixXd wmap;
  int kappa = -1;
  double mass = 1.0;
  double a = 0.0;

  // positions of named multipliers (-1 when absent)
  int lambda = -1;
  std::vector<int> u;
  std::vector<int> lambda1, lambda2, equality;
  int delta1 = -1, delta2 = -1;
  std::string kind;

  int size() const { return static_cast<int>(c.size()); }

  double objective(const Eigen::VectorXd& z) const { return c.dot(z); }
};

namespace detail {

inline Eigen::MatrixXd inv_sqrt_spd(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  return es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

}  // namespace detail

inline DualProgram dualize(const MomentProblem& mp) {
  mp.validate();
  const int nG = static_cast<int>(mp.G.size());

  // variable roles gathered first, positions assigned once the cone layout is known
  enum class Kind { free, nonneg };
  struct Var {
    Kind kind;
    double cost;
    Eigen::VectorXd w;  // contribution to the multipliers
    bool is_kappa = false;
    std::string role;
    int coord = -1;
  };
  std::vector<Var> scalars;
  struct SocBlock {
    double lambda_cost;
    Eigen::VectorXd u_cost;
    Eigen::MatrixXd w;  // nG x d
  };
  std::vector<SocBlock> socs;

  scalars.push_back({mp.null_atom ? Kind::nonneg : Kind::free, mp.mass, Eigen::VectorXd::Zero(nG), true, "kappa"});

  const bool convex_shape = mp.order == 2;
  int row = 0;
  for (std::size_t b = 0; b < mp.blocks.size(); ++b) {
    const auto& blk = mp.blocks[b];
    const bool eta_block = convex_shape && b == 0;
    if (const auto* rc = std::get_if<Rectangle>(&blk)) {
      for (Eigen::Index k = 0; k < rc->lo.size(); ++k, ++row) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(nG);
        e(row) = 1.0;
        if (rc->lo(k) == rc->hi(k)) {
          scalars.push_back({Kind::free, rc->lo(k), e, false, eta_block ? "delta" : "equality", row});
        } else {
          scalars.push_back({Kind::nonneg, rc->hi(k), e, false, eta_block ? "delta1" : "lambda1", row});
          scalars.push_back({Kind::nonneg, -rc->lo(k), -e, false, eta_block ? "delta2" : "lambda2", row});
        }
      }
    } else {
      const auto& el = std::get<Ellipsoid>(blk);
      const int d = static_cast<int>(el.mu.size());
      const Eigen::MatrixXd T = detail::inv_sqrt_spd(el.sigma) / std::sqrt(el.r);
      SocBlock sb;
      sb.lambda_cost = 1.0;
      sb.u_cost = T * el.mu;
      sb.w = Eigen::MatrixXd::Zero(nG, d);
      sb.w.middleRows(row, d) = T;
      socs.push_back(sb);
      row += d;
    }
  }

  DualProgram dp;
  dp.mass = mp.mass;
  dp.a = mp.a;
  int nfree = 0, nnon = 0;
  for (const auto& v : scalars) (v.kind == Kind::free ? nfree : nnon)++;
  dp.dims.free = nfree;
  dp.dims.orthant = nnon;
  int nz = nfree + nnon;
  for (const auto& s : socs) {
    dp.dims.soc.push_back(static_cast<int>(s.u_cost.size()) + 1);
    nz += static_cast<int>(s.u_cost.size()) + 1;
  }
  dp.c = Eigen::VectorXd::Zero(nz);
  dp.wmap = Eigen::MatrixXd::Zero(nG, nz);
  dp.lambda1.assign(nG, -1);
  dp.lambda2.assign(nG, -1);
  dp.equality.assign(nG, -1);
  int fpos = 0, npos = nfree;
  for (const auto& v : scalars) {
    const int pos = v.kind == Kind::free ? fpos++ : npos++;
    dp.c(pos) = v.cost;
    dp.wmap.col(pos) = v.w;
    if (v.is_kappa) dp.kappa = pos;
    if (v.role == "lambda1") dp.lambda1[v.coord] = pos;
    if (v.role == "lambda2") dp.lambda2[v.coord] = pos;
    if (v.role == "equality" || v.role == "delta") dp.equality[v.coord] = pos;
    if (v.role == "delta1") dp.delta1 = pos;
    if (v.role == "delta2") dp.delta2 = pos;
  }
  int spos = nfree + nnon;
  for (const auto& s : socs) {
    const int d = static_cast<int>(s.u_cost.size());
    dp.c(spos) = s.lambda_cost;
    dp.c.segment(spos + 1, d) = s.u_cost;
    dp.wmap.block(0, spos + 1, nG, d) = s.w;
    if (dp.lambda < 0) {
      dp.lambda = spos;
      for (int k = 0; k < d; ++k) dp.u.push_back(spos + 1 + k);
    }
    spos += d + 1;
  }

  std::string shape = mp.order == 0 ? "none" : mp.order == 1 ? "monotone" : "convex";
  const auto& main_set = mp.blocks.back();
  dp.kind = shape + (std::holds_alternative<Ellipsoid>(main_set) ? "/ellipsoid" : "/rectangle");

  // common breakpoints
  std::vector<double> br{mp.a};
  auto add = [&](const PiecewisePoly& f) {
    for (double x : f.breaks())
      if (x >= mp.a) br.push_back(x);
  };
  add(mp.H);
  for (const auto& g : mp.G) add(g);
  std::sort(br.begin(), br.end());
  br.erase(std::unique(br.begin(), br.end()), br.end());
  const PiecewisePoly H = mp.H.refined(br);
  std::vector<PiecewisePoly> G;
  for (const auto& g : mp.G) G.push_back(g.refined(br));
  const std::size_t off = H.breaks().size() - br.size();  // pieces below a carry nothing

  double tail_scale = br.back() - mp.a;
  if (mp.length_scale > 0.0) tail_scale = std::max(tail_scale, mp.length_scale);
  if (!(tail_scale > 0.0)) tail_scale = 1.0;

  for (std::size_t i = 0; i < br.size(); ++i) {
    DualPiece pc;
    pc.left = br[i];
    pc.width = i + 1 < br.size() ? br[i + 1] - br[i] : kInf;
    pc.scale = std::isfinite(pc.width) ? pc.width : tail_scale;
    const Poly h = poly_scale_arg(H.pieces()[i + off], pc.scale);
    std::vector<Poly> gs;
    int deg = poly_degree(h);
    for (const auto& g : G) {
      gs.push_back(poly_scale_arg(g.pieces()[i + off], pc.scale));
      deg = std::max(deg, poly_degree(gs.back()));
    }
    pc.degree = deg;
    pc.base.assign(deg + 1, 0.0);
    for (int l = 0; l <= deg && l < static_cast<int>(h.size()); ++l) pc.base[l] = -h[l];
    pc.coef = Eigen::MatrixXd::Zero(deg + 1, nz);
    pc.coef(0, dp.kappa) = 1.0;
    for (int k = 0; k < nG; ++k)
      for (int l = 0; l <= deg && l < static_cast<int>(gs[k].size()); ++l)
        if (gs[k][l] != 0.0) pc.coef.row(l) += gs[k][l] * dp.wmap.row(k);
    dp.pieces.push_back(std::move(pc));
  }
  return dp;
}

/// Value of the constraint function at x using the piece that contains x
/// (left limits are handled by the caller through the piece index).
inline double dual_constraint_value(const DualProgram& dp, const Eigen::VectorXd& z, std::size_t piece, double x) {
  const auto& pc = dp.pieces[piece];
  return poly_eval(pc.at(z), (x - pc.left) / pc.scale);
}

/// Named multipliers from a decision vector.
inline DualRecord dual_record(const DualProgram& dp, const Eigen::VectorXd& z) {
  DualRecord r;
  r.kappa = z(dp.kappa);
  if (dp.lambda >= 0) {
    r.lambda = z(dp.lambda);
    r.u.resize(static_cast<Eigen::Index>(dp.u.size()));
    for (std::size_t k = 0; k < dp.u.size(); ++k) r.u(k) = z(dp.u[k]);
  }
  std::vector<double> l1, l2;
  for (std::size_t k = 0; k < dp.lambda1.size(); ++k) {
    if (dp.lambda1[k] >= 0) l1.push_back(z(dp.lambda1[k]));
    if (dp.lambda2[k] >= 0) l2.push_back(z(dp.lambda2[k]));
  }
  r.lambda1 = Eigen::Map<Eigen::VectorXd>(l1.data(), static_cast<Eigen::Index>(l1.size()));
  r.lambda2 = Eigen::Map<Eigen::VectorXd>(l2.data(), static_cast<Eigen::Index>(l2.size()));
  if (dp.delta1 >= 0) r.delta1 = z(dp.delta1);
  if (dp.delta2 >= 0) r.delta2 = z(dp.delta2);
  return r;
}

}  // namespace tailrobust::conic
