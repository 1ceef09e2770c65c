#pragma once

// Exchange method for the semi-infinite dual: a finite master program over a
// working set of points, enlarged with the most violated point of every piece.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "dual.hpp"
#include "ipm.hpp"
#include "polyroots.hpp"
#include "sos.hpp"

namespace tailrobust::conic {

struct CuttingPlaneOptions {
  double tol = 1e-9;
  int max_cuts = 500;
  IpmOptions ipm;
};

namespace detail {

struct Cut {
  std::size_t piece;
  double u;
  bool leading = false;
};

inline ConeProgram build_master(const DualProgram& dp, const std::vector<Cut>& cuts) {
  const int nz = dp.size();
  const int nf = dp.dims.free, no = dp.dims.orthant;
  const int ncut = static_cast<int>(cuts.size());
  ConeProgram P;
  P.dims.free = nf;
  P.dims.orthant = no + ncut;
  P.dims.soc = dp.dims.soc;
  const int ncols = nz + ncut;
  auto col = [&](int j) { return j < nf + no ? j : j + ncut; };
  P.A = Eigen::MatrixXd::Zero(ncut, ncols);
  P.b = Eigen::VectorXd::Zero(ncut);
  P.c = Eigen::VectorXd::Zero(ncols);
  for (int j = 0; j < nz; ++j) P.c(col(j)) = dp.c(j);
  for (int r = 0; r < ncut; ++r) {
    const auto& cut = cuts[r];
    const auto& pc = dp.pieces[cut.piece];
    Eigen::VectorXd row;
    double base;
    if (cut.leading) {
      row = pc.coef.row(pc.degree).transpose();
      base = pc.base[pc.degree];
    } else {
      row = Eigen::VectorXd::Zero(nz);
      base = 0.0;
      double up = 1.0;
      for (int l = 0; l <= pc.degree; ++l, up *= cut.u) {
        row += up * pc.coef.row(l).transpose();
        base += up * pc.base[l];
      }
    }
    for (int j = 0; j < nz; ++j) P.A(r, col(j)) = row(j);
    P.A(r, nf + no + r) = -1.0;
    P.b(r) = -base;
  }
  return P;
}

inline Eigen::VectorXd master_z(const DualProgram& dp, const Eigen::VectorXd& x, int ncut) {
  const int nz = dp.size();
  const int nf = dp.dims.free, no = dp.dims.orthant;
  Eigen::VectorXd z(nz);
  for (int j = 0; j < nz; ++j) z(j) = x(j < nf + no ? j : j + ncut);
  return z;
}

}  // namespace detail

inline DualSolve cutting_plane_solve(const DualProgram& dp, const CuttingPlaneOptions& opt = {}) {
  std::vector<detail::Cut> cuts;
  for (std::size_t i = 0; i < dp.pieces.size(); ++i) {
    const auto& pc = dp.pieces[i];
    if (std::isfinite(pc.width)) {
      for (double u : {0.0, 0.25, 0.5, 0.75, 1.0}) cuts.push_back({i, u});
    } else {
      cuts.push_back({i, 0.0});
      for (double u = 0.5; u <= 1024.0; u *= 2.0) cuts.push_back({i, u});
      if (pc.degree >= 1) cuts.push_back({i, 0.0, true});
    }
  }
  const std::size_t initial = cuts.size();
  int added = 0;
  DualSolve out;
  for (int round = 0;; ++round) {
    const ConeProgram P = detail::build_master(dp, cuts);
    const ConeSolution s = solve_cone_program(P, opt.ipm);
    out.iterations += s.iterations;
    out.cuts = added;
    if (s.status != ConeStatus::optimal) {
      out.status = s.status == ConeStatus::primal_infeasible ? ConeStatus::primal_infeasible
                                                             : ConeStatus::numerical_failure;
      return out;
    }
    Eigen::VectorXd z = detail::master_z(dp, s.x, static_cast<int>(cuts.size()));
    const double obj = dp.objective(z);
    const double tol_abs = opt.tol * std::max(1.0, std::abs(obj));
    double worst = 0.0;
    std::vector<detail::Cut> fresh;
    for (std::size_t i = 0; i < dp.pieces.size(); ++i) {
      const auto& pc = dp.pieces[i];
      Poly pz = pc.at(z);
      if (!std::isfinite(pc.width) && pz.back() < 0.0) {
        if (pz.back() < -tol_abs) {
          fresh.push_back({i, 0.0, true});
          worst = kInf;
          continue;
        }
        // solver noise on the leading coefficient; a far-out witness would wreck the master's scaling
        pz.back() = 0.0;
      }
      const NonnegCheck chk = check_poly_nonneg(pz, 0.0, pc.u_max());
      if (chk.value < -tol_abs || chk.unbounded_below) {
        fresh.push_back({i, chk.x});
        worst = std::max(worst, chk.unbounded_below ? kInf : -chk.value);
      } else {
        worst = std::max(worst, -chk.value);
      }
    }
    if (fresh.empty()) {
      if (worst > 0.0) z(dp.kappa) += worst;
      out.status = ConeStatus::optimal;
      out.z = z;
      out.value = dp.objective(z);
      out.gap = s.gap;
      out.primal_residual = s.primal_residual;
      out.dual_residual = s.dual_residual;
      return out;
    }
    added += static_cast<int>(fresh.size());
    if (added > opt.max_cuts) {
      out.status = ConeStatus::max_iterations;
      return out;
    }
    cuts.insert(cuts.end(), fresh.begin(), fresh.end());
  }
}

}  // namespace tailrobust::conic
