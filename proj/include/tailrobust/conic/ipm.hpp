#pragma once

// Dense primal-dual interior-point method for
//   min c'x  s.t.  A x = b,  x in R^f x R_+^l x Q^{q_1} x ... x S_+^{k_1} x ...
// using a homogeneous self-dual embedding, Nesterov-Todd scaling and a
// Mehrotra predictor-corrector. Symmetric matrix blocks are stored as svec
// (lower triangle, column by column, off-diagonals scaled by sqrt(2)).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tailrobust::conic {

struct ConeDims {
  int free = 0;
  int orthant = 0;
  std::vector<int> soc;
  std::vector<int> psd;

  int size() const {
    int n = free + orthant;
    for (int q : soc) n += q;
    for (int k : psd) n += k * (k + 1) / 2;
    return n;
  }
  /// Barrier degree of the cone (free part excluded).
  int degree() const {
    int d = orthant + static_cast<int>(soc.size());
    for (int k : psd) d += k;
    return d;
  }
};

struct ConeProgram {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
  ConeDims dims;
};

enum class ConeStatus { optimal, primal_infeasible, dual_infeasible, max_iterations, numerical_failure };

inline const char* to_string(ConeStatus s) {
  switch (s) {
    case ConeStatus::optimal: return "optimal";
    case ConeStatus::primal_infeasible: return "primal-infeasible";
    case ConeStatus::dual_infeasible: return "dual-infeasible";
    case ConeStatus::max_iterations: return "max-iterations";
    case ConeStatus::numerical_failure: return "numerical-failure";
  }
  return "?";
}

struct ConeSolution {
  ConeStatus status = ConeStatus::numerical_failure;
  Eigen::VectorXd x, y, s;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  int iterations = 0;
};

struct IpmOptions {
  double tol = 1e-12;
  /// Accepted when the iteration budget runs out or progress stalls.
  double relaxed_tol = 1e-6;
  double infeasibility_tol = 1e-8;
  int max_iterations = 200;
  double step_fraction = 0.99;
  /// Per-iteration trace on stderr.
  bool verbose = false;
};

inline int svec_size(int k) { return k * (k + 1) / 2; }

inline Eigen::MatrixXd smat(const double* v, int k) {
  Eigen::MatrixXd M(k, k);
  int idx = 0;
  for (int j = 0; j < k; ++j)
    for (int i = j; i < k; ++i) {
      const double val = i == j ? v[idx] : v[idx] / std::numbers::sqrt2;
      M(i, j) = val;
      M(j, i) = val;
      ++idx;
    }
  return M;
}

inline void svec(const Eigen::MatrixXd& M, double* v) {
  const int k = static_cast<int>(M.rows());
  int idx = 0;
  for (int j = 0; j < k; ++j)
    for (int i = j; i < k; ++i) {
      v[idx++] = i == j ? M(i, j) : 0.5 * (M(i, j) + M(j, i)) * std::numbers::sqrt2;
    }
}

namespace detail {

struct SocScaling {
  double beta = 1.0;
  Eigen::VectorXd v;
};

struct PsdScaling {
  Eigen::MatrixXd R, Rinv, RRt;
};

/// Per-iterate scaling data and the scaled point lambda.
struct Scaling {
  Eigen::VectorXd orth;  // sqrt(x/s)
  std::vector<SocScaling> soc;
  std::vector<PsdScaling> psd;
  Eigen::VectorXd lambda;  // cone part only
};

inline double soc_det(const Eigen::Ref<const Eigen::VectorXd>& u) {
  return u(0) * u(0) - u.tail(u.size() - 1).squaredNorm();
}

class Cones {
 public:
  explicit Cones(const ConeDims& d) : d_(d) {
    int off = 0;
    orth_off_ = off;
    off += d.orthant;
    for (int q : d.soc) {
      soc_off_.push_back(off);
      off += q;
    }
    for (int k : d.psd) {
      psd_off_.push_back(off);
      off += svec_size(k);
    }
    n_ = off;
  }

  int n() const { return n_; }
  const ConeDims& dims() const { return d_; }

  Eigen::VectorXd identity() const {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n_);
    e.segment(orth_off_, d_.orthant).setOnes();
    for (std::size_t i = 0; i < d_.soc.size(); ++i) e(soc_off_[i]) = 1.0;
    for (std::size_t i = 0; i < d_.psd.size(); ++i) {
      const int k = d_.psd[i];
      int idx = psd_off_[i];
      for (int j = 0; j < k; ++j) {
        e(idx) = 1.0;
        idx += k - j;
      }
    }
    return e;
  }

  bool compute_scaling(const Eigen::VectorXd& x, const Eigen::VectorXd& s, Scaling& sc) const {
    sc.lambda.resize(n_);
    sc.orth.resize(d_.orthant);
    for (int i = 0; i < d_.orthant; ++i) {
      const double xi = x(orth_off_ + i), si = s(orth_off_ + i);
      if (!(xi > 0.0 && si > 0.0)) return false;
      sc.orth(i) = std::sqrt(xi / si);
      sc.lambda(orth_off_ + i) = std::sqrt(xi * si);
    }
    sc.soc.resize(d_.soc.size());
    for (std::size_t b = 0; b < d_.soc.size(); ++b) {
      const int q = d_.soc[b], o = soc_off_[b];
      const Eigen::VectorXd xb = x.segment(o, q), sb = s.segment(o, q);
      const double dx = soc_det(xb), ds = soc_det(sb);
      if (!(dx > 0.0 && ds > 0.0 && xb(0) > 0.0 && sb(0) > 0.0)) return false;
      const Eigen::VectorXd xn = xb / std::sqrt(dx), sn = sb / std::sqrt(ds);
      const double gamma = std::sqrt(0.5 * (1.0 + xn.dot(sn)));
      Eigen::VectorXd w = xn;
      w(0) += sn(0);
      w.tail(q - 1) -= sn.tail(q - 1);
      w /= 2.0 * gamma;
      Eigen::VectorXd v = w;
      v(0) += 1.0;
      v /= std::sqrt(2.0 * v(0));
      sc.soc[b] = {std::pow(dx / ds, 0.25), v};
      sc.lambda.segment(o, q) = apply_soc_W(sc.soc[b], sb);
    }
    sc.psd.resize(d_.psd.size());
    for (std::size_t b = 0; b < d_.psd.size(); ++b) {
      const int k = d_.psd[b], o = psd_off_[b];
      const Eigen::MatrixXd X = smat(x.data() + o, k), S = smat(s.data() + o, k);
      Eigen::LLT<Eigen::MatrixXd> lx(X), ls(S);
      if (lx.info() != Eigen::Success || ls.info() != Eigen::Success) return false;
      const Eigen::MatrixXd Lx = lx.matrixL(), Ls = ls.matrixL();
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(Ls.transpose() * Lx, Eigen::ComputeFullU | Eigen::ComputeFullV);
      const Eigen::VectorXd lam = svd.singularValues();
      if (!(lam.minCoeff() > 0.0)) return false;
      const Eigen::VectorXd is = lam.cwiseSqrt().cwiseInverse();
      PsdScaling p;
      p.R = Lx * svd.matrixV() * is.asDiagonal();
      p.Rinv = is.asDiagonal() * svd.matrixU().transpose() * Ls.transpose();
      p.RRt = p.R * p.R.transpose();
      sc.psd[b] = std::move(p);
      Eigen::MatrixXd L = lam.asDiagonal();
      svec(L, sc.lambda.data() + o);
    }
    return true;
  }

  static Eigen::VectorXd apply_soc_W(const SocScaling& w, const Eigen::VectorXd& u) {
    // beta (2 v v' - J) u
    Eigen::VectorXd r = 2.0 * w.v.dot(u) * w.v;
    r(0) -= u(0);
    r.tail(u.size() - 1) += u.tail(u.size() - 1);
    return w.beta * r;
  }

  static Eigen::VectorXd apply_soc_Winv(const SocScaling& w, const Eigen::VectorXd& u) {
    // (1/beta) (2 J v v' J - J) u
    Eigen::VectorXd Jv = w.v;
    Jv.tail(Jv.size() - 1) *= -1.0;
    Eigen::VectorXd r = 2.0 * Jv.dot(u) * Jv;
    r(0) -= u(0);
    r.tail(u.size() - 1) += u.tail(u.size() - 1);
    return r / w.beta;
  }

  /// W u (W' = W for orthant and SOC blocks).
  Eigen::VectorXd W(const Scaling& sc, const Eigen::VectorXd& u) const {
    Eigen::VectorXd r(n_);
    r.segment(orth_off_, d_.orthant) = u.segment(orth_off_, d_.orthant).cwiseProduct(sc.orth);
    for (std::size_t b = 0; b < d_.soc.size(); ++b)
      r.segment(soc_off_[b], d_.soc[b]) = apply_soc_W(sc.soc[b], u.segment(soc_off_[b], d_.soc[b]));
    for (std::size_t b = 0; b < d_.psd.size(); ++b) {
      const int k = d_.psd[b], o = psd_off_[b];
      const Eigen::MatrixXd U = smat(u.data() + o, k);
      svec(sc.psd[b].R.transpose() * U * sc.psd[b].R, r.data() + o);
    }
    return r;
  }

  /// W^{-T} u.
  Eigen::VectorXd Winv_t(const Scaling& sc, const Eigen::VectorXd& u) const {
    Eigen::VectorXd r(n_);
    r.segment(orth_off_, d_.orthant) = u.segment(orth_off_, d_.orthant).cwiseQuotient(sc.orth);
    for (std::size_t b = 0; b < d_.soc.size(); ++b)
      r.segment(soc_off_[b], d_.soc[b]) = apply_soc_Winv(sc.soc[b], u.segment(soc_off_[b], d_.soc[b]));
    for (std::size_t b = 0; b < d_.psd.size(); ++b) {
      const int k = d_.psd[b], o = psd_off_[b];
      const Eigen::MatrixXd U = smat(u.data() + o, k);
      svec(sc.psd[b].Rinv * U * sc.psd[b].Rinv.transpose(), r.data() + o);
    }
    return r;
  }

  /// W^{-1} u.
  Eigen::VectorXd Winv(const Scaling& sc, const Eigen::VectorXd& u) const {
    Eigen::VectorXd r(n_);
    r.segment(orth_off_, d_.orthant) = u.segment(orth_off_, d_.orthant).cwiseQuotient(sc.orth);
    for (std::size_t b = 0; b < d_.soc.size(); ++b)
      r.segment(soc_off_[b], d_.soc[b]) = apply_soc_Winv(sc.soc[b], u.segment(soc_off_[b], d_.soc[b]));
    for (std::size_t b = 0; b < d_.psd.size(); ++b) {
      const int k = d_.psd[b], o = psd_off_[b];
      const Eigen::MatrixXd U = smat(u.data() + o, k);
      svec(sc.psd[b].Rinv.transpose() * U * sc.psd[b].Rinv, r.data() + o);
    }
    return r;
  }

  /// Jordan product u o v.
  Eigen::VectorXd jprod(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
    Eigen::VectorXd r(n_);
    r.segment(orth_off_, d_.orthant) = u.segment(orth_off_, d_.orthant).cwiseProduct(v.segment(orth_off_, d_.orthant));
    for (std::size_t b = 0; b < d_.soc.size(); ++b) {
      const int q = d_.soc[b], o = soc_off_[b];
      r(o) = u.segment(o, q).dot(v.segment(o, q));
      r.segment(o + 1, q - 1) = u(o) * v.segment(o + 1, q - 1) + v(o) * u.segment(o + 1, q - 1);
    }
    for (std::size_t b = 0; b < d_.psd.size(); ++b) {
      const int k = d_.psd[b], o = psd_off_[b];
      const Eigen::MatrixXd U = smat(u.data() + o, k), V = smat(v.data() + o, k);
      svec(0.5 * (U * V + V * U), r.data() + o);
    }
    return r;
  }

  /// Solves lambda o w = r for w.
  Eigen::VectorXd jsolve(const Eigen::VectorXd& lambda, const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd w(n_);
    w.segment(orth_off_, d_.orthant) =
        rhs.segment(orth_off_, d_.orthant).cwiseQuotient(lambda.segment(orth_off_, d_.orthant));
    for (std::size_t b = 0; b < d_.soc.size(); ++b) {
      const int q = d_.soc[b], o = soc_off_[b];
      const auto l = lambda.segment(o, q);
      const auto r = rhs.segment(o, q);
      const double det = soc_det(l);
      const double w0 = (l(0) * r(0) - l.tail(q - 1).dot(r.tail(q - 1))) / det;
      w(o) = w0;
      w.segment(o + 1, q - 1) = (r.tail(q - 1) - w0 * l.tail(q - 1)) / l(0);
    }
    for (std::size_t b = 0; b < d_.psd.size(); ++b) {
      const int k = d_.psd[b], o = psd_off_[b];
      const Eigen::MatrixXd L = smat(lambda.data() + o, k), R = smat(rhs.data() + o, k);
      Eigen::MatrixXd Wm(k, k);
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) Wm(i, j) = 2.0 * R(i, j) / (L(i, i) + L(j, j));
      svec(Wm, w.data() + o);
    }
    return w;
  }

  /// Largest alpha with lambda + alpha d in the cone (lambda interior, PSD parts diagonal).
  double max_step(const Eigen::VectorXd& lambda, const Eigen::VectorXd& d) const {
    double amax = std::numeric_limits<double>::infinity();
    for (int i = 0; i < d_.orthant; ++i) {
      const double di = d(orth_off_ + i);
      if (di < 0.0) amax = std::min(amax, -lambda(orth_off_ + i) / di);
    }
    for (std::size_t b = 0; b < d_.soc.size(); ++b) {
      const int q = d_.soc[b], o = soc_off_[b];
      const auto l = lambda.segment(o, q);
      const auto dd = d.segment(o, q);
      // det(l + a d) = A a^2 + B a + C
      const double A = soc_det(dd);
      const double B = 2.0 * (l(0) * dd(0) - l.tail(q - 1).dot(dd.tail(q - 1)));
      const double C = soc_det(l);
      amax = std::min(amax, smallest_positive_root(A, B, C));
      if (dd(0) < 0.0) amax = std::min(amax, -l(0) / dd(0));
    }
    for (std::size_t b = 0; b < d_.psd.size(); ++b) {
      const int k = d_.psd[b], o = psd_off_[b];
      const Eigen::MatrixXd L = smat(lambda.data() + o, k), D = smat(d.data() + o, k);
      Eigen::VectorXd is(k);
      for (int i = 0; i < k; ++i) is(i) = 1.0 / std::sqrt(L(i, i));
      const Eigen::MatrixXd T = is.asDiagonal() * D * is.asDiagonal();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T, Eigen::EigenvaluesOnly);
      const double mn = es.eigenvalues().minCoeff();
      if (mn < 0.0) amax = std::min(amax, -1.0 / mn);
    }
    return amax;
  }

  /// M += A_c Theta A_c' restricted to the cone columns (A_c starts at column `col0`).
  void add_normal_matrix(const Scaling& sc, const Eigen::MatrixXd& A, int col0,
                         const std::vector<std::vector<int>>& block_rows, Eigen::MatrixXd& M) const {
    const int m = static_cast<int>(A.rows());
    if (d_.orthant > 0) {
      const Eigen::VectorXd th = sc.orth.cwiseAbs2();
      const auto& rows = block_rows[0];
      const int r = static_cast<int>(rows.size());
      Eigen::MatrixXd Ab(r, d_.orthant);
      for (int i = 0; i < r; ++i) Ab.row(i) = A.block(rows[i], col0 + orth_off_, 1, d_.orthant);
      const Eigen::MatrixXd P = Ab * th.asDiagonal() * Ab.transpose();
      scatter(rows, P, M);
    }
    for (std::size_t b = 0; b < d_.soc.size(); ++b) {
      const int q = d_.soc[b], o = soc_off_[b];
      const auto& rows = block_rows[1 + b];
      const int r = static_cast<int>(rows.size());
      Eigen::MatrixXd Ab(r, q);
      for (int i = 0; i < r; ++i) Ab.row(i) = A.block(rows[i], col0 + o, 1, q);
      Eigen::MatrixXd T(r, q);
      for (int i = 0; i < r; ++i) {
        const Eigen::VectorXd row = Ab.row(i).transpose();
        T.row(i) = apply_soc_W(sc.soc[b], apply_soc_W(sc.soc[b], row)).transpose();
      }
      scatter(rows, Ab * T.transpose(), M);
    }
    for (std::size_t b = 0; b < d_.psd.size(); ++b) {
      const int k = d_.psd[b], o = psd_off_[b], sz = svec_size(k);
      const auto& rows = block_rows[1 + d_.soc.size() + b];
      const int r = static_cast<int>(rows.size());
      Eigen::MatrixXd Ab(r, sz), T(r, sz);
      for (int i = 0; i < r; ++i) {
        Ab.row(i) = A.block(rows[i], col0 + o, 1, sz);
        Eigen::VectorXd row = Ab.row(i).transpose();
        const Eigen::MatrixXd U = smat(row.data(), k);
        Eigen::VectorXd t(sz);
        svec(sc.psd[b].RRt * U * sc.psd[b].RRt, t.data());
        T.row(i) = t.transpose();
      }
      scatter(rows, Ab * T.transpose(), M);
    }
    (void)m;
  }

  /// Theta u = W' W u.
  Eigen::VectorXd theta(const Scaling& sc, const Eigen::VectorXd& u) const {
    Eigen::VectorXd r(n_);
    r.segment(orth_off_, d_.orthant) = u.segment(orth_off_, d_.orthant).cwiseProduct(sc.orth.cwiseAbs2());
    for (std::size_t b = 0; b < d_.soc.size(); ++b)
      r.segment(soc_off_[b], d_.soc[b]) =
          apply_soc_W(sc.soc[b], apply_soc_W(sc.soc[b], u.segment(soc_off_[b], d_.soc[b])));
    for (std::size_t b = 0; b < d_.psd.size(); ++b) {
      const int k = d_.psd[b], o = psd_off_[b];
      const Eigen::MatrixXd U = smat(u.data() + o, k);
      svec(sc.psd[b].RRt * U * sc.psd[b].RRt, r.data() + o);
    }
    return r;
  }

  /// Column ranges of each block (orthant, soc..., psd...) relative to the cone part.
  std::vector<std::pair<int, int>> block_ranges() const {
    std::vector<std::pair<int, int>> out;
    out.emplace_back(orth_off_, d_.orthant);
    for (std::size_t b = 0; b < d_.soc.size(); ++b) out.emplace_back(soc_off_[b], d_.soc[b]);
    for (std::size_t b = 0; b < d_.psd.size(); ++b) out.emplace_back(psd_off_[b], svec_size(d_.psd[b]));
    return out;
  }

 private:
  static void scatter(const std::vector<int>& rows, const Eigen::MatrixXd& P, Eigen::MatrixXd& M) {
    const int r = static_cast<int>(rows.size());
    for (int j = 0; j < r; ++j)
      for (int i = 0; i < r; ++i) M(rows[i], rows[j]) += P(i, j);
  }

  static double smallest_positive_root(double A, double B, double C) {
    const double inf = std::numeric_limits<double>::infinity();
    if (A == 0.0) return B < 0.0 ? -C / B : inf;
    const double disc = B * B - 4.0 * A * C;
    if (disc < 0.0) return inf;
    const double sq = std::sqrt(disc);
    const double qq = -0.5 * (B + (B >= 0.0 ? sq : -sq));
    double r1 = qq / A, r2 = qq != 0.0 ? C / qq : inf;
    double best = inf;
    for (double r : {r1, r2})
      if (r > 0.0) best = std::min(best, r);
    return best;
  }

  ConeDims d_;
  int n_ = 0;
  int orth_off_ = 0;
  std::vector<int> soc_off_, psd_off_;
};

}  // namespace detail

/// Solves a cone program. Status primal_infeasible means the minimization has no
/// feasible point (a certificate y with A'y in K*, b'y > 0 was found);
/// dual_infeasible means it is unbounded below.
namespace detail {

inline ConeSolution solve_unscaled(const ConeProgram& P, const IpmOptions& opt) {
  const int m = static_cast<int>(P.A.rows());
  const int n = static_cast<int>(P.A.cols());
  const int nf = P.dims.free;
  if (P.dims.size() != n || P.b.size() != m || P.c.size() != n)
    throw std::invalid_argument("solve_cone_program: dimension mismatch");
  detail::Cones K(P.dims);
  const int nc = K.n();

  const Eigen::MatrixXd Af = P.A.leftCols(nf);
  const Eigen::MatrixXd Ac = P.A.rightCols(nc);
  const Eigen::VectorXd cf = P.c.head(nf);
  const Eigen::VectorXd cc = P.c.tail(nc);

  // rows touched by each cone block
  std::vector<std::vector<int>> block_rows;
  for (auto [off, len] : K.block_ranges()) {
    std::vector<int> rows;
    for (int i = 0; i < m; ++i)
      if (len > 0 && Ac.block(i, off, 1, len).cwiseAbs().maxCoeff() > 0.0) rows.push_back(i);
    block_rows.push_back(std::move(rows));
  }

  const Eigen::VectorXd e = K.identity();
  Eigen::VectorXd xf = Eigen::VectorXd::Zero(nf), xc = e, sc = e, y = Eigen::VectorXd::Zero(m);
  double tau = 1.0, kappa = 1.0;
  const double nu = static_cast<double>(P.dims.degree());
  const double bnorm = 1.0 + P.b.lpNorm<Eigen::Infinity>();
  const double cnorm = 1.0 + P.c.lpNorm<Eigen::Infinity>();

  ConeSolution sol;
  detail::Scaling S;
  double best_merit = std::numeric_limits<double>::infinity();
  ConeSolution best;
  int best_it = 0;

  auto finish = [&](ConeStatus st) {
    sol.status = st;
    return sol;
  };

  for (int it = 0; it <= opt.max_iterations; ++it) {
    sol.iterations = it;
    const Eigen::VectorXd Ax = Af * xf + Ac * xc;
    const Eigen::VectorXd Aty = P.A.transpose() * y;
    const Eigen::VectorXd rp = P.b * tau - Ax;
    Eigen::VectorXd rd(n);
    rd.head(nf) = cf * tau - Aty.head(nf);
    rd.tail(nc) = cc * tau - Aty.tail(nc) - sc;
    const double cx = cf.dot(xf) + cc.dot(xc);
    const double by = P.b.dot(y);
    const double rg = kappa + cx - by;
    const double mu = (xc.dot(sc) + tau * kappa) / (nu + 1.0);

    const double pres = rp.lpNorm<Eigen::Infinity>() / tau / bnorm;
    const double dres = rd.lpNorm<Eigen::Infinity>() / tau / cnorm;
    const double pobj = cx / tau, dobj = by / tau;
    const double gap = std::abs(pobj - dobj) / (1.0 + std::min(std::abs(pobj), std::abs(dobj)));
    sol.primal_residual = pres;
    sol.dual_residual = dres;
    sol.gap = gap;
    sol.primal_objective = pobj;
    sol.dual_objective = dobj;
    if (opt.verbose) {
      Eigen::Index imax = 0;
      if (n > 0) rd.cwiseAbs().maxCoeff(&imax);
      std::fprintf(stderr, "ipm %3d pres %.2e dres %.2e (col %ld) gap %.2e pobj %.10g tau %.2e kappa %.2e mu %.2e\n",
                   it, pres, dres, static_cast<long>(imax), gap, pobj, tau, kappa, mu);
    }

    {
      Eigen::VectorXd x(n);
      x << xf, xc;
      Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
      s.tail(nc) = sc;
      sol.x = x / tau;
      sol.y = y / tau;
      sol.s = s / tau;
    }
    if (pres < opt.tol && dres < opt.tol && gap < opt.tol) return finish(ConeStatus::optimal);
    const double merit = std::max({pres, dres, gap});
    if (merit < best_merit) {
      best_merit = merit;
      best = sol;
      best_it = it;
    } else if (it - best_it > 10 && best_merit < opt.relaxed_tol) {
      break;
    }

    // infeasibility certificates
    if (by > 0.0) {
      Eigen::VectorXd aty = Aty;
      aty.tail(nc) += sc;
      const double res = aty.lpNorm<Eigen::Infinity>() / by;
      if (res < opt.infeasibility_tol && tau < kappa) {
        sol.y = y / by;
        return finish(ConeStatus::primal_infeasible);
      }
    }
    if (cx < 0.0) {
      const double res = Ax.lpNorm<Eigen::Infinity>() / (-cx);
      if (res < opt.infeasibility_tol && tau < kappa) {
        Eigen::VectorXd x(n);
        x << xf, xc;
        sol.x = x / (-cx);
        return finish(ConeStatus::dual_infeasible);
      }
    }
    if (it == opt.max_iterations) break;

    if (!K.compute_scaling(xc, sc, S)) break;
    const Eigen::VectorXd& lam = S.lambda;

    // reduced system in (dy, dxf, dtau)
    const int N = m + nf + 1;
    Eigen::MatrixXd Kmat = Eigen::MatrixXd::Zero(N, N);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(m, m);
    K.add_normal_matrix(S, P.A, nf, block_rows, M);
    const Eigen::VectorXd thc = K.theta(S, cc);
    const Eigen::VectorXd Athc = Ac * thc;
    Kmat.topLeftCorner(m, m) = M;
    Kmat.block(0, m, m, nf) = Af;
    Kmat.block(0, m + nf, m, 1) = -(Athc + P.b);
    Kmat.block(m, 0, nf, m) = Af.transpose();
    Kmat.block(m, m + nf, nf, 1) = -cf;
    Kmat.block(m + nf, 0, 1, m) = (Athc - P.b).transpose();
    Kmat.block(m + nf, m, 1, nf) = cf.transpose();
    Kmat(m + nf, m + nf) = -(kappa / tau + cc.dot(thc));
    Eigen::MatrixXd Kreg = Kmat;
    // Ruiz equilibration: the normal block spans many orders of magnitude near the end
    Eigen::VectorXd Dr = Eigen::VectorXd::Ones(N), Dc = Eigen::VectorXd::Ones(N);
    for (int pass = 0; pass < 8; ++pass) {
      for (int i = 0; i < N; ++i) {
        const double rmax = Kreg.row(i).cwiseAbs().maxCoeff();
        if (rmax > 0.0) {
          Kreg.row(i) /= std::sqrt(rmax);
          Dr(i) /= std::sqrt(rmax);
        }
      }
      for (int j = 0; j < N; ++j) {
        const double cmax = Kreg.col(j).cwiseAbs().maxCoeff();
        if (cmax > 0.0) {
          Kreg.col(j) /= std::sqrt(cmax);
          Dc(j) /= std::sqrt(cmax);
        }
      }
    }
    // tiny regularization in the equilibrated system keeps the factorization defined
    Kreg.topLeftCorner(m, m).diagonal().array() += 1e-14;
    Kreg.block(m, m, nf, nf).diagonal().array() -= 1e-14;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(Kreg);
    auto kkt_solve = [&](const Eigen::VectorXd& r) -> Eigen::VectorXd {
      return Dc.cwiseProduct(lu.solve(Dr.cwiseProduct(r)));
    };

    struct Dir {
      Eigen::VectorXd dxf, dxc, dsc, dy;
      double dtau = 0.0, dkappa = 0.0;
    };
    // Newton system with general right-hand sides:
    //   A dx - b dtau = ep,  Af' dy - cf dtau = ef,  Ac' dy + dsc - cc dtau = ec,
    //   -c'dx + b'dy - dkappa = eg,  lam o (W dsc + W^{-T} dxc) = rc,  kappa dtau + tau dkappa = rt
    struct Rhs {
      Eigen::VectorXd ep, ef, ec, rc;
      double eg = 0.0, rt = 0.0;
    };
    auto solve_rhs = [&](const Rhs& R) {
      const Eigen::VectorXd d = K.jsolve(lam, R.rc);
      const Eigen::VectorXd g = K.Winv(S, d) - R.ec;
      const Eigen::VectorXd thg = K.theta(S, g);
      Eigen::VectorXd rhs(N);
      rhs.head(m) = R.ep - Ac * thg;
      rhs.segment(m, nf) = R.ef;
      rhs(m + nf) = -R.eg - R.rt / tau - cc.dot(thg);
      Eigen::VectorXd sol3 = kkt_solve(rhs);
      for (int r = 0; r < 2; ++r) sol3 += kkt_solve(rhs - Kmat * sol3);
      Dir D;
      D.dy = sol3.head(m);
      D.dxf = sol3.segment(m, nf);
      D.dtau = sol3(m + nf);
      D.dxc = K.theta(S, Ac.transpose() * D.dy - cc * D.dtau + g);
      D.dsc = R.ec + cc * D.dtau - Ac.transpose() * D.dy;
      D.dkappa = (R.rt - kappa * D.dtau) / tau;
      return D;
    };
    auto residual = [&](const Rhs& R, const Dir& D) {
      Rhs E;
      E.ep = R.ep - (Af * D.dxf + Ac * D.dxc - P.b * D.dtau);
      E.ef = R.ef - (Af.transpose() * D.dy - cf * D.dtau);
      E.ec = R.ec - (Ac.transpose() * D.dy + D.dsc - cc * D.dtau);
      E.eg = R.eg - (-cf.dot(D.dxf) - cc.dot(D.dxc) + P.b.dot(D.dy) - D.dkappa);
      E.rc = R.rc - K.jprod(lam, K.W(S, D.dsc) + K.Winv_t(S, D.dxc));
      E.rt = R.rt - (kappa * D.dtau + tau * D.dkappa);
      return E;
    };
    auto solve = [&](double eta, const Eigen::VectorXd& rc, double rtau) {
      Rhs R{eta * rp, eta * rd.head(nf), eta * rd.tail(nc), rc, eta * rg, rtau};
      Dir D = solve_rhs(R);
      for (int r = 0; r < 2; ++r) {
        const Dir C = solve_rhs(residual(R, D));
        D.dy += C.dy;
        D.dxf += C.dxf;
        D.dxc += C.dxc;
        D.dsc += C.dsc;
        D.dtau += C.dtau;
        D.dkappa += C.dkappa;
      }
      return D;
    };
    auto step_to_boundary = [&](const Dir& D) {
      const Eigen::VectorXd dxs = K.Winv_t(S, D.dxc);
      const Eigen::VectorXd dss = K.W(S, D.dsc);
      double a = std::min(K.max_step(lam, dxs), K.max_step(lam, dss));
      if (D.dtau < 0.0) a = std::min(a, -tau / D.dtau);
      if (D.dkappa < 0.0) a = std::min(a, -kappa / D.dkappa);
      return a;
    };

    const Eigen::VectorXd lam2 = K.jprod(lam, lam);
    const Dir Da = solve(1.0, -lam2, -tau * kappa);
    const double aa = std::min(1.0, step_to_boundary(Da));
    const double sigma = std::clamp(std::pow(1.0 - aa, 3), 0.0, 1.0);
    const Eigen::VectorXd corr = K.jprod(K.Winv_t(S, Da.dxc), K.W(S, Da.dsc));
    const Eigen::VectorXd rc = -lam2 - corr + sigma * mu * e;
    const double rtau = -tau * kappa - Da.dtau * Da.dkappa + sigma * mu;
    const Dir D = solve(1.0 - sigma, rc, rtau);
    const double amax = step_to_boundary(D);
    if (!(amax > 0.0)) break;
    const double alpha = std::min(1.0, opt.step_fraction * amax);
    if (!(alpha > 1e-14) || !D.dy.allFinite()) break;

    xf += alpha * D.dxf;
    xc += alpha * D.dxc;
    sc += alpha * D.dsc;
    y += alpha * D.dy;
    tau += alpha * D.dtau;
    kappa += alpha * D.dkappa;

    // keep the embedding normalized so the iterates stay in a sane range
    const double nrm = std::max({xc.lpNorm<Eigen::Infinity>(), sc.lpNorm<Eigen::Infinity>(), tau, kappa,
                                 y.lpNorm<Eigen::Infinity>(), xf.lpNorm<Eigen::Infinity>()});
    if (nrm > 1e8) {
      xf /= nrm; xc /= nrm; sc /= nrm; y /= nrm; tau /= nrm; kappa /= nrm;
    }
  }
  if (best_merit < opt.relaxed_tol) {
    best.status = ConeStatus::optimal;
    return best;
  }
  best.status = sol.iterations >= opt.max_iterations ? ConeStatus::max_iterations : ConeStatus::numerical_failure;
  if (best.x.size() == 0) best = sol;
  return best;
}

}  // namespace detail

/// Solves min c'x s.t. Ax = b, x in K after equilibrating rows of A and columns
/// (individually for free and orthant variables, per block for the other cones).
inline ConeSolution solve_cone_program(const ConeProgram& P, const IpmOptions& opt = {}) {
  const int m = static_cast<int>(P.A.rows());
  const int n = static_cast<int>(P.A.cols());
  if (P.dims.size() != n || P.b.size() != m || P.c.size() != n)
    throw std::invalid_argument("solve_cone_program: dimension mismatch");
  std::vector<std::pair<int, int>> groups;
  for (int j = 0; j < P.dims.free + P.dims.orthant; ++j) groups.emplace_back(j, 1);
  int off = P.dims.free + P.dims.orthant;
  for (int q : P.dims.soc) {
    groups.emplace_back(off, q);
    off += q;
  }
  for (int k : P.dims.psd) {
    groups.emplace_back(off, svec_size(k));
    off += svec_size(k);
  }
  ConeProgram S = P;
  Eigen::VectorXd Dr = Eigen::VectorXd::Ones(m), Dc = Eigen::VectorXd::Ones(n);
  for (int pass = 0; pass < 10; ++pass) {
    for (int i = 0; i < m; ++i) {
      const double r = n > 0 ? S.A.row(i).cwiseAbs().maxCoeff() : 0.0;
      if (r > 0.0) {
        const double f = 1.0 / std::sqrt(r);
        S.A.row(i) *= f;
        Dr(i) *= f;
      }
    }
    for (auto [g0, len] : groups) {
      const double cmax = m > 0 ? S.A.middleCols(g0, len).cwiseAbs().maxCoeff() : 0.0;
      if (cmax > 0.0) {
        const double f = 1.0 / std::sqrt(cmax);
        S.A.middleCols(g0, len) *= f;
        Dc.segment(g0, len) *= f;
      }
    }
  }
  S.b = Dr.cwiseProduct(P.b);
  S.c = Dc.cwiseProduct(P.c);
  // badly mismatched b and c make the embedding collapse tau early; normalize only then,
  // since normalizing shrinks the objective and costs digits in the reported value
  double bs = std::max(1.0, S.b.lpNorm<Eigen::Infinity>());
  double cs = std::max(1.0, S.c.lpNorm<Eigen::Infinity>());
  if (std::max(bs, cs) < 1e3) bs = cs = 1.0;
  S.b /= bs;
  S.c /= cs;
  ConeSolution sol = detail::solve_unscaled(S, opt);
  const bool certificate = sol.status == ConeStatus::primal_infeasible || sol.status == ConeStatus::dual_infeasible;
  if (sol.x.size() == n) sol.x = Dc.cwiseProduct(sol.x) * (certificate ? 1.0 : bs);
  if (sol.y.size() == m) sol.y = Dr.cwiseProduct(sol.y) * (certificate ? 1.0 : cs);
  if (sol.s.size() == n) sol.s = sol.s.cwiseQuotient(Dc) * (certificate ? 1.0 : cs);
  sol.primal_objective *= bs * cs;
  sol.dual_objective *= bs * cs;
  return sol;
}

}  // namespace tailrobust::conic
