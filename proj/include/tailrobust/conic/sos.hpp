#pragma once

// Sum-of-squares reformulation of the piecewise polynomial constraint.
// On a half-line piece p(u) >= 0 for u >= 0 iff q(s) = p(s^2) is SOS; on a bounded
// piece (scaled to [0,1]) p >= 0 iff sum_r p_r s^{2r} (1+s^2)^{d-r} is SOS. Either
// way q = m(s)' V m(s) with m(s) = (1, s, ..., s^d) and V PSD, which gives linear
// identities between the Gram entries and the coefficients of p.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "dual.hpp"
#include "ipm.hpp"

namespace tailrobust::conic {

inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

/// Matrix T with (coefficients of s^{2l} in q) = T * (coefficients of p).
inline Eigen::MatrixXd sos_coefficient_map(int degree, bool bounded) {
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(degree + 1, degree + 1);
  for (int l = 0; l <= degree; ++l)
    for (int r = 0; r <= l; ++r) T(l, r) = bounded ? binomial(degree - r, l - r) : (r == l ? 1.0 : 0.0);
  return T;
}

struct SosProgram {
  ConeProgram program;
  int nz = 0;
  std::vector<int> gram_offset;
  std::vector<int> gram_size;
};

inline SosProgram sos_reformulate(const DualProgram& dp, int max_degree = kDefaultMaxDegree) {
  SosProgram sp;
  const int nz = dp.size();
  sp.nz = nz;
  ConeDims dims = dp.dims;
  int rows = 0, cols = nz;
  for (const auto& pc : dp.pieces) {
    if (pc.degree > max_degree) throw std::domain_error("sos_reformulate: degree overflow");
    dims.psd.push_back(pc.degree + 1);
    sp.gram_offset.push_back(cols);
    sp.gram_size.push_back(pc.degree + 1);
    cols += svec_size(pc.degree + 1);
    rows += 2 * pc.degree + 1;
  }
  ConeProgram& P = sp.program;
  P.dims = dims;
  P.A = Eigen::MatrixXd::Zero(rows, cols);
  P.b = Eigen::VectorXd::Zero(rows);
  P.c = Eigen::VectorXd::Zero(cols);
  P.c.head(nz) = dp.c;
  int row = 0;
  for (std::size_t i = 0; i < dp.pieces.size(); ++i) {
    const auto& pc = dp.pieces[i];
    const int d = pc.degree, k = d + 1, off = sp.gram_offset[i];
    const Eigen::MatrixXd T = sos_coefficient_map(d, std::isfinite(pc.width));
    Eigen::VectorXd base(k);
    for (int l = 0; l < k; ++l) base(l) = pc.base[l];
    const Eigen::VectorXd tb = T * base;
    const Eigen::MatrixXd tc = T * pc.coef;
    for (int m = 0; m <= 2 * d; ++m, ++row) {
      // sum_{i+j=m} V_ij in svec coordinates
      int idx = off;
      for (int cj = 0; cj < k; ++cj)
        for (int ci = cj; ci < k; ++ci, ++idx)
          if (ci + cj == m) P.A(row, idx) = ci == cj ? 1.0 : std::sqrt(2.0);
      if (m % 2 == 0) {
        P.A.row(row).head(nz) = -tc.row(m / 2);
        P.b(row) = tb(m / 2);
      }
    }
  }
  return sp;
}

struct SosCertificate {
  std::vector<Eigen::MatrixXd> grams;
  double min_eigenvalue = 0.0;
  double identity_residual = 0.0;
};

inline SosCertificate extract_certificate(const SosProgram& sp, const Eigen::VectorXd& x) {
  SosCertificate cert;
  cert.min_eigenvalue = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < sp.gram_offset.size(); ++i) {
    Eigen::MatrixXd V = smat(x.data() + sp.gram_offset[i], sp.gram_size[i]);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(V, Eigen::EigenvaluesOnly);
    cert.min_eigenvalue = std::min(cert.min_eigenvalue, es.eigenvalues().minCoeff());
    cert.grams.push_back(std::move(V));
  }
  cert.identity_residual = (sp.program.A * x - sp.program.b).lpNorm<Eigen::Infinity>();
  return cert;
}

struct DualSolve {
  ConeStatus status = ConeStatus::numerical_failure;
  double value = kInf;
  Eigen::VectorXd z;
  int iterations = 0;
  int cuts = 0;
  double gap = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  SosCertificate certificate;
  /// Multipliers of the coefficient identities; they are pseudo-moments of the primal measure.
  Eigen::VectorXd moments;
};

inline DualSolve solve_sos(const DualProgram& dp, const IpmOptions& opt = {}) {
  const SosProgram sp = sos_reformulate(dp);
  const ConeSolution s = solve_cone_program(sp.program, opt);
  DualSolve out;
  out.status = s.status;
  out.iterations = s.iterations;
  out.gap = s.gap;
  out.primal_residual = s.primal_residual;
  out.dual_residual = s.dual_residual;
  if (s.status == ConeStatus::optimal) {
    out.z = s.x.head(sp.nz);
    out.value = dp.objective(out.z);
    out.certificate = extract_certificate(sp, s.x);
    out.moments = s.y;
  }
  return out;
}

}  // namespace tailrobust::conic
