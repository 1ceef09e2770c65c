#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tailrobust {

/// Polynomial coefficients in ascending degree.
using Poly = std::vector<double>;

inline double poly_eval(std::span<const double> c, double t) {
  double v = 0.0;
  for (std::size_t i = c.size(); i-- > 0;) v = v * t + c[i];
  return v;
}

inline Poly poly_derivative(std::span<const double> c) {
  if (c.size() <= 1) return Poly{0.0};
  Poly d(c.size() - 1);
  for (std::size_t i = 1; i < c.size(); ++i) d[i - 1] = static_cast<double>(i) * c[i];
  return d;
}

/// Antiderivative vanishing at t = 0.
inline Poly poly_integral(std::span<const double> c) {
  Poly r(c.size() + 1, 0.0);
  for (std::size_t i = 0; i < c.size(); ++i) r[i + 1] = c[i] / static_cast<double>(i + 1);
  return r;
}

/// Coefficients of q(t) = p(t + h).
inline Poly poly_shift(std::span<const double> c, double h) {
  Poly r(c.begin(), c.end());
  if (h == 0.0) return r;
  // repeated synthetic division (Taylor shift)
  const std::size_t n = r.size();
  for (std::size_t i = 0; i + 1 < n; ++i)
    for (std::size_t j = n - 1; j-- > i;) r[j] += h * r[j + 1];
  return r;
}

/// Coefficients of q(t) = p(s t).
inline Poly poly_scale_arg(std::span<const double> c, double s) {
  Poly r(c.begin(), c.end());
  double f = 1.0;
  for (double& v : r) {
    v *= f;
    f *= s;
  }
  return r;
}

inline Poly poly_mul(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return Poly{0.0};
  Poly r(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
  return r;
}

inline Poly poly_add(std::span<const double> a, std::span<const double> b, double sb = 1.0) {
  Poly r(std::max(a.size(), b.size()), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) r[i] += a[i];
  for (std::size_t i = 0; i < b.size(); ++i) r[i] += sb * b[i];
  return r;
}

/// Degree ignoring exact-zero leading coefficients; the zero polynomial has degree 0.
inline int poly_degree(std::span<const double> c) {
  for (std::size_t i = c.size(); i-- > 1;)
    if (c[i] != 0.0) return static_cast<int>(i);
  return 0;
}

/// Piecewise polynomial on [start, +inf), identically zero below start.
///
/// Piece i covers [breaks[i], breaks[i+1]) and the last piece extends to +inf.
/// Each piece stores coefficients in the local variable t = x - breaks[i], which
/// keeps evaluation well conditioned far from the origin. Pieces are closed on the
/// left and open on the right, so evaluation at a breakpoint uses the right piece.
class PiecewisePoly {
 public:
  PiecewisePoly() : breaks_{0.0}, pieces_{Poly{0.0}} {}

  PiecewisePoly(std::vector<double> breaks, std::vector<Poly> pieces)
      : breaks_(std::move(breaks)), pieces_(std::move(pieces)) {
    if (breaks_.empty() || breaks_.size() != pieces_.size())
      throw std::invalid_argument("PiecewisePoly: need one piece per breakpoint");
    for (std::size_t i = 0; i < breaks_.size(); ++i) {
      if (!std::isfinite(breaks_[i]))
        throw std::invalid_argument("PiecewisePoly: breakpoints must be finite");
      if (i > 0 && !(breaks_[i] > breaks_[i - 1]))
        throw std::invalid_argument("PiecewisePoly: breakpoints must be strictly increasing");
      if (pieces_[i].empty()) pieces_[i] = Poly{0.0};
    }
  }

  static PiecewisePoly zero(double start) { return PiecewisePoly({start}, {Poly{0.0}}); }

  /// Indicator of the closed interval [lo, hi] restricted to x >= start; hi may be +inf.
  static PiecewisePoly indicator(double start, double lo, double hi) {
    if (lo < start) lo = start;
    if (!(hi >= lo)) throw std::invalid_argument("indicator: need lo <= hi");
    std::vector<double> b;
    std::vector<Poly> p;
    if (lo > start) {
      b.push_back(start);
      p.push_back({0.0});
    }
    b.push_back(lo);
    p.push_back({1.0});
    if (std::isfinite(hi)) {
      if (hi == lo) throw std::invalid_argument("indicator: degenerate interval");
      b.push_back(hi);
      p.push_back({0.0});
    }
    return PiecewisePoly(std::move(b), std::move(p));
  }

  /// x^k on [start, +inf).
  static PiecewisePoly power(double start, int k) {
    Poly c(static_cast<std::size_t>(k) + 1, 0.0);
    c.back() = 1.0;
    return PiecewisePoly({start}, {poly_shift(c, start)});
  }

  double start() const { return breaks_.front(); }
  const std::vector<double>& breaks() const { return breaks_; }
  const std::vector<Poly>& pieces() const { return pieces_; }
  std::size_t size() const { return pieces_.size(); }

  /// Right end of piece i (+inf for the last one).
  double piece_end(std::size_t i) const {
    return i + 1 < breaks_.size() ? breaks_[i + 1] : std::numeric_limits<double>::infinity();
  }

  int degree() const {
    int d = 0;
    for (const auto& p : pieces_) d = std::max(d, poly_degree(p));
    return d;
  }

  std::size_t locate(double x) const {
    auto it = std::upper_bound(breaks_.begin(), breaks_.end(), x);
    return static_cast<std::size_t>(it - breaks_.begin()) - 1;
  }

  double operator()(double x) const {
    if (x < breaks_.front()) return 0.0;
    const std::size_t i = locate(x);
    return poly_eval(pieces_[i], x - breaks_[i]);
  }

  /// Limit from the left; differs from operator() only at discontinuous breakpoints.
  double left_limit(double x) const {
    if (x <= breaks_.front()) return 0.0;
    auto it = std::lower_bound(breaks_.begin(), breaks_.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - breaks_.begin()) - 1;
    return poly_eval(pieces_[i], x - breaks_[i]);
  }

  double upper_value(double x) const { return std::max((*this)(x), left_limit(x)); }

  /// Antiderivative from start(); continuous across breakpoints.
  PiecewisePoly integral() const {
    std::vector<Poly> out(pieces_.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
      out[i] = poly_integral(pieces_[i]);
      out[i][0] = acc;
      if (i + 1 < pieces_.size()) acc = poly_eval(out[i], breaks_[i + 1] - breaks_[i]);
    }
    return PiecewisePoly(breaks_, std::move(out));
  }

  PiecewisePoly derivative() const {
    std::vector<Poly> out;
    out.reserve(pieces_.size());
    for (const auto& p : pieces_) out.push_back(poly_derivative(p));
    return PiecewisePoly(breaks_, std::move(out));
  }

  /// Same function on the union of its breakpoints and `extra`. Extra points below
  /// start() prepend zero pieces.
  PiecewisePoly refined(std::span<const double> extra) const {
    std::vector<double> b = breaks_;
    for (double x : extra)
      if (std::isfinite(x)) b.push_back(x);
    std::sort(b.begin(), b.end());
    b.erase(std::unique(b.begin(), b.end()), b.end());
    std::vector<Poly> p;
    p.reserve(b.size());
    for (double x : b) {
      if (x < breaks_.front()) {
        p.push_back({0.0});
        continue;
      }
      const std::size_t i = locate(x);
      p.push_back(poly_shift(pieces_[i], x - breaks_[i]));
    }
    return PiecewisePoly(std::move(b), std::move(p));
  }

  PiecewisePoly& operator*=(double s) {
    for (auto& p : pieces_)
      for (double& v : p) v *= s;
    return *this;
  }

  friend PiecewisePoly operator*(double s, PiecewisePoly f) { return f *= s; }

  friend PiecewisePoly operator+(const PiecewisePoly& f, const PiecewisePoly& g) {
    return combine(f, g, 1.0);
  }
  friend PiecewisePoly operator-(const PiecewisePoly& f, const PiecewisePoly& g) {
    return combine(f, g, -1.0);
  }

  /// Pointwise product.
  friend PiecewisePoly product(const PiecewisePoly& f, const PiecewisePoly& g) {
    const PiecewisePoly F = f.refined(g.breaks_);
    const PiecewisePoly G = g.refined(f.breaks_);
    std::vector<Poly> p(F.pieces_.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = poly_mul(F.pieces_[i], G.pieces_[i]);
    return PiecewisePoly(F.breaks_, std::move(p));
  }

  /// Integral over [start, +inf); requires the last piece to be zero.
  double integrate() const {
    if (poly_degree(pieces_.back()) != 0 || pieces_.back()[0] != 0.0)
      throw std::domain_error("PiecewisePoly::integrate: integrand does not vanish at +inf");
    const PiecewisePoly F = integral();
    return F(breaks_.back());
  }

  /// Drops breakpoints where the function is the same polynomial on both sides.
  PiecewisePoly simplified(double tol = 0.0) const {
    std::vector<double> b{breaks_.front()};
    std::vector<Poly> p{pieces_.front()};
    for (std::size_t i = 1; i < pieces_.size(); ++i) {
      const Poly prev = poly_shift(p.back(), breaks_[i] - b.back());
      const Poly diff = poly_add(prev, pieces_[i], -1.0);
      bool same = true;
      for (double v : diff) same = same && std::abs(v) <= tol;
      if (!same) {
        b.push_back(breaks_[i]);
        p.push_back(pieces_[i]);
      }
    }
    return PiecewisePoly(std::move(b), std::move(p));
  }

  friend bool operator==(const PiecewisePoly& f, const PiecewisePoly& g) {
    return f.breaks_ == g.breaks_ && f.pieces_ == g.pieces_;
  }

 private:
  static PiecewisePoly combine(const PiecewisePoly& f, const PiecewisePoly& g, double sg) {
    const PiecewisePoly F = f.refined(g.breaks_);
    const PiecewisePoly G = g.refined(f.breaks_);
    std::vector<Poly> p(F.pieces_.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = poly_add(F.pieces_[i], G.pieces_[i], sg);
    return PiecewisePoly(F.breaks_, std::move(p));
  }

  std::vector<double> breaks_;
  std::vector<Poly> pieces_;
};

}  // namespace tailrobust
