#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

#include "popgame/population.hpp"

namespace popgame::numeric {

namespace detail {
template <class F>
double simpson_recurse(const F& f, double a, double b, double fa, double fm, double fb,
                       double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}
}  // namespace detail

/// Adaptive Simpson quadrature of f over [a, b] (b < a gives the signed integral).
template <class F>
double adaptive_simpson(const F& f, double a, double b, double tol = 1e-10, int max_depth = 50) {
  if (a == b) return 0.0;
  if (b < a) return -adaptive_simpson(f, b, a, tol, max_depth);
  const double fa = f(a), fb = f(b), m = 0.5 * (a + b), fm = f(m);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::simpson_recurse(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

/// Root of an increasing g on [lo, +inf) with g(lo) <= target. The upper
/// bracket doubles until g(hi) >= target; bisection stops at width `width`.
template <class G>
double increasing_inverse(const G& g, double target, double lo = 0.0, double width = 1e-12) {
  if (g(lo) >= target) return lo;
  double hi = std::max(1.0, 2.0 * std::abs(lo));
  int doublings = 0;
  while (g(hi) < target) {
    lo = hi;
    hi *= 2.0;
    if (++doublings > 1100) throw std::domain_error("increasing_inverse: target not bracketed");
  }
  while (hi - lo > width * std::max(1.0, std::abs(hi))) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (g(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Central-difference step used by every finite-difference oracle.
inline double fd_step(double value) { return 1e-6 * std::max(1.0, std::abs(value)); }

/// Central-difference gradient of a scalar function.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& at) {
  Vector g(at.size());
  for (int i = 0; i < at.size(); ++i) {
    const double h = fd_step(at(i));
    Vector plus = at, minus = at;
    plus(i) += h;
    minus(i) -= h;
    g(i) = (f(plus) - f(minus)) / (2.0 * h);
  }
  return g;
}

/// Central-difference Jacobian of a vector map.
inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& at) {
  const Vector f0 = f(at);
  Matrix j(f0.size(), at.size());
  for (int i = 0; i < at.size(); ++i) {
    const double h = fd_step(at(i));
    Vector plus = at, minus = at;
    plus(i) += h;
    minus(i) -= h;
    j.col(i) = (f(plus) - f(minus)) / (2.0 * h);
  }
  return j;
}

}  // namespace popgame::numeric
