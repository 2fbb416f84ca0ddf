#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "popgame/linalg.hpp"

namespace popgame {

/// M(theta) = M_0 + sum_i theta_i M_i with symmetric M_i.
struct AffinePencil {
  Matrix base;
  std::vector<Matrix> terms;

  int variables() const { return static_cast<int>(terms.size()); }

  Matrix at(const Vector& theta) const {
    if (theta.size() != variables()) throw std::invalid_argument("AffinePencil::at: wrong theta length");
    Matrix m = base;
    for (int i = 0; i < variables(); ++i) m += theta(i) * terms[i];
    return m;
  }

  /// Same pencil compressed to B^T M(theta) B.
  AffinePencil restricted(const Matrix& basis) const {
    AffinePencil out;
    out.base = basis.transpose() * symmetrize(base) * basis;
    for (const auto& t : terms) out.terms.push_back(basis.transpose() * symmetrize(t) * basis);
    return out;
  }
};

struct SolverBudget {
  int iterations = 2000;
  int restarts = 5;
  std::uint64_t seed = 1;
  bool grid_refine = true;  // only applied when the pencil has <= 3 variables
  int grid_points = 61;     // per axis over 10^[-3, 3]
  bool polish = true;       // cyclic golden-section line searches at the end
  double polyak_offset = 1e-3;
  /// Stop as soon as lambda_max falls below this value.
  double stop_below = -std::numeric_limits<double>::infinity();
};

struct SolveResult {
  Vector theta;
  double lambda_max = std::numeric_limits<double>::infinity();
  long evaluations = 0;
};

namespace detail {

struct PencilEval {
  double value;
  Vector subgradient;
};

/// lambda_max(M(theta)) and a subgradient: component i is v^T M_i v averaged
/// over an orthonormal basis of the top eigenspace.
inline PencilEval evaluate_pencil(const AffinePencil& pencil, const Vector& theta) {
  const SymEig e = sym_eig(pencil.at(theta));
  const int k = static_cast<int>(e.values.size());
  const double top = e.values(k - 1);
  const double tie = 1e-10 * std::max(1.0, std::abs(top));
  PencilEval out{top, Vector::Zero(pencil.variables())};
  int count = 0;
  for (int j = k - 1; j >= 0 && top - e.values(j) <= tie; --j) {
    const auto v = e.vectors.col(j);
    for (int i = 0; i < pencil.variables(); ++i) out.subgradient(i) += v.dot(pencil.terms[i] * v);
    ++count;
  }
  out.subgradient /= count;
  return out;
}

inline double golden_section(const std::function<double(double)>& f, double lo, double hi,
                             double& best_x, int iterations = 80) {
  const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - ratio * (b - a), d = a + ratio * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < iterations && b - a > 1e-15 * std::max(1.0, std::abs(b)); ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - ratio * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + ratio * (b - a);
      fd = f(d);
    }
  }
  best_x = fc <= fd ? c : d;
  return std::min(fc, fd);
}

}  // namespace detail

/// Minimises the convex function theta -> lambda_max(M(theta)) over the box
/// lower <= theta <= upper.
///
/// Projected subgradient with Polyak steps aimed at (best - offset), run
/// from several starts (the first at the geometric centre of the box, the
/// rest log-uniform random). Small problems get a logarithmic grid pass and
/// every run ends with cyclic golden-section polishing. Deterministic given
/// the seed.
inline SolveResult feasibility_solve(const AffinePencil& pencil, const Vector& lower,
                                     const Vector& upper, const SolverBudget& budget = {}) {
  const int d = pencil.variables();
  if (lower.size() != d || upper.size() != d) {
    throw std::invalid_argument("feasibility_solve: bounds must match the number of variables");
  }
  for (int i = 0; i < d; ++i) {
    if (!(lower(i) > 0.0) || !(upper(i) >= lower(i))) {
      throw std::invalid_argument("feasibility_solve: need 0 < lower <= upper");
    }
  }

  SolveResult best;
  best.theta = Vector::Zero(d);
  auto consider = [&](const Vector& theta, double value) {
    if (value < best.lambda_max) {
      best.lambda_max = value;
      best.theta = theta;
    }
  };
  auto eval_value = [&](const Vector& theta) {
    ++best.evaluations;
    return detail::evaluate_pencil(pencil, theta).value;
  };
  auto done = [&] { return best.lambda_max <= budget.stop_below; };

  if (d == 0) {
    best.lambda_max = eval_value(Vector());
    return best;
  }

  Vector start_lo(d), start_hi(d);
  for (int i = 0; i < d; ++i) {
    start_lo(i) = std::min(std::max(lower(i), 1e-3), upper(i));
    start_hi(i) = upper(i);
  }
  std::mt19937_64 rng(budget.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto subgradient_run = [&](Vector theta) {
    double run_best = std::numeric_limits<double>::infinity();
    for (int it = 0; it <= budget.iterations && !done(); ++it) {
      ++best.evaluations;
      const detail::PencilEval e = detail::evaluate_pencil(pencil, theta);
      consider(theta, e.value);
      run_best = std::min(run_best, e.value);
      if (it == budget.iterations) break;
      const double g2 = e.subgradient.squaredNorm();
      if (g2 == 0.0) break;
      const double step = (e.value - (run_best - budget.polyak_offset)) / g2;
      theta = (theta - step * e.subgradient).cwiseMax(lower).cwiseMin(upper);
    }
  };

  const int restarts = std::max(1, budget.restarts);
  for (int r = 0; r < restarts && !done(); ++r) {
    Vector theta(d);
    for (int i = 0; i < d; ++i) {
      const double a = std::log(start_lo(i)), b = std::log(start_hi(i));
      theta(i) = std::exp(r == 0 ? 0.5 * (a + b) : a + (b - a) * unit(rng));
    }
    subgradient_run(theta);
  }

  if (budget.grid_refine && d <= 3 && budget.iterations > 0 && !done()) {
    const int m = std::max(2, budget.grid_points);
    std::vector<double> axis(m);
    for (int k = 0; k < m; ++k) axis[k] = std::pow(10.0, -3.0 + 6.0 * k / (m - 1));
    std::vector<int> idx(d, 0);
    const Vector before = best.theta;
    while (!done()) {
      Vector theta(d);
      for (int i = 0; i < d; ++i) theta(i) = std::clamp(axis[idx[i]], lower(i), upper(i));
      consider(theta, eval_value(theta));
      int i = 0;
      while (i < d && ++idx[i] == m) idx[i++] = 0;
      if (i == d) break;
    }
    if (best.theta != before) subgradient_run(best.theta);
  }

  if (budget.polish && budget.iterations > 0 && !done()) {
    for (int round = 0; round < 30 && !done(); ++round) {
      const double start_value = best.lambda_max;
      for (int i = 0; i < d; ++i) {
        Vector theta = best.theta;
        double xi = theta(i);
        const double v = detail::golden_section(
            [&](double t) {
              theta(i) = t;
              return eval_value(theta);
            },
            lower(i), upper(i), xi);
        theta(i) = xi;
        consider(theta, v);
      }
      if (start_value - best.lambda_max <= 1e-15 * std::max(1.0, std::abs(start_value))) break;
    }
  }
  return best;
}

}  // namespace popgame
