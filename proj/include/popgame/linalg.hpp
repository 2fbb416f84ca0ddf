#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "popgame/population.hpp"

namespace popgame {

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

struct SymEig {
  Vector values;   // ascending
  Matrix vectors;  // column i pairs with values(i)
};

struct JacobiOptions {
  double relative_threshold = 1e-14;  // off-diagonal norm vs ||M||_F
  int max_sweeps = 100;
};

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// The input is symmetrised as (M + M^T)/2 before rotating. Sweeps stop once
/// the off-diagonal Frobenius norm drops below threshold * ||M||_F.
inline SymEig sym_eig(const Matrix& input, const JacobiOptions& opts = {}) {
  if (input.rows() != input.cols()) {
    throw std::invalid_argument("sym_eig: matrix must be square");
  }
  if (!input.allFinite()) throw std::invalid_argument("sym_eig: non-finite entry");

  const int n = static_cast<int>(input.rows());
  Matrix a = symmetrize(input);
  Matrix v = Matrix::Identity(n, n);

  const double norm = a.norm();
  const double target = opts.relative_threshold * norm;
  auto off_norm = [&] {
    double s = 0.0;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  for (int sweep = 0; sweep < opts.max_sweeps && n > 1; ++sweep) {
    if (off_norm() <= target) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Negligible next to both diagonal entries: zero it without rotating.
        if (std::abs(apq) < 1e-18 * (std::abs(a(p, p)) + std::abs(a(q, q))) ) {
          a(p, q) = a(q, p) = 0.0;
          continue;
        }
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return a(i, i) < a(j, j); });
  SymEig out{Vector(n), Matrix(n, n)};
  for (int k = 0; k < n; ++k) {
    out.values(k) = a(order[k], order[k]);
    out.vectors.col(k) = v.col(order[k]);
  }
  return out;
}

inline double max_eigenvalue(const Matrix& m) {
  if (m.rows() == 0) return -std::numeric_limits<double>::infinity();
  return sym_eig(m).values(m.rows() - 1);
}

/// Largest eigenvalue of B^T sym(M) B together with the maximising unit
/// vector mapped back to the ambient space (B v). B has orthonormal columns.
struct RestrictedEig {
  double value = -std::numeric_limits<double>::infinity();
  Vector direction;
};

inline RestrictedEig restricted_max_eig(const Matrix& m, const Matrix& basis) {
  RestrictedEig out;
  out.direction = Vector::Zero(m.rows());
  if (basis.cols() == 0) return out;
  const Matrix reduced = basis.transpose() * symmetrize(m) * basis;
  const SymEig e = sym_eig(reduced);
  out.value = e.values(e.values.size() - 1);
  out.direction = basis * e.vectors.col(e.vectors.cols() - 1);
  return out;
}

/// Orthonormal basis for the range of an orthogonal projection P.
inline Matrix projection_range_basis(const Matrix& P) {
  const SymEig e = sym_eig(P);
  std::vector<int> keep;
  for (int i = 0; i < e.values.size(); ++i)
    if (e.values(i) > 0.5) keep.push_back(i);
  Matrix B(P.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) B.col(k) = e.vectors.col(keep[k]);
  return B;
}

struct NsdVerdict {
  double lambda_max = 0.0;          // of P sym(M) P, includes the kernel zeros
  double lambda_max_tangent = 0.0;  // kernel of P deflated
  Vector witness;                   // unit top eigenvector in range(P)
  bool holds = false;
};

/// Checks sym(M) <= 0 on range(P).
///
/// With margin > 0 the test is strict on the deflated spectrum:
/// lambda_tangent <= -margin + 1e-12. With margin == 0 it is the
/// semidefinite test lambda_max(P M P) <= 1e-12.
inline NsdVerdict is_nsd_on_tangent(const Matrix& M, const Matrix& P, double margin) {
  if (M.rows() != M.cols() || P.rows() != P.cols() || M.rows() != P.rows()) {
    throw std::invalid_argument("is_nsd_on_tangent: dimension mismatch");
  }
  if (margin < 0) throw std::invalid_argument("is_nsd_on_tangent: margin must be >= 0");
  const Matrix basis = projection_range_basis(P);
  const RestrictedEig top = restricted_max_eig(M, basis);
  NsdVerdict v;
  v.lambda_max_tangent = top.value;
  const bool has_kernel = basis.cols() < P.rows();
  v.lambda_max = has_kernel ? std::max(top.value, 0.0) : top.value;
  if (basis.cols() == 0) v.lambda_max = 0.0;
  v.witness = top.direction;
  v.holds = margin > 0 ? top.value <= -margin + Tolerances::kEigenZero
                       : v.lambda_max <= Tolerances::kEigenZero;
  return v;
}

inline Matrix block_diagonal(const std::vector<Matrix>& blocks) {
  Eigen::Index rows = 0, cols = 0;
  for (const auto& b : blocks) {
    rows += b.rows();
    cols += b.cols();
  }
  Matrix out = Matrix::Zero(rows, cols);
  Eigen::Index r = 0, c = 0;
  for (const auto& b : blocks) {
    out.block(r, c, b.rows(), b.cols()) = b;
    r += b.rows();
    c += b.cols();
  }
  return out;
}

}  // namespace popgame
