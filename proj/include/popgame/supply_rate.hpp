#pragma once

#include <stdexcept>
#include <string>

#include "popgame/population.hpp"

namespace popgame {

/// Symmetric 2n x 2n supply-rate matrix with n x n blocks
///   [ Pi11  Pi12 ]
///   [ Pi21  Pi22 ],  Pi21 = Pi12^T,
/// acting on the stacked vector [u; nu].
class SupplyRate {
 public:
  SupplyRate() = default;

  explicit SupplyRate(Matrix pi) : pi_(std::move(pi)) {
    if (pi_.rows() != pi_.cols() || pi_.rows() % 2 != 0) {
      throw std::invalid_argument("SupplyRate: matrix must be square with even size");
    }
    if (!pi_.allFinite()) throw std::invalid_argument("SupplyRate: non-finite entry");
    const double asym = (pi_ - pi_.transpose()).cwiseAbs().maxCoeff();
    if (asym > Tolerances::kSymmetry) {
      throw std::invalid_argument("SupplyRate: matrix not symmetric (max asymmetry " +
                                  std::to_string(asym) + ")");
    }
  }

  static SupplyRate from_blocks(const Matrix& pi11, const Matrix& pi12, const Matrix& pi22) {
    const auto n = pi11.rows();
    if (pi11.cols() != n || pi12.rows() != n || pi12.cols() != n || pi22.rows() != n ||
        pi22.cols() != n) {
      throw std::invalid_argument("SupplyRate::from_blocks: blocks must all be n x n");
    }
    Matrix pi(2 * n, 2 * n);
    pi << pi11, pi12, pi12.transpose(), pi22;
    return SupplyRate(pi);
  }

  /// Pi11 = Pi22 = 0, Pi12 = Pi21 = W/2 with W = blockdiag(w^r I_{n^r}).
  /// Unit weights give the delta-passive supply rate u^T nu.
  static SupplyRate delta_passive(const PopulationStructure& s, const Vector& weights) {
    const int n = s.strategies();
    const Matrix zero = Matrix::Zero(n, n);
    return from_blocks(zero, 0.5 * s.expand_weights(weights), zero);
  }

  static SupplyRate delta_passive(const PopulationStructure& s) {
    return delta_passive(s, Vector::Ones(s.populations()));
  }

  /// Delta-passivity surplus form: Pi12 = I/2, Pi22 = -eta I.
  static SupplyRate passivity_surplus(int n, double eta) {
    return from_blocks(Matrix::Zero(n, n), 0.5 * Matrix::Identity(n, n),
                       -eta * Matrix::Identity(n, n));
  }

  int n() const { return static_cast<int>(pi_.rows() / 2); }
  const Matrix& matrix() const { return pi_; }
  Matrix pi11() const { return pi_.topLeftCorner(n(), n()); }
  Matrix pi12() const { return pi_.topRightCorner(n(), n()); }
  Matrix pi21() const { return pi_.bottomLeftCorner(n(), n()); }
  Matrix pi22() const { return pi_.bottomRightCorner(n(), n()); }

  bool pi11_is_zero() const { return (pi11().array() == 0.0).all(); }

  /// [u; v]^T Pi [u; v]
  double evaluate(const Vector& u, const Vector& v) const {
    if (u.size() != n() || v.size() != n()) {
      throw std::invalid_argument("SupplyRate::evaluate: dimension mismatch");
    }
    Vector uv(2 * n());
    uv << u, v;
    return uv.dot(pi_ * uv);
  }

  /// sym([J; I]^T Pi [J; I]) = J^T Pi11 J + J^T Pi12 + Pi21 J + Pi22, symmetrised.
  Matrix incremental_form(const Matrix& jacobian) const {
    if (jacobian.rows() != n() || jacobian.cols() != n()) {
      throw std::invalid_argument("SupplyRate::incremental_form: Jacobian must be n x n");
    }
    const Matrix m = jacobian.transpose() * pi11() * jacobian +
                     jacobian.transpose() * pi12() + pi21() * jacobian + pi22();
    return 0.5 * (m + m.transpose());
  }

 private:
  Matrix pi_;
};

}  // namespace popgame
