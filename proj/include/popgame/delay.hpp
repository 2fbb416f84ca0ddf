#pragma once

#include <cmath>
#include <functional>
#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "popgame/numeric.hpp"

namespace popgame {

/// Link delay Phi(z) on z >= 0: strictly increasing, C^1, onto [alpha, inf).
///
/// Carries the derivative Phi', the potential phi(z) = int_0^z Phi and the
/// inverse Phi^{-1} on [alpha, inf). Affine and BPR delays use closed forms;
/// custom delays fall back to quadrature and bracketed bisection.
class DelayFunction {
 public:
  using Fn = std::function<double(double)>;

  enum class Kind { kAffine, kBpr, kCustom };

  /// Phi(z) = slope * z + alpha, slope > 0.
  static DelayFunction affine(double slope, double alpha) {
    if (!(slope > 0.0)) throw std::invalid_argument("affine delay: slope must be positive");
    if (!std::isfinite(alpha)) throw std::invalid_argument("affine delay: alpha must be finite");
    DelayFunction d(Kind::kAffine, alpha);
    d.params_ = {slope, alpha, 0.0, 0.0};
    return d;
  }

  /// Phi(z) = alpha (1 + beta (z / capacity)^4).
  static DelayFunction bpr(double alpha, double beta, double capacity) {
    if (!(alpha > 0.0) || !(beta > 0.0) || !(capacity > 0.0)) {
      throw std::invalid_argument("BPR delay: alpha, beta and capacity must be positive");
    }
    DelayFunction d(Kind::kBpr, alpha);
    d.params_ = {alpha, beta, capacity, 0.0};
    return d;
  }

  /// Arbitrary strictly increasing delay with known derivative.
  static DelayFunction custom(Fn value, Fn derivative, std::optional<Fn> potential = std::nullopt) {
    if (!value || !derivative) throw std::invalid_argument("custom delay: value and derivative required");
    DelayFunction d(Kind::kCustom, value(0.0));
    d.value_ = std::move(value);
    d.derivative_ = std::move(derivative);
    if (potential) d.potential_ = std::move(*potential);
    return d;
  }

  Kind kind() const { return kind_; }
  double alpha() const { return alpha_; }

  double value(double z) const {
    switch (kind_) {
      case Kind::kAffine: return params_[0] * z + params_[1];
      case Kind::kBpr: return params_[0] * (1.0 + params_[1] * std::pow(z / params_[2], 4));
      case Kind::kCustom: return value_(z);
    }
    return 0.0;
  }

  double derivative(double z) const {
    switch (kind_) {
      case Kind::kAffine: return params_[0];
      case Kind::kBpr: return 4.0 * params_[0] * params_[1] * std::pow(z, 3) / std::pow(params_[2], 4);
      case Kind::kCustom: return derivative_(z);
    }
    return 0.0;
  }

  /// phi(z) = int_0^z Phi(s) ds
  double potential(double z) const {
    switch (kind_) {
      case Kind::kAffine: return 0.5 * params_[0] * z * z + params_[1] * z;
      case Kind::kBpr:
        return params_[0] * (z + params_[1] * std::pow(z, 5) / (5.0 * std::pow(params_[2], 4)));
      case Kind::kCustom:
        if (potential_) return potential_(z);
        return numeric::adaptive_simpson(value_, 0.0, z, 1e-12);
    }
    return 0.0;
  }

  /// Unique z >= 0 with Phi(z) = q, for q >= alpha. Throws std::domain_error
  /// below alpha.
  double inverse(double q) const {
    if (q < alpha_) {
      throw std::domain_error("delay inverse: q = " + std::to_string(q) + " below alpha = " +
                              std::to_string(alpha_));
    }
    switch (kind_) {
      case Kind::kAffine: return (q - params_[1]) / params_[0];
      case Kind::kBpr: return params_[2] * std::pow((q / params_[0] - 1.0) / params_[1], 0.25);
      case Kind::kCustom:
        return numeric::increasing_inverse([this](double z) { return value_(z); }, q, 0.0, 1e-12);
    }
    return 0.0;
  }

  /// Samples Phi on [0, z_max] and reports whether it increases strictly.
  bool strictly_increasing_on(double z_max, int points = 200) const {
    double prev = value(0.0);
    for (int k = 1; k <= points; ++k) {
      const double v = value(z_max * k / points);
      if (!(v > prev)) return false;
      prev = v;
    }
    return true;
  }

 private:
  DelayFunction(Kind kind, double alpha) : kind_(kind), alpha_(alpha) {}

  Kind kind_;
  double alpha_;
  std::array<double, 4> params_{};
  Fn value_, derivative_, potential_;
};

}  // namespace popgame
