#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace popgame {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Numerical tolerances shared across modules. Every check in the library
/// reads its default from here so the thresholds live in one place.
struct Tolerances {
  static constexpr double kSymmetry = 1e-12;
  static constexpr double kSimplexNegativity = 1e-12;
  static constexpr double kSimplexMass = 1e-9;
  static constexpr double kTangentSum = 1e-10;
  static constexpr double kSemidefinite = 1e-10;
  static constexpr double kEigenZero = 1e-12;
};

/// Strategy counts n^r and masses m^r of rho populations.
///
/// The social state x is the concatenation of the per-population blocks;
/// block r occupies indices [offset(r), offset(r) + count(r)).
class PopulationStructure {
 public:
  PopulationStructure() = default;

  PopulationStructure(std::vector<int> counts, std::vector<double> masses)
      : counts_(std::move(counts)), masses_(std::move(masses)) {
    if (counts_.empty()) {
      throw std::invalid_argument("PopulationStructure: need at least one population");
    }
    if (counts_.size() != masses_.size()) {
      throw std::invalid_argument("PopulationStructure: counts and masses differ in length");
    }
    offsets_.reserve(counts_.size());
    int total = 0;
    for (std::size_t r = 0; r < counts_.size(); ++r) {
      if (counts_[r] < 1) {
        throw std::invalid_argument("PopulationStructure: strategy count of population " +
                                    std::to_string(r) + " must be >= 1");
      }
      if (!(masses_[r] > 0.0) || !std::isfinite(masses_[r])) {
        throw std::invalid_argument("PopulationStructure: mass of population " +
                                    std::to_string(r) + " must be positive");
      }
      offsets_.push_back(total);
      total += counts_[r];
    }
    n_ = total;
  }

  /// Single population with `count` strategies.
  static PopulationStructure single(int count, double mass = 1.0) {
    return PopulationStructure({count}, {mass});
  }

  int populations() const { return static_cast<int>(counts_.size()); }
  int strategies() const { return n_; }
  int count(int r) const { return counts_.at(r); }
  double mass(int r) const { return masses_.at(r); }
  int offset(int r) const { return offsets_.at(r); }
  const std::vector<int>& counts() const { return counts_; }
  const std::vector<double>& masses() const { return masses_; }

  /// Population index owning strategy slot i.
  int population_of(int i) const {
    for (int r = populations() - 1; r >= 0; --r) {
      if (i >= offsets_[r]) return r;
    }
    throw std::out_of_range("population_of: index out of range");
  }

  template <class V>
  auto block(V& v, int r) const {
    return v.segment(offset(r), count(r));
  }

  void require_length(const Vector& v, const char* what) const {
    if (v.size() != n_) {
      throw std::invalid_argument(std::string(what) + ": expected length " +
                                  std::to_string(n_) + ", got " + std::to_string(v.size()));
    }
  }

  /// Diagonal n x n matrix repeating w^r across the strategies of population r.
  Matrix expand_weights(const Vector& weights) const {
    if (weights.size() != populations()) {
      throw std::invalid_argument("expand_weights: one weight per population required");
    }
    Vector diag(n_);
    for (int r = 0; r < populations(); ++r) diag.segment(offset(r), count(r)).setConstant(weights(r));
    return diag.asDiagonal();
  }

  bool operator==(const PopulationStructure& o) const {
    return counts_ == o.counts_ && masses_ == o.masses_;
  }

 private:
  std::vector<int> counts_;
  std::vector<double> masses_;
  std::vector<int> offsets_;
  int n_ = 0;
};

/// Returns an empty string when x lies on the simplex product, otherwise a
/// description of the first violated invariant.
inline std::string social_state_violation(const PopulationStructure& s, const Vector& x,
                                          double neg_tol = Tolerances::kSimplexNegativity,
                                          double mass_tol = Tolerances::kSimplexMass) {
  if (x.size() != s.strategies()) return "length mismatch";
  for (int i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x(i))) return "non-finite entry at " + std::to_string(i);
    if (x(i) < -neg_tol) return "negative entry at " + std::to_string(i);
  }
  for (int r = 0; r < s.populations(); ++r) {
    const double sum = x.segment(s.offset(r), s.count(r)).sum();
    if (std::abs(sum - s.mass(r)) > mass_tol) {
      return "population " + std::to_string(r) + " mass " + std::to_string(sum) +
             " differs from " + std::to_string(s.mass(r));
    }
  }
  return {};
}

/// A point of the simplex product X, validated at construction.
class SocialState {
 public:
  SocialState(PopulationStructure structure, Vector values)
      : structure_(std::move(structure)), values_(std::move(values)) {
    const std::string err = social_state_violation(structure_, values_);
    if (!err.empty()) throw std::invalid_argument("SocialState: " + err);
  }

  const Vector& values() const { return values_; }
  const PopulationStructure& structure() const { return structure_; }

 private:
  PopulationStructure structure_;
  Vector values_;
};

/// Every per-population block sums to zero (mass-flow direction in TX).
inline bool is_tangent(const PopulationStructure& s, const Vector& v,
                       double tol = Tolerances::kTangentSum) {
  if (v.size() != s.strategies()) return false;
  for (int r = 0; r < s.populations(); ++r) {
    if (std::abs(v.segment(s.offset(r), s.count(r)).sum()) > tol) return false;
  }
  return true;
}

/// Orthogonal projection onto TX: block r is I - (1/n^r) 11^T.
inline Matrix tangent_projection(const PopulationStructure& s) {
  Matrix P = Matrix::Zero(s.strategies(), s.strategies());
  for (int r = 0; r < s.populations(); ++r) {
    const int k = s.count(r);
    P.block(s.offset(r), s.offset(r), k, k) =
        Matrix::Identity(k, k) - Matrix::Constant(k, k, 1.0 / k);
  }
  return P;
}

/// Orthonormal basis of TX (n x (n - rho)), built from Helmert contrasts so it
/// is exact and deterministic.
inline Matrix tangent_basis(const PopulationStructure& s) {
  const int n = s.strategies();
  Matrix U = Matrix::Zero(n, n - s.populations());
  int col = 0;
  for (int r = 0; r < s.populations(); ++r) {
    const int off = s.offset(r);
    for (int k = 1; k < s.count(r); ++k) {
      const double scale = 1.0 / std::sqrt(static_cast<double>(k) * (k + 1));
      for (int i = 0; i < k; ++i) U(off + i, col) = scale;
      U(off + k, col) = -k * scale;
      ++col;
    }
  }
  return U;
}

/// Uniform point of X: each block is an exponential-normalised (flat
/// Dirichlet) vector scaled to the population mass.
template <class Rng>
Vector sample_social_state(const PopulationStructure& s, Rng& rng) {
  std::exponential_distribution<double> expo(1.0);
  Vector x(s.strategies());
  for (int r = 0; r < s.populations(); ++r) {
    double sum = 0.0;
    for (int i = 0; i < s.count(r); ++i) {
      x(s.offset(r) + i) = expo(rng);
      sum += x(s.offset(r) + i);
    }
    x.segment(s.offset(r), s.count(r)) *= s.mass(r) / sum;
  }
  return x;
}

/// Standard normal vector projected onto TX.
template <class Rng>
Vector sample_tangent(const PopulationStructure& s, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(s.strategies());
  for (int i = 0; i < v.size(); ++i) v(i) = normal(rng);
  for (int r = 0; r < s.populations(); ++r) {
    auto b = v.segment(s.offset(r), s.count(r));
    b.array() -= b.mean();
  }
  return v;
}

/// Mass split evenly across the strategies of each population.
inline Vector barycenter(const PopulationStructure& s) {
  Vector x(s.strategies());
  for (int r = 0; r < s.populations(); ++r) {
    x.segment(s.offset(r), s.count(r)).setConstant(s.mass(r) / s.count(r));
  }
  return x;
}

}  // namespace popgame
