#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "popgame/numeric.hpp"
#include "popgame/population.hpp"
#include "popgame/supply_rate.hpp"

namespace popgame {

/// Switch-rate function phi of an impartial pairwise comparison protocol:
/// zero on (-inf, 0], positive on (0, inf). `integral(t)` is the
/// antiderivative int_0^t phi, either closed-form or by adaptive Simpson.
class SwitchRate {
 public:
  using Fn = std::function<double(double)>;

  SwitchRate(std::string name, Fn rate, std::optional<Fn> antiderivative = std::nullopt)
      : name_(std::move(name)), rate_(std::move(rate)), antiderivative_(std::move(antiderivative)) {
    if (!rate_) throw std::invalid_argument("SwitchRate: rate function required");
  }

  /// phi(s) = [s]_+
  static SwitchRate smith() {
    return SwitchRate(
        "smith", [](double s) { return s > 0.0 ? s : 0.0; },
        [](double t) { return t > 0.0 ? 0.5 * t * t : 0.0; });
  }

  /// phi(s) = [s]_+^k
  static SwitchRate power(double k) {
    if (!(k > 0.0)) throw std::invalid_argument("SwitchRate::power: exponent must be positive");
    return SwitchRate(
        "power", [k](double s) { return s > 0.0 ? std::pow(s, k) : 0.0; },
        [k](double t) { return t > 0.0 ? std::pow(t, k + 1.0) / (k + 1.0) : 0.0; });
  }

  const std::string& name() const { return name_; }
  double rate(double s) const { return s > 0.0 ? rate_(s) : 0.0; }

  double integral(double t) const {
    if (t <= 0.0) return 0.0;
    if (antiderivative_) return (*antiderivative_)(t);
    return numeric::adaptive_simpson(rate_, 0.0, t, 1e-10);
  }

  bool has_closed_form() const { return antiderivative_.has_value(); }

 private:
  std::string name_;
  Fn rate_;
  std::optional<Fn> antiderivative_;
};

struct StorageGradients {
  Vector dx;  // dS/dx
  Vector dp;  // dS/dp
};

/// Impartial pairwise comparison EDM
///   nu_i = sum_j x_j phi_i(p_i - p_j) - x_i phi_j(p_j - p_i)
/// per population, with storage S^r = sum_{i,j} x_i int_0^{p_j - p_i} phi_j
/// and dissipation sigma^r = -sum_i nu_i sum_j int_0^{p_j - p_i} phi_j.
///
/// Storage-type quantities accept per-population weights w^r > 0 and return
/// the composite sum_r w^r S^r (unit weights when omitted).
class IpcProtocol {
 public:
  IpcProtocol(PopulationStructure structure, SwitchRate rate)
      : structure_(std::move(structure)),
        rates_(static_cast<std::size_t>(structure_.strategies()), rate) {}

  /// One switch rate per strategy slot (length n).
  IpcProtocol(PopulationStructure structure, std::vector<SwitchRate> rates)
      : structure_(std::move(structure)), rates_(std::move(rates)) {
    if (static_cast<int>(rates_.size()) != structure_.strategies()) {
      throw std::invalid_argument("IpcProtocol: need one switch rate per strategy");
    }
  }

  static IpcProtocol smith(PopulationStructure structure) {
    return IpcProtocol(std::move(structure), SwitchRate::smith());
  }

  const PopulationStructure& structure() const { return structure_; }
  const SwitchRate& rate(int i) const { return rates_.at(static_cast<std::size_t>(i)); }

  Vector velocity(const Vector& x, const Vector& p) const {
    check(x, p);
    Vector nu = Vector::Zero(x.size());
    for (int r = 0; r < structure_.populations(); ++r) {
      const int off = structure_.offset(r), k = structure_.count(r);
      for (int i = off; i < off + k; ++i) {
        double in = 0.0, out = 0.0;
        for (int j = off; j < off + k; ++j) {
          if (j == i) continue;
          in += x(j) * rates_[i].rate(p(i) - p(j));
          out += rates_[j].rate(p(j) - p(i));
        }
        nu(i) = in - x(i) * out;
      }
    }
    return nu;
  }

  /// S^r for every population.
  Vector storage_by_population(const Vector& x, const Vector& p) const {
    check(x, p);
    Vector s = Vector::Zero(structure_.populations());
    for (int r = 0; r < structure_.populations(); ++r) {
      const int off = structure_.offset(r), k = structure_.count(r);
      for (int i = off; i < off + k; ++i) s(r) += x(i) * integral_row(p, r, i);
    }
    return s;
  }

  /// sigma^r for every population.
  Vector sigma_by_population(const Vector& x, const Vector& p) const {
    const Vector nu = velocity(x, p);
    Vector s = Vector::Zero(structure_.populations());
    for (int r = 0; r < structure_.populations(); ++r) {
      const int off = structure_.offset(r), k = structure_.count(r);
      for (int i = off; i < off + k; ++i) s(r) -= nu(i) * integral_row(p, r, i);
    }
    return s;
  }

  double storage(const Vector& x, const Vector& p) const {
    return storage_by_population(x, p).sum();
  }
  double storage(const Vector& x, const Vector& p, const Vector& weights) const {
    return weights_checked(weights).dot(storage_by_population(x, p));
  }
  double sigma(const Vector& x, const Vector& p) const { return sigma_by_population(x, p).sum(); }
  double sigma(const Vector& x, const Vector& p, const Vector& weights) const {
    return weights_checked(weights).dot(sigma_by_population(x, p));
  }

  StorageGradients storage_gradients(const Vector& x, const Vector& p) const {
    return storage_gradients(x, p, Vector::Ones(structure_.populations()));
  }

  /// dS/dx_i = w^r sum_j int_0^{p_j - p_i} phi_j;
  /// dS/dp_k = w^r (sum_i x_i phi_k(p_k - p_i) - x_k sum_j phi_j(p_j - p_k)).
  StorageGradients storage_gradients(const Vector& x, const Vector& p,
                                     const Vector& weights) const {
    check(x, p);
    weights_checked(weights);
    StorageGradients g{Vector::Zero(x.size()), Vector::Zero(x.size())};
    for (int r = 0; r < structure_.populations(); ++r) {
      const int off = structure_.offset(r), k = structure_.count(r);
      for (int i = off; i < off + k; ++i) {
        g.dx(i) = weights(r) * integral_row(p, r, i);
        double gain = 0.0, loss = 0.0;
        for (int j = off; j < off + k; ++j) {
          gain += x(j) * rates_[i].rate(p(i) - p(j));
          loss += rates_[j].rate(p(j) - p(i));
        }
        g.dp(i) = weights(r) * (gain - x(i) * loss);
      }
    }
    return g;
  }

 private:
  // sum_j int_0^{p_j - p_i} phi_j over population r
  double integral_row(const Vector& p, int r, int i) const {
    const int off = structure_.offset(r), k = structure_.count(r);
    double acc = 0.0;
    for (int j = off; j < off + k; ++j) acc += rates_[j].integral(p(j) - p(i));
    return acc;
  }

  void check(const Vector& x, const Vector& p) const {
    structure_.require_length(x, "IPC state");
    structure_.require_length(p, "IPC payoff");
  }

  const Vector& weights_checked(const Vector& w) const {
    if (w.size() != structure_.populations()) {
      throw std::invalid_argument("IpcProtocol: one storage weight per population required");
    }
    return w;
  }

  PopulationStructure structure_;
  std::vector<SwitchRate> rates_;
};

/// An EDM together with a storage function and dissipation rate.
template <class E>
concept DissipativeEdm = requires(const E& e, const Vector& x, const Vector& p, const Vector& w) {
  { e.structure() } -> std::convertible_to<const PopulationStructure&>;
  { e.velocity(x, p) } -> std::convertible_to<Vector>;
  { e.storage(x, p, w) } -> std::convertible_to<double>;
  { e.sigma(x, p, w) } -> std::convertible_to<double>;
  { e.storage_gradients(x, p, w) } -> std::convertible_to<StorageGradients>;
};

/// Wraps an EDM and reports -sigma. Used only as a mutation check for the
/// dissipativity verifier.
template <DissipativeEdm E>
class SigmaSignFlip {
 public:
  explicit SigmaSignFlip(const E& inner) : inner_(inner) {}
  const PopulationStructure& structure() const { return inner_.structure(); }
  Vector velocity(const Vector& x, const Vector& p) const { return inner_.velocity(x, p); }
  double storage(const Vector& x, const Vector& p, const Vector& w) const {
    return inner_.storage(x, p, w);
  }
  double sigma(const Vector& x, const Vector& p, const Vector& w) const {
    return -inner_.sigma(x, p, w);
  }
  StorageGradients storage_gradients(const Vector& x, const Vector& p, const Vector& w) const {
    return inner_.storage_gradients(x, p, w);
  }

 private:
  const E& inner_;
};

/// Sum over populations of m^r max_i p_i^r - x^r . p^r. Zero exactly when x
/// is a best response to p.
inline double nash_gap(const PopulationStructure& s, const Vector& x, const Vector& p) {
  s.require_length(x, "nash_gap state");
  s.require_length(p, "nash_gap payoff");
  double gap = 0.0;
  for (int r = 0; r < s.populations(); ++r) {
    const auto pb = p.segment(s.offset(r), s.count(r));
    const auto xb = x.segment(s.offset(r), s.count(r));
    gap += s.mass(r) * pb.maxCoeff() - xb.dot(pb);
  }
  return std::max(gap, 0.0);
}

struct DissipativityOptions {
  int samples = 1000;
  std::uint64_t seed = 1;
  double magnitude = 3.0;               // scale of the normal p and u entries
  std::optional<Vector> weights;        // per-population storage weights
  double slack_tolerance = 1e-8;
  double sigma_zero = 1e-10;            // sigma/S "vanish" threshold
  double velocity_zero = 1e-8;          // ||nu|| "vanish" threshold
  int rest_point_every = 10;            // every k-th sample sits on a best response
};

struct DissipativityReport {
  int samples = 0;
  int inequality_violations = 0;
  int negativity_violations = 0;
  int equivalence_violations = 0;
  double worst_slack = std::numeric_limits<double>::infinity();  // min of rhs - lhs
  Vector worst_x, worst_p, worst_u;

  int violations() const {
    return inequality_violations + negativity_violations + equivalence_violations;
  }
  bool passed() const { return violations() == 0; }
};

namespace detail {
template <class Rng>
Vector normal_vector(int n, double scale, Rng& rng) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

/// All of each population's mass on its best strategy.
inline Vector best_response_state(const PopulationStructure& s, const Vector& p) {
  Vector x = Vector::Zero(s.strategies());
  for (int r = 0; r < s.populations(); ++r) {
    Eigen::Index best = 0;
    p.segment(s.offset(r), s.count(r)).maxCoeff(&best);
    x(s.offset(r) + static_cast<int>(best)) = s.mass(r);
  }
  return x;
}
}  // namespace detail

/// Samples (x, p, u) and checks
///   dS/dx nu + dS/dp u <= -sigma + [u; nu]^T Pi [u; nu]
/// together with S, sigma >= 0 and S = 0 <=> sigma = 0 <=> nu = 0.
template <DissipativeEdm E>
DissipativityReport verify_delta_dissipativity(const E& edm, const SupplyRate& pi,
                                               const DissipativityOptions& opts = {}) {
  const PopulationStructure& s = edm.structure();
  const int n = s.strategies();
  if (pi.n() != n) throw std::invalid_argument("verify_delta_dissipativity: Pi must be 2n x 2n");
  const Vector w = opts.weights.value_or(Vector::Ones(s.populations()));

  std::mt19937_64 rng(opts.seed);
  DissipativityReport rep;
  for (int k = 0; k < opts.samples; ++k) {
    Vector p = detail::normal_vector(n, opts.magnitude, rng);
    const Vector u = detail::normal_vector(n, opts.magnitude, rng);
    Vector x = sample_social_state(s, rng);
    if (opts.rest_point_every > 0 && k % opts.rest_point_every == opts.rest_point_every - 1) {
      x = detail::best_response_state(s, p);
    }

    const Vector nu = edm.velocity(x, p);
    const StorageGradients g = edm.storage_gradients(x, p, w);
    const double storage = edm.storage(x, p, w);
    const double sigma = edm.sigma(x, p, w);
    const double lhs = g.dx.dot(nu) + g.dp.dot(u);
    const double rhs = -sigma + pi.evaluate(u, nu);
    const double slack = rhs - lhs;

    ++rep.samples;
    if (slack < rep.worst_slack) {
      rep.worst_slack = slack;
      rep.worst_x = x;
      rep.worst_p = p;
      rep.worst_u = u;
    }
    if (slack < -opts.slack_tolerance) ++rep.inequality_violations;
    if (storage < -Tolerances::kEigenZero || sigma < -Tolerances::kEigenZero) {
      ++rep.negativity_violations;
    }
    const bool still = nu.norm() < opts.velocity_zero;
    if ((sigma < opts.sigma_zero) != still || (storage < opts.sigma_zero) != still) {
      ++rep.equivalence_violations;
    }
  }
  return rep;
}

}  // namespace popgame
