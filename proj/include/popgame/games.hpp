#pragma once

#include <cmath>
#include <array>
#include <concepts>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "popgame/delay.hpp"
#include "popgame/envelope.hpp"
#include "popgame/numeric.hpp"
#include "popgame/population.hpp"

namespace popgame {

/// A memoryless payoff mechanism p = F(x) with a Jacobian.
template <class G>
concept PopulationGame = requires(const G& g, const Vector& x) {
  { g.structure() } -> std::convertible_to<const PopulationStructure&>;
  { g.payoff(x) } -> std::convertible_to<Vector>;
  { g.jacobian(x) } -> std::convertible_to<Matrix>;
};

/// A game that can describe where its Jacobian lives.
template <class G>
concept EnvelopedGame = PopulationGame<G> && requires(const G& g) {
  { g.envelope() } -> std::convertible_to<std::optional<JacobianEnvelope>>;
};

struct OdPair {
  int routes = 1;
  double mass_aut = 1.0;
  double mass_reg = 1.0;
};

/// Congestion game with autonomous and regular vehicles sharing links.
///
/// x = [x_aut; x_reg] with the aut block holding one population per OD pair
/// followed by the reg block in the same order. Link load
/// z = mu R^T x_aut + R^T x_reg and p = -[R; R] Phi(z).
class MixedAutonomyGame {
 public:
  MixedAutonomyGame(Matrix routing, std::vector<DelayFunction> delays, double mu,
                    std::vector<OdPair> od)
      : routing_(std::move(routing)), delays_(std::move(delays)), mu_(mu), od_(std::move(od)) {
    if (!(mu_ > 0.0 && mu_ < 1.0)) throw std::invalid_argument("mixed autonomy: mu must lie in (0,1)");
    if (od_.empty()) throw std::invalid_argument("mixed autonomy: at least one OD pair required");
    if (static_cast<int>(delays_.size()) != routing_.cols()) {
      throw std::invalid_argument("mixed autonomy: one delay per link (column of R) required");
    }
    int total_routes = 0;
    std::vector<int> counts;
    std::vector<double> masses;
    for (const auto& o : od_) total_routes += o.routes;
    if (total_routes != routing_.rows()) {
      throw std::invalid_argument("mixed autonomy: OD route counts sum to " +
                                  std::to_string(total_routes) + " but R has " +
                                  std::to_string(routing_.rows()) + " rows");
    }
    for (int i = 0; i < routing_.rows(); ++i) {
      bool any = false;
      for (int l = 0; l < routing_.cols(); ++l) {
        const double v = routing_(i, l);
        if (v != 0.0 && v != 1.0) throw std::invalid_argument("mixed autonomy: R entries must be 0 or 1");
        any = any || v == 1.0;
      }
      if (!any) throw std::invalid_argument("mixed autonomy: route " + std::to_string(i) + " uses no link");
    }
    double total_mass = 0.0;
    for (const auto& o : od_) {
      counts.push_back(o.routes);
      masses.push_back(o.mass_aut);
      total_mass += o.mass_aut + o.mass_reg;
    }
    for (const auto& o : od_) {
      counts.push_back(o.routes);
      masses.push_back(o.mass_reg);
    }
    structure_ = PopulationStructure(counts, masses);
    for (std::size_t l = 0; l < delays_.size(); ++l) {
      if (!delays_[l].strictly_increasing_on(std::max(1.0, total_mass))) {
        throw std::invalid_argument("mixed autonomy: delay of link " + std::to_string(l) +
                                    " is not strictly increasing");
      }
    }
    const int n = routing_.rows();
    stacked_ = Matrix(2 * n, routing_.cols());
    stacked_ << routing_, routing_;
    link_map_ = Matrix(routing_.cols(), 2 * n);
    link_map_ << mu_ * routing_.transpose(), routing_.transpose();
  }

  const PopulationStructure& structure() const { return structure_; }
  int routes() const { return static_cast<int>(routing_.rows()); }
  int links() const { return static_cast<int>(routing_.cols()); }
  double mu() const { return mu_; }
  const Matrix& routing() const { return routing_; }
  const std::vector<DelayFunction>& delays() const { return delays_; }
  const std::vector<OdPair>& od_pairs() const { return od_; }

  /// [R; R], 2N x L.
  const Matrix& stacked_routing() const { return stacked_; }
  /// [mu R^T  R^T], L x 2N.
  const Matrix& link_map() const { return link_map_; }

  Vector link_flows(const Vector& x) const {
    structure_.require_length(x, "mixed autonomy state");
    return link_map_ * x;
  }

  /// grad phi(z) = (Phi_1(z_1), ..., Phi_L(z_L)).
  Vector link_delays(const Vector& z) const {
    Vector out(links());
    for (int l = 0; l < links(); ++l) out(l) = delays_[l].value(z(l));
    return out;
  }

  Vector payoff(const Vector& x) const { return -stacked_ * link_delays(link_flows(x)); }

  Matrix jacobian(const Vector& x) const {
    const Vector z = link_flows(x);
    Vector slopes(links());
    for (int l = 0; l < links(); ++l) slopes(l) = delays_[l].derivative(z(l));
    return -stacked_ * slopes.asDiagonal() * link_map_;
  }

  /// J(x) = sum_l Phi'_l(z_l) B_l with B_l = -[R_l; R_l][mu R_l^T  R_l^T].
  ConeEnvelope cone_envelope() const {
    ConeEnvelope env;
    for (int l = 0; l < links(); ++l) {
      env.generators.push_back(-stacked_.col(l) * link_map_.row(l));
    }
    return env;
  }

  std::optional<JacobianEnvelope> envelope() const { return JacobianEnvelope(cone_envelope()); }

  /// Per-population weights making W J symmetric: mu for autonomous, 1 for regular.
  Vector contraction_weights() const {
    Vector w(structure_.populations());
    const int g = static_cast<int>(od_.size());
    w.head(g).setConstant(mu_);
    w.tail(g).setOnes();
    return w;
  }

  Matrix weight_matrix() const { return structure_.expand_weights(contraction_weights()); }

 private:
  Matrix routing_;
  std::vector<DelayFunction> delays_;
  double mu_;
  std::vector<OdPair> od_;
  PopulationStructure structure_;
  Matrix stacked_;
  Matrix link_map_;
};

struct RoadSplitParams {
  std::array<double, 2> traversal{1.0, 1.0};  // c^t_1, c^t_2
  std::array<double, 2> crossing{1.0, 1.0};   // c^c_1, c^c_2
  std::array<double, 2> detour{2.7, 2.7};     // theta_1, theta_2
  std::array<double, 2> mass{0.5, 0.5};       // m^1 + m^2 = 1
};

/// Lane choice before a road split. x = (x_s^1, x_b^1, x_s^2, x_b^2): steadfast
/// and bypassing flow headed to branch 1 and branch 2.
class RoadSplitGame {
 public:
  explicit RoadSplitGame(RoadSplitParams params = {}) : p_(params) {
    for (int i = 0; i < 2; ++i) {
      if (!(p_.traversal[i] > 0.0) || !(p_.crossing[i] >= 0.0)) {
        throw std::invalid_argument(
            "road split: traversal costs must be positive and crossing costs nonnegative");
      }
      if (!(p_.detour[i] > 1.0)) throw std::invalid_argument("road split: detour factors must exceed 1");
      if (!(p_.mass[i] > 0.0)) throw std::invalid_argument("road split: masses must be positive");
    }
    if (std::abs(p_.mass[0] + p_.mass[1] - 1.0) > 1e-12) {
      throw std::invalid_argument("road split: masses must sum to 1");
    }
    structure_ = PopulationStructure({2, 2}, {p_.mass[0], p_.mass[1]});
  }

  const PopulationStructure& structure() const { return structure_; }
  const RoadSplitParams& params() const { return p_; }

  Vector payoff(const Vector& x) const {
    check(x);
    const auto& [ct1, ct2] = p_.traversal;
    const auto& [cc1, cc2] = p_.crossing;
    const auto& [th1, th2] = p_.detour;
    const double xs1 = x(0), xb1 = x(1), xs2 = x(2), xb2 = x(3);
    Vector f(4);
    f << ct1 * (xs1 + xb2) + cc1 * xb1 * (xs1 + xb2),
        ct2 * (xs2 + th1 * xb1) + cc2 * xb2 * (xs2 + xb1),
        ct2 * (xs2 + xb1) + cc2 * xb2 * (xs2 + xb1),
        ct1 * (xs1 + th2 * xb2) + cc1 * xb1 * (xs1 + xb2);
    return -f;
  }

  Matrix jacobian(const Vector& x) const {
    check(x);
    const auto& [ct1, ct2] = p_.traversal;
    const auto& [cc1, cc2] = p_.crossing;
    const auto& [th1, th2] = p_.detour;
    const double xs1 = x(0), xb1 = x(1), xs2 = x(2), xb2 = x(3);
    Matrix j(4, 4);
    j << ct1 + cc1 * xb1, cc1 * (xs1 + xb2), 0, ct1 + cc1 * xb1,
        0, ct2 * th1 + cc2 * xb2, ct2 + cc2 * xb2, cc2 * (xs2 + xb1),
        0, ct2 + cc2 * xb2, ct2 + cc2 * xb2, cc2 * (xs2 + xb1),
        ct1 + cc1 * xb1, cc1 * (xs1 + xb2), 0, ct1 * th2 + cc1 * xb1;
    return -j;
  }

  /// Box description with d = 4 and gamma = x (every coordinate lies in [0,1]
  /// because the total flow is normalised to 1).
  BoxEnvelope box_envelope() const {
    const auto& [ct1, ct2] = p_.traversal;
    const auto& [cc1, cc2] = p_.crossing;
    const auto& [th1, th2] = p_.detour;
    const Matrix e = Matrix::Identity(4, 4);
    const Vector e14 = e.col(0) + e.col(3);
    const Vector e23 = e.col(1) + e.col(2);
    auto cols = [](const Vector& a, const Vector& b) {
      Matrix m(a.size(), 2);
      m << a, b;
      return m;
    };

    BoxEnvelope box;
    box.g0 = Matrix(4, 4);
    box.g0 << ct1, 0, 0, ct1,
        0, ct2 * th1, ct2, 0,
        0, ct2, ct2, 0,
        ct1, 0, 0, ct1 * th2;
    box.g0 = -box.g0;
    box.terms.push_back({-Matrix(e14), Matrix(cc1 * e.col(1))});
    box.terms.push_back({-cols(e14, e23), cols(cc1 * e14, cc2 * e.col(3))});
    box.terms.push_back({-Matrix(e23), Matrix(cc2 * e.col(3))});
    box.terms.push_back({-cols(e14, e23), cols(cc1 * e.col(1), cc2 * e23)});
    return box;
  }

  /// Box coefficients of J(x): gamma = (x_s^1, x_b^1, x_s^2, x_b^2).
  Vector box_coefficients(const Vector& x) const {
    check(x);
    return x;
  }

  std::optional<JacobianEnvelope> envelope() const { return JacobianEnvelope(box_envelope()); }

 private:
  void check(const Vector& x) const {
    if (x.size() != 4) throw std::invalid_argument("road split: state must have 4 entries");
  }

  RoadSplitParams p_;
  PopulationStructure structure_;
};

/// User-supplied payoff map with an optional Jacobian (central finite
/// differences otherwise) and optional envelope.
class GenericGame {
 public:
  using PayoffFn = std::function<Vector(const Vector&)>;
  using JacobianFn = std::function<Matrix(const Vector&)>;

  static constexpr double kMismatchWarning = 1e-3;

  GenericGame(PopulationStructure structure, PayoffFn payoff,
              std::optional<JacobianFn> jacobian = std::nullopt,
              std::optional<JacobianEnvelope> envelope = std::nullopt)
      : structure_(std::move(structure)),
        payoff_(std::move(payoff)),
        jacobian_(std::move(jacobian)),
        envelope_(std::move(envelope)) {
    if (!payoff_) throw std::invalid_argument("generic game: payoff map required");
    if (envelope_) validate_envelope(*envelope_, structure_.strategies());
    const Vector x = barycenter(structure_);
    if (payoff_(x).size() != structure_.strategies()) {
      throw std::invalid_argument("generic game: payoff map returns the wrong length");
    }
    if (jacobian_) {
      const double mismatch = jacobian_mismatch(x);
      if (mismatch > kMismatchWarning) {
        warnings_.push_back("Jacobian differs from finite differences by " +
                            std::to_string(mismatch) + " (relative) at the barycenter");
      }
    }
  }

  const PopulationStructure& structure() const { return structure_; }

  Vector payoff(const Vector& x) const {
    structure_.require_length(x, "generic game state");
    return payoff_(x);
  }

  Matrix jacobian(const Vector& x) const {
    structure_.require_length(x, "generic game state");
    if (jacobian_) return (*jacobian_)(x);
    return numeric::fd_jacobian(payoff_, x);
  }

  bool has_analytic_jacobian() const { return jacobian_.has_value(); }
  std::optional<JacobianEnvelope> envelope() const { return envelope_; }

  /// max |J - J_fd| / max(1, max |J_fd|)
  double jacobian_mismatch(const Vector& x) const {
    const Matrix fd = numeric::fd_jacobian(payoff_, x);
    const Matrix j = jacobian(x);
    return (j - fd).cwiseAbs().maxCoeff() / std::max(1.0, fd.cwiseAbs().maxCoeff());
  }

  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  PopulationStructure structure_;
  PayoffFn payoff_;
  std::optional<JacobianFn> jacobian_;
  std::optional<JacobianEnvelope> envelope_;
  std::vector<std::string> warnings_;
};

inline GenericGame generic_game(PopulationStructure structure, GenericGame::PayoffFn payoff,
                                std::optional<GenericGame::JacobianFn> jacobian = std::nullopt,
                                std::optional<JacobianEnvelope> envelope = std::nullopt) {
  return GenericGame(std::move(structure), std::move(payoff), std::move(jacobian),
                     std::move(envelope));
}

/// F(x) = A x + b, whose Jacobian A is also its (single-vertex) envelope.
inline GenericGame linear_game(PopulationStructure structure, const Matrix& a, const Vector& b) {
  const int n = structure.strategies();
  if (a.rows() != n || a.cols() != n || b.size() != n) {
    throw std::invalid_argument("linear game: A must be n x n and b length n");
  }
  return GenericGame(
      std::move(structure), [a, b](const Vector& x) -> Vector { return a * x + b; },
      [a](const Vector&) -> Matrix { return a; }, JacobianEnvelope(ConvHullEnvelope{{a}}));
}

}  // namespace popgame
