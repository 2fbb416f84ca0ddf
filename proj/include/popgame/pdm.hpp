#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

#include "popgame/games.hpp"
#include "popgame/numeric.hpp"
#include "popgame/population.hpp"
#include "popgame/supply_rate.hpp"

namespace popgame {

/// Dynamic payoff mechanism q' = f(q, x), p = h(q, x).
template <class D>
concept PayoffDynamics = requires(const D& d, const Vector& q, const Vector& x) {
  { d.structure() } -> std::convertible_to<const PopulationStructure&>;
  { d.state_dim() } -> std::convertible_to<int>;
  { d.f(q, x) } -> std::convertible_to<Vector>;
  { d.h(q, x) } -> std::convertible_to<Vector>;
  { d.admissible(q) } -> std::convertible_to<bool>;
  { d.steady_state_payoff(x) } -> std::convertible_to<Vector>;
};

/// A PDM with storage Q, dissipation varsigma and the partial derivatives
/// needed to evaluate the closed-loop Lyapunov derivative.
template <class D>
concept DissipativePdm = PayoffDynamics<D> && requires(const D& d, const Vector& q, const Vector& x) {
  { d.storage(q, x) } -> std::convertible_to<double>;
  { d.varsigma(q, x) } -> std::convertible_to<double>;
  { d.dQ_dq(q, x) } -> std::convertible_to<Vector>;
  { d.dQ_dx(q, x) } -> std::convertible_to<Vector>;
  { d.dh_dq(q, x) } -> std::convertible_to<Matrix>;
  { d.dh_dx(q, x) } -> std::convertible_to<Matrix>;
};

/// PDM assembled from user callables.
class GenericPdm {
 public:
  using StateMap = std::function<Vector(const Vector&, const Vector&)>;
  using StaticMap = std::function<Vector(const Vector&)>;

  GenericPdm(PopulationStructure structure, int state_dim, StateMap f, StateMap h, StaticMap steady)
      : structure_(std::move(structure)),
        dim_(state_dim),
        f_(std::move(f)),
        h_(std::move(h)),
        steady_(std::move(steady)) {
    if (dim_ < 0) throw std::invalid_argument("GenericPdm: negative state dimension");
    if (!f_ || !h_ || !steady_) throw std::invalid_argument("GenericPdm: f, h and F are required");
  }

  const PopulationStructure& structure() const { return structure_; }
  int state_dim() const { return dim_; }
  Vector f(const Vector& q, const Vector& x) const { return f_(q, x); }
  Vector h(const Vector& q, const Vector& x) const { return h_(q, x); }
  bool admissible(const Vector& q) const { return q.size() == dim_ && q.allFinite(); }
  Vector steady_state_payoff(const Vector& x) const { return steady_(x); }

 private:
  PopulationStructure structure_;
  int dim_;
  StateMap f_, h_;
  StaticMap steady_;
};

/// Steady-state consistency at one point: returns false only when
/// ||f(q,x)|| < rest_tol but ||h(q,x) - F(x)|| exceeds payoff_tol.
template <PayoffDynamics D>
bool steady_state_consistent(const D& pdm, const Vector& q, const Vector& x,
                             double rest_tol = 1e-10, double payoff_tol = 1e-8) {
  if (pdm.f(q, x).norm() >= rest_tol) return true;
  return (pdm.h(q, x) - pdm.steady_state_payoff(x)).norm() <= payoff_tol;
}

struct LegendreResult {
  double value = 0.0;  // phi*(q)
  Vector minimizer;    // z_bar with Phi(z_bar) = q
};

/// First-order smoothing of the mixed-autonomy payoff:
///   tau q' = -q + grad phi(z),  p = -[R; R] q,  z = [mu R^T  R^T] x,
/// where phi(z) = sum_l int_0^{z_l} Phi_l. q lives on prod_l [alpha_l, inf).
class SmoothingPdm {
 public:
  /// Slack below alpha_l still treated as admissible (floating-point rest
  /// points sit exactly on the boundary for unused links).
  static constexpr double kAdmissibleSlack = 1e-12;

  SmoothingPdm(MixedAutonomyGame game, double tau) : game_(std::move(game)), tau_(tau) {
    if (!(tau_ > 0.0) || !std::isfinite(tau_)) throw std::invalid_argument("smoothing PDM: tau must be positive");
    alpha_ = Vector(game_.links());
    for (int l = 0; l < game_.links(); ++l) alpha_(l) = game_.delays()[l].alpha();
  }

  const MixedAutonomyGame& game() const { return game_; }
  const PopulationStructure& structure() const { return game_.structure(); }
  int state_dim() const { return game_.links(); }
  double tau() const { return tau_; }
  const Vector& lower_bounds() const { return alpha_; }

  bool admissible(const Vector& q) const {
    if (q.size() != state_dim() || !q.allFinite()) return false;
    for (int l = 0; l < q.size(); ++l) {
      if (q(l) < alpha_(l) - kAdmissibleSlack * std::max(1.0, std::abs(alpha_(l)))) return false;
    }
    return true;
  }

  void require_admissible(const Vector& q) const {
    if (q.size() != state_dim()) {
      throw std::invalid_argument("smoothing PDM: q must have one entry per link");
    }
    if (!admissible(q)) throw std::domain_error("smoothing PDM: q below the delay floor alpha");
  }

  /// phi(z) = sum_l phi_l(z_l)
  double potential(const Vector& z) const {
    double v = 0.0;
    for (int l = 0; l < z.size(); ++l) v += game_.delays()[l].potential(z(l));
    return v;
  }

  /// q = grad phi(z(x)), the rest point of the q-dynamics for fixed x.
  Vector consistent_state(const Vector& x) const { return game_.link_delays(game_.link_flows(x)); }

  Vector f(const Vector& q, const Vector& x) const {
    require_admissible(q);
    return (consistent_state(x) - q) / tau_;
  }

  Vector h(const Vector& q) const {
    if (q.size() != state_dim()) throw std::invalid_argument("smoothing PDM: q has wrong length");
    return -game_.stacked_routing() * q;
  }
  Vector h(const Vector& q, const Vector&) const { return h(q); }

  Matrix dh_dq(const Vector&, const Vector&) const { return -game_.stacked_routing(); }
  Matrix dh_dx(const Vector&, const Vector&) const {
    return Matrix::Zero(structure().strategies(), structure().strategies());
  }

  Vector steady_state_payoff(const Vector& x) const { return game_.payoff(x); }

  /// phi*(q) = min_{y >= 0} phi(y) - q^T y, solved link by link via
  /// Phi_l(z_bar_l) = q_l.
  LegendreResult legendre_transform(const Vector& q) const {
    require_admissible(q);
    LegendreResult out{0.0, Vector(state_dim())};
    for (int l = 0; l < state_dim(); ++l) {
      const auto& d = game_.delays()[l];
      const double ql = std::max(q(l), alpha_(l));
      out.minimizer(l) = d.inverse(ql);
      out.value += d.potential(out.minimizer(l)) - q(l) * out.minimizer(l);
    }
    return out;
  }

  /// Q = (phi(z) - q^T z - phi*(q)) / tau
  double storage(const Vector& q, const Vector& x) const {
    const Vector z = game_.link_flows(x);
    const LegendreResult lt = legendre_transform(q);
    return (potential(z) - q.dot(z) - lt.value) / tau_;
  }

  /// varsigma = (z - z_bar)^T (grad phi(z) - grad phi(z_bar)) / tau^2
  double varsigma(const Vector& q, const Vector& x) const {
    const Vector z = game_.link_flows(x);
    const LegendreResult lt = legendre_transform(q);
    return (z - lt.minimizer).dot(game_.link_delays(z) - game_.link_delays(lt.minimizer)) /
           (tau_ * tau_);
  }

  /// dQ/dq = (z_bar - z) / tau, using grad phi*(q) = -z_bar.
  Vector dQ_dq(const Vector& q, const Vector& x) const {
    return (legendre_transform(q).minimizer - game_.link_flows(x)) / tau_;
  }

  /// dQ/dx = [mu R^T  R^T]^T (grad phi(z) - q) / tau.
  Vector dQ_dx(const Vector& q, const Vector& x) const {
    require_admissible(q);
    return game_.link_map().transpose() * (consistent_state(x) - q) / tau_;
  }

 private:
  MixedAutonomyGame game_;
  double tau_;
  Vector alpha_;
};

struct PdmDissipativityOptions {
  int samples = 1000;
  std::uint64_t seed = 1;
  double magnitude = 3.0;  // spread of q above alpha and of zeta
  double slack_tolerance = 1e-8;
  double fd_slack_tolerance = 1e-6;
  double identity_tolerance = 1e-8;
  double storage_zero = 1e-10;
  double rate_zero = 1e-8;
  int rest_point_every = 10;  // every k-th sample uses q = grad phi(z)
};

struct PdmDissipativityReport {
  int samples = 0;
  int inequality_violations = 0;     // analytic dQ/dq
  int fd_inequality_violations = 0;  // finite-difference dQ/dq
  int identity_violations = 0;       // |dQ/dx zeta + psi^T Pi psi|
  int negativity_violations = 0;
  int equivalence_violations = 0;
  double worst_slack = std::numeric_limits<double>::infinity();
  double worst_fd_slack = std::numeric_limits<double>::infinity();
  double worst_identity_residual = 0.0;
  double worst_fd_identity_residual = 0.0;

  int violations() const {
    return inequality_violations + fd_inequality_violations + identity_violations +
           negativity_violations + equivalence_violations;
  }
  bool passed() const { return violations() == 0; }
};

/// Samples (q, x, zeta in TX) and checks
///   dQ/dq f + dQ/dx zeta <= -varsigma - psi^T Pi psi,
///   psi = [dh/dq f + dh/dx zeta; zeta],
/// with both analytic and finite-difference dQ/dq, plus Q, varsigma >= 0 and
/// Q = 0 <=> varsigma = 0 <=> f = 0.
template <DissipativePdm D>
  requires requires(const D& d, const Vector& x) {
    { d.consistent_state(x) } -> std::convertible_to<Vector>;
    { d.lower_bounds() } -> std::convertible_to<Vector>;
  }
PdmDissipativityReport verify_pdm_dissipativity(const D& pdm, const SupplyRate& pi,
                                                const PdmDissipativityOptions& opts = {}) {
  const PopulationStructure& s = pdm.structure();
  const int n = s.strategies();
  const int o = pdm.state_dim();
  if (pi.n() != n) throw std::invalid_argument("verify_pdm_dissipativity: Pi must be 2n x 2n");

  std::mt19937_64 rng(opts.seed);
  std::exponential_distribution<double> expo(1.0 / opts.magnitude);
  std::normal_distribution<double> normal(0.0, opts.magnitude);

  PdmDissipativityReport rep;
  for (int k = 0; k < opts.samples; ++k) {
    const Vector x = sample_social_state(s, rng);
    Vector zeta = sample_tangent(s, rng) * opts.magnitude;
    Vector q(o);
    if (opts.rest_point_every > 0 && k % opts.rest_point_every == opts.rest_point_every - 1) {
      q = pdm.consistent_state(x);
    } else {
      // keep a finite-difference step away from the floor
      for (int l = 0; l < o; ++l) q(l) = pdm.lower_bounds()(l) + 1e-3 + expo(rng);
    }

    const Vector f = pdm.f(q, x);
    const Vector dqdq = pdm.dQ_dq(q, x);
    const Vector dqdx = pdm.dQ_dx(q, x);
    Vector psi(2 * n);
    psi << pdm.dh_dq(q, x) * f + pdm.dh_dx(q, x) * zeta, zeta;
    const double supply = psi.dot(pi.matrix() * psi);
    const double storage = pdm.storage(q, x);
    const double vs = pdm.varsigma(q, x);

    const double rhs = -vs - supply;
    const double slack = rhs - (dqdq.dot(f) + dqdx.dot(zeta));

    // central differences in q need q - h to stay admissible
    bool fd_ok = true;
    for (int l = 0; l < o; ++l) {
      fd_ok = fd_ok && q(l) - pdm.lower_bounds()(l) > 2.0 * numeric::fd_step(q(l));
    }
    double fd_slack = std::numeric_limits<double>::infinity();
    if (fd_ok) {
      const Vector dqdq_fd = numeric::fd_gradient(
          [&](const Vector& qq) { return pdm.storage(qq, x); }, q);
      fd_slack = rhs - (dqdq_fd.dot(f) + dqdx.dot(zeta));
    }

    const Vector dqdx_fd = numeric::fd_gradient(
        [&](const Vector& xx) { return pdm.storage(q, xx); }, x);
    const double identity = std::abs(dqdx.dot(zeta) + supply);
    const double fd_identity = std::abs(dqdx_fd.dot(zeta) + supply);

    ++rep.samples;
    rep.worst_slack = std::min(rep.worst_slack, slack);
    rep.worst_fd_slack = std::min(rep.worst_fd_slack, fd_slack);
    rep.worst_identity_residual = std::max(rep.worst_identity_residual, identity);
    rep.worst_fd_identity_residual = std::max(rep.worst_fd_identity_residual, fd_identity);
    if (slack < -opts.slack_tolerance) ++rep.inequality_violations;
    if (fd_slack < -opts.fd_slack_tolerance) ++rep.fd_inequality_violations;
    if (identity > opts.identity_tolerance) ++rep.identity_violations;
    if (storage < -Tolerances::kEigenZero || vs < -Tolerances::kEigenZero) ++rep.negativity_violations;
    const bool rest = f.norm() <= opts.rate_zero;
    if ((storage <= opts.storage_zero) != rest || (vs <= opts.storage_zero) != rest) {
      ++rep.equivalence_violations;
    }
  }
  return rep;
}

}  // namespace popgame
