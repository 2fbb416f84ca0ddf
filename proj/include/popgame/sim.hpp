#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "popgame/edm.hpp"
#include "popgame/games.hpp"
#include "popgame/pdm.hpp"

namespace popgame {

/// Integration gave up: non-finite state or the step shrank below the floor.
class NumericalAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimOptions {
  double horizon = 100.0;
  double step = 1e-2;
  int stride = 10;                 // store every stride-th step (and the last)
  int max_halvings = 20;
  double negativity = 1e-12;       // entries below -negativity reject the step
  double mass_drift = 1e-11;       // renormalise when a block mass drifts further
  std::optional<Vector> weights;   // storage weights of V; unit when unset
};

struct Trajectory {
  double step = 0.0;
  std::vector<double> times;
  std::vector<Vector> states;
  std::vector<Vector> pdm_states;  // empty for memoryless runs
  std::vector<Vector> payoffs;
  std::vector<double> lyapunov;
  std::vector<double> nash_gaps;
  std::vector<double> velocity_norms;
  std::vector<double> pdm_rate_norms;  // zeros for memoryless runs
  std::vector<double> lyapunov_rate;   // analytic dV/dt
  std::vector<double> dissipation;     // sigma (+ varsigma)

  bool has_pdm() const { return !pdm_states.empty(); }
  std::size_t size() const { return times.size(); }
};

namespace detail {

inline void renormalize(const PopulationStructure& s, Vector& x, double drift_tol) {
  for (int r = 0; r < s.populations(); ++r) {
    auto b = x.segment(s.offset(r), s.count(r));
    const double drift = s.mass(r) - b.sum();
    if (std::abs(drift) <= drift_tol) continue;
    const Vector shifted = b.array() + drift / s.count(r);
    if ((shifted.array() >= 0.0).all()) {
      b = shifted;
    } else {
      b = b.cwiseMax(0.0);
      const double sum = b.sum();
      if (!(sum > 0.0)) throw NumericalAbort("renormalisation: block " + std::to_string(r) + " has no mass");
      b *= s.mass(r) / sum;
    }
  }
}

inline void require_finite(const Vector& v, double t, const char* what) {
  if (!v.allFinite()) {
    throw NumericalAbort(std::string("non-finite ") + what + " at t = " + std::to_string(t));
  }
}

/// Shared RK4 driver on a stacked state y = [x; q]. `rhs` returns dy/dt,
/// `accept` decides whether a candidate is inside the domain, `record`
/// stores a sample.
template <class Rhs, class Accept, class Fix, class Record>
void rk4_drive(Vector y, const SimOptions& opts, Rhs&& rhs, Accept&& accept, Fix&& fix, Record&& record) {
  if (!(opts.step > 0.0) || !std::isfinite(opts.step)) throw std::invalid_argument("simulate: step must be positive");
  if (!(opts.horizon >= 0.0) || !std::isfinite(opts.horizon)) {
    throw std::invalid_argument("simulate: horizon must be >= 0");
  }
  if (opts.stride < 1) throw std::invalid_argument("simulate: stride must be >= 1");
  const long steps = std::lround(opts.horizon / opts.step);

  auto rk4 = [&](const Vector& y0, double t, double h) {
    const Vector k1 = rhs(y0, t);
    const Vector k2 = rhs(y0 + 0.5 * h * k1, t + 0.5 * h);
    const Vector k3 = rhs(y0 + 0.5 * h * k2, t + 0.5 * h);
    const Vector k4 = rhs(y0 + h * k3, t + h);
    return Vector(y0 + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
  };

  // Advances y over [t, t + h], splitting in halves when a candidate leaves the domain.
  std::function<void(Vector&, double, double, int)> advance = [&](Vector& state, double t, double h, int depth) {
    Vector cand;
    bool ok = false;
    try {
      cand = rk4(state, t, h);
      ok = cand.allFinite() && accept(cand);
    } catch (const std::domain_error&) {
      ok = false;  // stage evaluated outside the domain
    }
    if (ok) {
      fix(cand);
      state = cand;
      return;
    }
    if (depth >= opts.max_halvings) {
      if (!cand.allFinite()) throw NumericalAbort("non-finite state at t = " + std::to_string(t));
      throw NumericalAbort("step rejected below minimum size " + std::to_string(h) + " at t = " +
                           std::to_string(t));
    }
    advance(state, t, 0.5 * h, depth + 1);
    advance(state, t + 0.5 * h, 0.5 * h, depth + 1);
  };

  record(y, 0.0);
  for (long k = 1; k <= steps; ++k) {
    const double t = (k - 1) * opts.step;
    advance(y, t, opts.step, 0);
    if (k % opts.stride == 0 || k == steps) record(y, k * opts.step);
  }
}

inline bool nonnegative(const Vector& x, double tol) { return (x.array() >= -tol).all(); }

}  // namespace detail

/// x' = nu(x, F(x)) by fixed-step RK4, V = S_w(x, F(x)).
template <PopulationGame G, DissipativeEdm E>
Trajectory integrate_memoryless(const G& game, const E& edm, const Vector& x0, const SimOptions& opts = {}) {
  const auto& s = game.structure();
  if (!(edm.structure() == s)) throw std::invalid_argument("simulate: game and EDM structures differ");
  if (auto why = social_state_violation(s, x0); !why.empty()) {
    throw std::invalid_argument("simulate: x0 not in X: " + why);
  }
  const Vector w = opts.weights ? *opts.weights : Vector::Ones(s.populations());

  Trajectory tr;
  tr.step = opts.step;
  auto rhs = [&](const Vector& x, double) { return Vector(edm.velocity(x, game.payoff(x))); };
  auto accept = [&](const Vector& x) { return detail::nonnegative(x, opts.negativity); };
  auto fix = [&](Vector& x) { detail::renormalize(s, x, opts.mass_drift); };
  auto record = [&](const Vector& x, double t) {
    detail::require_finite(x, t, "state");
    const Vector p = game.payoff(x);
    const Vector nu = edm.velocity(x, p);
    const StorageGradients g = edm.storage_gradients(x, p, w);
    const double sigma = edm.sigma(x, p, w);
    tr.times.push_back(t);
    tr.states.push_back(x);
    tr.payoffs.push_back(p);
    tr.lyapunov.push_back(edm.storage(x, p, w));
    tr.nash_gaps.push_back(nash_gap(s, x, p));
    tr.velocity_norms.push_back(nu.norm());
    tr.pdm_rate_norms.push_back(0.0);
    tr.lyapunov_rate.push_back(g.dx.dot(nu) + g.dp.dot(game.jacobian(x) * nu));
    tr.dissipation.push_back(sigma);
  };
  detail::rk4_drive(x0, opts, rhs, accept, fix, record);
  return tr;
}

/// Joint RK4 on (x, q) with x' = nu(x, h(q, x)), q' = f(q, x) and
/// V = S_w(x, h(q, x)) + Q(q, x).
template <DissipativePdm D, DissipativeEdm E>
Trajectory integrate_closed_loop(const D& pdm, const E& edm, const Vector& x0, const Vector& q0,
                                 const SimOptions& opts = {}) {
  const auto& s = pdm.structure();
  if (!(edm.structure() == s)) throw std::invalid_argument("simulate: PDM and EDM structures differ");
  if (auto why = social_state_violation(s, x0); !why.empty()) {
    throw std::invalid_argument("simulate: x0 not in X: " + why);
  }
  if (q0.size() != pdm.state_dim()) throw std::invalid_argument("simulate: q0 has wrong length");
  if (!pdm.admissible(q0)) throw std::domain_error("simulate: q0 is not admissible");
  const int n = s.strategies(), m = pdm.state_dim();
  const Vector w = opts.weights ? *opts.weights : Vector::Ones(s.populations());

  Vector y0(n + m);
  y0 << x0, q0;
  Trajectory tr;
  tr.step = opts.step;
  auto rhs = [&](const Vector& y, double) {
    const Vector x = y.head(n), q = y.tail(m);
    Vector dy(n + m);
    dy << edm.velocity(x, pdm.h(q, x)), pdm.f(q, x);
    return dy;
  };
  auto accept = [&](const Vector& y) {
    return detail::nonnegative(y.head(n), opts.negativity) && pdm.admissible(y.tail(m));
  };
  auto fix = [&](Vector& y) {
    Vector x = y.head(n);
    detail::renormalize(s, x, opts.mass_drift);
    y.head(n) = x;
  };
  auto record = [&](const Vector& y, double t) {
    detail::require_finite(y, t, "state");
    const Vector x = y.head(n), q = y.tail(m);
    const Vector p = pdm.h(q, x);
    const Vector nu = edm.velocity(x, p);
    const Vector fq = pdm.f(q, x);
    const StorageGradients g = edm.storage_gradients(x, p, w);
    const Vector pdot = pdm.dh_dq(q, x) * fq + pdm.dh_dx(q, x) * nu;
    tr.times.push_back(t);
    tr.states.push_back(x);
    tr.pdm_states.push_back(q);
    tr.payoffs.push_back(p);
    tr.lyapunov.push_back(edm.storage(x, p, w) + pdm.storage(q, x));
    tr.nash_gaps.push_back(nash_gap(s, x, p));
    tr.velocity_norms.push_back(nu.norm());
    tr.pdm_rate_norms.push_back(fq.norm());
    tr.lyapunov_rate.push_back(g.dx.dot(nu) + g.dp.dot(pdot) + pdm.dQ_dq(q, x).dot(fq) +
                               pdm.dQ_dx(q, x).dot(nu));
    tr.dissipation.push_back(edm.sigma(x, p, w) + pdm.varsigma(q, x));
  };
  detail::rk4_drive(y0, opts, rhs, accept, fix, record);
  return tr;
}

struct LyapunovReport {
  int increase_flags = 0;
  int rate_flags = 0;
  double worst_increase = -std::numeric_limits<double>::infinity();
  double worst_rate_excess = -std::numeric_limits<double>::infinity();  // dV/dt + dissipation
  double effective_tolerance = 0.0;

  int flags() const { return increase_flags + rate_flags; }
  bool clean() const { return flags() == 0; }
};

/// Flags V(t_{k+1}) - V(t_k) > tol max(1, V(t_k)), with tol scaled by
/// max(1, (step / 0.01)^2), and samples where dV/dt > -dissipation + rate_tol.
inline LyapunovReport lyapunov_monitor(const Trajectory& tr, double tolerance = 1e-7, double rate_tol = 1e-6) {
  LyapunovReport rep;
  const double scale = tr.step > 0.0 ? std::max(1.0, std::pow(tr.step / 1e-2, 2)) : 1.0;
  rep.effective_tolerance = tolerance * scale;
  for (std::size_t k = 0; k + 1 < tr.lyapunov.size(); ++k) {
    const double inc = tr.lyapunov[k + 1] - tr.lyapunov[k];
    rep.worst_increase = std::max(rep.worst_increase, inc);
    if (inc > rep.effective_tolerance * std::max(1.0, tr.lyapunov[k])) ++rep.increase_flags;
  }
  for (std::size_t k = 0; k < tr.lyapunov_rate.size(); ++k) {
    const double excess = tr.lyapunov_rate[k] + tr.dissipation[k];
    rep.worst_rate_excess = std::max(rep.worst_rate_excess, excess);
    if (excess > rate_tol) ++rep.rate_flags;
  }
  return rep;
}

struct RestPoint {
  Vector x;
  std::optional<Vector> q;
  double nash_gap = 0.0;
};

/// Final sample if ||nu|| <= tol (and ||f|| <= tol) and its Nash gap is at
/// most 10 tol.
inline std::optional<RestPoint> detect_rest_point(const Trajectory& tr, double tol) {
  if (tr.size() == 0) throw std::invalid_argument("detect_rest_point: empty trajectory");
  const std::size_t k = tr.size() - 1;
  if (tr.velocity_norms[k] > tol || tr.pdm_rate_norms[k] > tol) return std::nullopt;
  if (tr.nash_gaps[k] > 10.0 * tol) return std::nullopt;
  RestPoint rp{tr.states[k], std::nullopt, tr.nash_gaps[k]};
  if (tr.has_pdm()) rp.q = tr.pdm_states[k];
  return rp;
}

}  // namespace popgame
