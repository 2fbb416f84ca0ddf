#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "popgame/envelope.hpp"
#include "popgame/games.hpp"
#include "popgame/linalg.hpp"
#include "popgame/solver.hpp"
#include "popgame/supply_rate.hpp"

namespace popgame {

enum class Verdict { kCertified, kRefuted, kInconclusive };

inline const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::kCertified: return "certified";
    case Verdict::kRefuted: return "refuted";
    default: return "inconclusive";
  }
}

/// A direction zeta (plus the state x or box coefficients gamma it was
/// evaluated at) whose quadratic form is positive.
struct Witness {
  Vector zeta;
  std::optional<Vector> x;
  std::optional<Vector> gamma;
  int index = -1;         // vertex / generator / block that failed
  std::string condition;  // "pointwise", "vertex", "generator", "pi22", "scheck", "corner"
  double value = 0.0;     // the quadratic form at zeta
};

struct Certificate {
  Verdict verdict = Verdict::kInconclusive;
  Vector weights;
  Vector omegas;
  double lambda_max = 0.0;  // worst tangent-restricted eigenvalue over all condition blocks
  double margin = 0.0;
  std::uint64_t seed = 0;
  std::optional<Witness> witness;
  std::string method;
  long evaluations = 0;

  bool certified() const { return verdict == Verdict::kCertified; }
};

/// Thrown when a condition needs Pi11 = 0 and the supply rate has Pi11 != 0.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when certification is requested for a game without an envelope.
class MissingEnvelope : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Pointwise check

struct PointwiseReport {
  int samples = 0;
  int violations = 0;
  double worst = -std::numeric_limits<double>::infinity();
  std::optional<Witness> witness;

  bool passed() const { return violations == 0; }
};

/// lambda_max(P sym([J;I]^T Pi [J;I]) P) at each sample, restricted to TX.
/// A sample counts as a violation when that value exceeds tol.
template <PopulationGame G>
PointwiseReport check_pointwise(const G& game, const SupplyRate& pi, const std::vector<Vector>& xs,
                                double tol = 1e-8) {
  const auto& s = game.structure();
  if (pi.n() != s.strategies()) throw std::invalid_argument("check_pointwise: supply rate size mismatch");
  const Matrix basis = tangent_basis(s);
  PointwiseReport rep;
  for (const auto& x : xs) {
    const Matrix m = pi.incremental_form(game.jacobian(x));
    const RestrictedEig top = restricted_max_eig(m, basis);
    ++rep.samples;
    if (top.value > tol) ++rep.violations;
    if (top.value > rep.worst) {
      rep.worst = top.value;
      if (top.value > tol) {
        rep.witness = Witness{top.direction, x, std::nullopt, rep.samples - 1, "pointwise",
                              top.direction.dot(m * top.direction)};
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Condition blocks

/// One matrix condition "sym(M) <= 0 on range(basis)".
struct ConditionBlock {
  std::string condition;
  int index = -1;
  Matrix matrix;  // full (ambient) matrix
  Matrix basis;   // orthonormal columns spanning the directions quantified over
  bool strict = false;
  std::optional<Vector> gamma;
};

struct BlockResult {
  std::string condition;
  int index = -1;
  bool strict = false;
  double lambda = 0.0;  // on range(basis)
  Vector direction;
  bool holds = false;
};

struct CheckTolerances {
  double margin = 1e-8;         // strict conditions: lambda <= -margin + 1e-12
  double semidefinite = 1e-10;  // semidefinite conditions: lambda <= semidefinite
};

inline BlockResult evaluate_block(const ConditionBlock& b, const CheckTolerances& tol) {
  const RestrictedEig top = restricted_max_eig(b.matrix, b.basis);
  BlockResult r{b.condition, b.index, b.strict, top.value, top.direction, false};
  r.holds = b.strict ? top.value <= -tol.margin + Tolerances::kEigenZero
                     : top.value <= tol.semidefinite;
  return r;
}

namespace detail {

inline void require_pi11_zero(const SupplyRate& pi, const char* who) {
  if (!pi.pi11_is_zero()) {
    throw PreconditionError(std::string(who) + ": requires Pi11 = 0");
  }
}

inline void require_size(const Matrix& P, const SupplyRate& pi, const char* who) {
  if (P.rows() != P.cols() || P.rows() != pi.n()) {
    throw std::invalid_argument(std::string(who) + ": projection and supply rate sizes differ");
  }
}

/// Vertex condition matrix Pi12^T A + A^T Pi12 + Pi22 (Pi11 = 0).
inline Matrix vertex_form(const SupplyRate& pi, const Matrix& a) {
  return symmetrize(pi.pi12().transpose() * a + a.transpose() * pi.pi12() + pi.pi22());
}

inline Matrix generator_form(const SupplyRate& pi, const Matrix& b) {
  return symmetrize(pi.pi12().transpose() * b + b.transpose() * pi.pi12());
}

inline Vector omega_expanded(const BoxEnvelope& box, const Vector& omega) {
  Vector diag(box.total_rank());
  int k = 0;
  for (int i = 0; i < box.d(); ++i) {
    diag.segment(k, box.terms[i].rank()).setConstant(omega(i));
    k += box.terms[i].rank();
  }
  return diag;
}

}  // namespace detail

/// The S-procedure matrix
///   [[P (Pi12^T G0 + G0^T Pi12 + Pi22) P,  P (Pi12^T C + D Omega)],
///    [(C^T Pi12 + Omega D^T) P,            -2 Omega            ]]
/// with C = [C_1..C_d], D = [D_1..D_d], Omega = blockdiag(omega_i I).
/// Linear in (Pi, omega); omega_i >= 0 is required here, strict positivity is
/// checked when a certificate is issued.
inline Matrix assemble_scheck(const SupplyRate& pi, const BoxEnvelope& box, const Matrix& P,
                              const Vector& omega) {
  detail::require_pi11_zero(pi, "assemble_scheck");
  detail::require_size(P, pi, "assemble_scheck");
  const int n = pi.n();
  validate_envelope(box, n);
  if (omega.size() != box.d()) throw std::invalid_argument("assemble_scheck: need one omega per box term");
  if ((omega.array() < 0.0).any()) throw std::invalid_argument("assemble_scheck: omega must be >= 0");
  const int k = box.total_rank();
  const Matrix c = box.stacked_c();
  const Matrix d = box.stacked_d();
  const Vector om = detail::omega_expanded(box, omega);
  const Matrix pi12 = pi.pi12();

  Matrix s = Matrix::Zero(n + k, n + k);
  s.topLeftCorner(n, n) = P * (pi12.transpose() * box.g0 + box.g0.transpose() * pi12 + pi.pi22()) * P;
  const Matrix off = P * (pi12.transpose() * c + d * om.asDiagonal());
  s.topRightCorner(n, k) = off;
  s.bottomLeftCorner(k, n) = off.transpose();
  s.bottomRightCorner(k, k) = (-2.0 * om).asDiagonal();
  return symmetrize(s);
}

/// Basis for the S-procedure matrix with the kernel of P deflated.
inline Matrix scheck_basis(const Matrix& P, const BoxEnvelope& box) {
  const int k = box.total_rank();
  return block_diagonal({projection_range_basis(P), Matrix::Identity(k, k)});
}

/// All condition blocks of an envelope for a given Pi (and omega for boxes).
inline std::vector<ConditionBlock> condition_blocks(const JacobianEnvelope& env, const SupplyRate& pi,
                                                    const Matrix& P, const Vector& omega = Vector()) {
  detail::require_pi11_zero(pi, "certify");
  detail::require_size(P, pi, "certify");
  validate_envelope(env, pi.n());
  const Matrix basis = projection_range_basis(P);
  std::vector<ConditionBlock> out;
  auto hull_blocks = [&](const ConvHullEnvelope& h) {
    for (std::size_t i = 0; i < h.vertices.size(); ++i) {
      out.push_back({"vertex", static_cast<int>(i), detail::vertex_form(pi, h.vertices[i]), basis, true, {}});
    }
  };
  auto cone_blocks = [&](const ConeEnvelope& c) {
    out.push_back({"pi22", -1, symmetrize(pi.pi22()), basis, false, {}});
    for (std::size_t i = 0; i < c.generators.size(); ++i) {
      out.push_back(
          {"generator", static_cast<int>(i), detail::generator_form(pi, c.generators[i]), basis, false, {}});
    }
  };
  std::visit(
      [&](const auto& e) {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, ConvHullEnvelope>) {
          hull_blocks(e);
        } else if constexpr (std::is_same_v<T, ConeEnvelope>) {
          cone_blocks(e);
        } else if constexpr (std::is_same_v<T, BoxEnvelope>) {
          const Vector om = omega.size() == 0 ? Vector::Zero(e.d()) : omega;
          out.push_back({"scheck", -1, assemble_scheck(pi, e, P, om), scheck_basis(P, e), true, {}});
        } else {
          hull_blocks(e.hull);
          cone_blocks(e.cone);
        }
      },
      env);
  return out;
}

struct ConditionSummary {
  std::vector<BlockResult> blocks;
  double lambda_max = -std::numeric_limits<double>::infinity();
  bool holds = true;
  std::optional<BlockResult> worst_failure;
};

inline ConditionSummary evaluate_conditions(const std::vector<ConditionBlock>& blocks,
                                            const CheckTolerances& tol) {
  ConditionSummary s;
  for (const auto& b : blocks) {
    BlockResult r = evaluate_block(b, tol);
    s.lambda_max = std::max(s.lambda_max, r.lambda);
    if (!r.holds) {
      s.holds = false;
      if (!s.worst_failure || r.lambda > s.worst_failure->lambda) s.worst_failure = r;
    }
    s.blocks.push_back(std::move(r));
  }
  return s;
}

namespace detail {

/// Builds a certificate from fixed multipliers. A failing block whose form is
/// positive refutes; a block that is merely not negative enough is
/// inconclusive.
inline Certificate certificate_from(const ConditionSummary& sum, const CheckTolerances& tol,
                                    const std::vector<ConditionBlock>& blocks, bool any_strict,
                                    std::string method) {
  Certificate c;
  c.method = std::move(method);
  c.lambda_max = sum.lambda_max;
  c.margin = any_strict ? tol.margin : 0.0;
  if (sum.holds) {
    c.verdict = Verdict::kCertified;
    return c;
  }
  const BlockResult& f = *sum.worst_failure;
  if (f.lambda > tol.semidefinite) {
    c.verdict = Verdict::kRefuted;
    const Matrix* m = nullptr;
    for (const auto& b : blocks) {
      if (b.condition == f.condition && b.index == f.index) m = &b.matrix;
    }
    const double value = m ? f.direction.dot(*m * f.direction) : f.lambda;
    c.witness = Witness{f.direction, std::nullopt, std::nullopt, f.index, f.condition, value};
  } else {
    c.verdict = Verdict::kInconclusive;
  }
  return c;
}

inline bool any_strict(const std::vector<ConditionBlock>& blocks) {
  return std::any_of(blocks.begin(), blocks.end(), [](const auto& b) { return b.strict; });
}

}  // namespace detail

/// Convex-hull condition: every vertex form strictly negative on TX.
inline Certificate check_convhull(const SupplyRate& pi, const ConvHullEnvelope& hull, const Matrix& P,
                                  double margin = 1e-8) {
  if (margin < 0) throw std::invalid_argument("check_convhull: margin must be >= 0");
  const auto blocks = condition_blocks(hull, pi, P);
  CheckTolerances tol{margin, 1e-10};
  if (margin == 0.0) {
    // Semidefinite variant used for corner cross-checks.
    std::vector<ConditionBlock> semi = blocks;
    for (auto& b : semi) b.strict = false;
    return detail::certificate_from(evaluate_conditions(semi, tol), tol, semi, false, "convhull");
  }
  return detail::certificate_from(evaluate_conditions(blocks, tol), tol, blocks, true, "convhull");
}

/// Conic condition: P Pi22 P <= 0 and P(Pi12^T B + B^T Pi12)P <= 0 for every
/// generator, both at semidefinite tolerance.
inline Certificate check_cone(const SupplyRate& pi, const ConeEnvelope& cone, const Matrix& P,
                              double semidefinite_tol = 1e-10) {
  const auto blocks = condition_blocks(cone, pi, P);
  CheckTolerances tol{0.0, semidefinite_tol};
  return detail::certificate_from(evaluate_conditions(blocks, tol), tol, blocks, false, "cone");
}

/// Convex-hull plus conic conditions for J in conv{A_i} + cone{B_i}.
inline Certificate check_sum(const SupplyRate& pi, const SumEnvelope& sum, const Matrix& P,
                             double margin = 1e-8, double semidefinite_tol = 1e-10) {
  const auto blocks = condition_blocks(sum, pi, P);
  CheckTolerances tol{margin, semidefinite_tol};
  return detail::certificate_from(evaluate_conditions(blocks, tol), tol, blocks, true, "sum");
}

/// Box condition with fixed omega.
inline Certificate check_box(const SupplyRate& pi, const BoxEnvelope& box, const Matrix& P,
                             const Vector& omega, double margin = 1e-8) {
  const auto blocks = condition_blocks(box, pi, P, omega);
  CheckTolerances tol{margin, 1e-10};
  Certificate c = detail::certificate_from(evaluate_conditions(blocks, tol), tol, blocks, true, "box");
  // A positive S-procedure matrix does not refute anything by itself.
  if (c.verdict == Verdict::kRefuted) {
    c.verdict = Verdict::kInconclusive;
    c.witness.reset();
  }
  if ((omega.array() <= 0.0).any() && c.verdict == Verdict::kCertified) c.verdict = Verdict::kInconclusive;
  c.omegas = omega;
  return c;
}

// ---------------------------------------------------------------------------
// Multiplier search

struct CertifyOptions {
  CheckTolerances tolerances{};
  SolverBudget budget{};
  double theta_min = 1e-9;
  double theta_max = 1e3;
  /// Fixed supply rate (Pi11 = 0). When unset the weighted delta-passive
  /// template Pi12 = W/2 is used.
  std::optional<SupplyRate> supply_rate;
  /// Fixed population weights for the template; searched when unset.
  std::optional<Vector> weights;
};

namespace detail {

/// Block-diagonal stack of every condition block compressed to its basis.
inline Matrix stacked_restricted(const std::vector<ConditionBlock>& blocks) {
  std::vector<Matrix> parts;
  for (const auto& b : blocks) parts.push_back(b.basis.transpose() * symmetrize(b.matrix) * b.basis);
  return block_diagonal(parts);
}

inline SupplyRate zero_rate(int n) { return SupplyRate(Matrix::Zero(2 * n, 2 * n)); }

}  // namespace detail

/// Searches multipliers theta = (w^2..w^rho, omega_1..omega_d) (w^1 fixed to 1
/// since the conditions are homogeneous in W) or only omega when Pi is fixed,
/// then normalises max w = 1 and re-verifies every block directly.
inline Certificate certify_weighted_contraction(const JacobianEnvelope& env, const PopulationStructure& s,
                                                const CertifyOptions& opts = {}) {
  const int n = s.strategies();
  const int rho = s.populations();
  validate_envelope(env, n);
  if (!(opts.theta_min > 0.0) || !(opts.theta_max >= opts.theta_min)) {
    throw std::invalid_argument("certify: need 0 < theta_min <= theta_max");
  }
  const Matrix P = tangent_projection(s);
  const BoxEnvelope* box = std::get_if<BoxEnvelope>(&env);
  const int d = box ? box->d() : 0;
  const bool search_w = !opts.supply_rate && !opts.weights;
  if (opts.weights && opts.weights->size() != rho) {
    throw std::invalid_argument("certify: need one weight per population");
  }
  if (opts.weights && (opts.weights->array() <= 0.0).any()) {
    throw std::invalid_argument("certify: weights must be positive");
  }

  auto rate_for = [&](const Vector& w) { return SupplyRate::delta_passive(s, w); };
  const SupplyRate base_rate =
      opts.supply_rate ? *opts.supply_rate
                       : rate_for(opts.weights ? *opts.weights : Vector(Vector::Unit(rho, 0)));
  const Vector no_omega = Vector::Zero(d);

  auto blocks_for = [&](const SupplyRate& pi, const Vector& omega) {
    return condition_blocks(env, pi, P, omega);
  };

  AffinePencil pencil;
  pencil.base = detail::stacked_restricted(blocks_for(base_rate, no_omega));
  if (search_w) {
    for (int r = 1; r < rho; ++r) {
      pencil.terms.push_back(detail::stacked_restricted(blocks_for(rate_for(Vector::Unit(rho, r)), no_omega)));
    }
  }
  for (int i = 0; i < d; ++i) {
    pencil.terms.push_back(detail::stacked_restricted(blocks_for(detail::zero_rate(n), Vector::Unit(d, i))));
  }
  const int nw = search_w ? rho - 1 : 0;

  Certificate cert;
  Vector theta = Vector::Zero(pencil.variables());
  if (pencil.variables() > 0) {
    SolverBudget budget = opts.budget;
    const bool strict = detail::any_strict(blocks_for(base_rate, no_omega));
    budget.stop_below = strict ? -opts.tolerances.margin - 1e-3 : -std::numeric_limits<double>::infinity();
    const Vector lower = Vector::Constant(pencil.variables(), opts.theta_min);
    const Vector upper = Vector::Constant(pencil.variables(), opts.theta_max);
    const SolveResult res = feasibility_solve(pencil, lower, upper, budget);
    theta = res.theta;
    cert.evaluations = res.evaluations;
  }

  Vector w = opts.weights ? *opts.weights : Vector::Ones(rho);
  if (search_w) w.tail(rho - 1) = theta.head(nw);
  Vector omega = theta.tail(d);
  double scale = 1.0;
  if (!opts.supply_rate) {
    scale = 1.0 / w.maxCoeff();
    if (search_w) {
      w *= scale;
      omega *= scale;
    }
  }

  const SupplyRate pi = opts.supply_rate ? *opts.supply_rate : rate_for(w);
  const auto blocks = blocks_for(pi, omega);
  const bool strict = detail::any_strict(blocks);
  const ConditionSummary sum = evaluate_conditions(blocks, opts.tolerances);
  Certificate checked = detail::certificate_from(sum, opts.tolerances, blocks, strict, envelope_name(env));
  checked.evaluations = cert.evaluations;
  checked.seed = opts.budget.seed;
  if (!opts.supply_rate) checked.weights = w;
  checked.omegas = omega;
  if ((omega.array() <= 0.0).any()) {
    if (checked.verdict == Verdict::kCertified) checked.verdict = Verdict::kInconclusive;
  }
  // With searched multipliers a failing block proves nothing.
  if (pencil.variables() > 0 && checked.verdict == Verdict::kRefuted) {
    checked.verdict = Verdict::kInconclusive;
    checked.witness.reset();
  }
  return checked;
}

/// Certifies a game through its envelope. For fixed multipliers that fail,
/// looks for a pointwise witness over the barycenter and random states.
template <EnvelopedGame G>
Certificate certify_game(const G& game, const CertifyOptions& opts = {}, int pointwise_samples = 200) {
  const auto env = game.envelope();
  if (!env) throw MissingEnvelope("certify: game has no Jacobian envelope");
  const auto& s = game.structure();
  Certificate cert = certify_weighted_contraction(*env, s, opts);
  if (cert.certified()) return cert;

  const bool fixed = opts.supply_rate || opts.weights;
  if (!fixed) return cert;
  const SupplyRate pi = opts.supply_rate ? *opts.supply_rate : SupplyRate::delta_passive(s, *opts.weights);
  std::mt19937_64 rng(opts.budget.seed);
  std::vector<Vector> xs{barycenter(s)};
  for (int k = 0; k < pointwise_samples; ++k) xs.push_back(sample_social_state(s, rng));
  const PointwiseReport rep = check_pointwise(game, pi, xs, opts.tolerances.semidefinite);
  if (rep.witness) {
    cert.verdict = Verdict::kRefuted;
    cert.witness = rep.witness;
  } else if (cert.verdict == Verdict::kRefuted) {
    // The envelope is conservative; no state actually violates the condition.
    cert.verdict = Verdict::kInconclusive;
  }
  return cert;
}

/// Recomputes the verdict from the stored multipliers alone.
inline Certificate reverify(const Certificate& cert, const JacobianEnvelope& env, const PopulationStructure& s,
                            const CheckTolerances& tol, const std::optional<SupplyRate>& fixed_rate = {}) {
  const Matrix P = tangent_projection(s);
  const SupplyRate pi = fixed_rate ? *fixed_rate : SupplyRate::delta_passive(s, cert.weights);
  const auto blocks = condition_blocks(env, pi, P, cert.omegas);
  Certificate out = detail::certificate_from(evaluate_conditions(blocks, tol), tol, blocks,
                                             detail::any_strict(blocks), envelope_name(env));
  out.weights = cert.weights;
  out.omegas = cert.omegas;
  out.seed = cert.seed;
  if (out.verdict == Verdict::kCertified && (cert.omegas.array() <= 0.0).any()) out.verdict = Verdict::kInconclusive;
  return out;
}

// ---------------------------------------------------------------------------
// S-procedure soundness sampling

struct SoundnessReport {
  int samples = 0;
  int violations = 0;
  double worst = -std::numeric_limits<double>::infinity();
  Vector worst_gamma;
  Vector worst_zeta;

  bool passed() const { return violations == 0; }
};

/// Samples gamma in [0,1]^d and unit zeta in TX and evaluates
/// zeta^T [J;I]^T Pi [J;I] zeta for J = G0 + sum gamma_i C_i D_i^T.
inline SoundnessReport sproc_soundness_check(const Certificate& cert, const BoxEnvelope& box,
                                             const SupplyRate& pi, const PopulationStructure& s,
                                             int samples = 10000, std::uint64_t seed = 1, double tol = 1e-8) {
  if (!cert.certified()) throw std::invalid_argument("sproc_soundness_check: certificate is not certified");
  validate_envelope(box, s.strategies());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SoundnessReport rep;
  for (int k = 0; k < samples; ++k) {
    Vector gamma(box.d());
    for (int i = 0; i < box.d(); ++i) gamma(i) = unit(rng);
    Vector zeta = sample_tangent(s, rng);
    const double norm = zeta.norm();
    if (norm == 0.0) continue;
    zeta /= norm;
    const Matrix j = box.at(gamma);
    const double value = pi.evaluate(j * zeta, zeta);
    ++rep.samples;
    if (value > tol) ++rep.violations;
    if (value > rep.worst) {
      rep.worst = value;
      rep.worst_gamma = gamma;
      rep.worst_zeta = zeta;
    }
  }
  return rep;
}

}  // namespace popgame
