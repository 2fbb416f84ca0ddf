#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "popgame/certify.hpp"
#include "popgame/edm.hpp"
#include "popgame/games.hpp"
#include "popgame/pdm.hpp"
#include "popgame/sim.hpp"

namespace popgame {

using json = nlohmann::json;

/// Malformed or inconsistent scenario file.
class SchemaError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using AnyGame = std::variant<MixedAutonomyGame, RoadSplitGame, GenericGame>;

/// "unit", "contraction" or an explicit per-population list.
struct WeightSpec {
  enum class Kind { kUnit, kContraction, kExplicit, kSearch } kind = Kind::kUnit;
  Vector values;
};

struct CertifySpec {
  WeightSpec weights{WeightSpec::Kind::kSearch, {}};
  CertifyOptions options{};
  int soundness_samples = 10000;
};

struct VerifySpec {
  int samples = 1000;
  double magnitude = 3.0;
  std::optional<WeightSpec> weights;  // defaults to the simulation weights
};

struct Scenario {
  std::string name;
  json raw;
  AnyGame game;
  double ipc_power = 1.0;  // 1 is Smith
  std::optional<double> tau{};
  std::optional<Vector> x0{};
  std::optional<Vector> q0{};
  double q_perturbation = 0.0;
  SimOptions sim{};
  std::optional<WeightSpec> sim_weights{};
  double converge_tol = 1e-6;
  double lyapunov_tol = 1e-7;
  CertifySpec certify{};
  VerifySpec verify{};
  std::uint64_t seed = 1;
  std::optional<std::string> output{};
  bool negate_sigma = false;

  const PopulationStructure& structure() const {
    return std::visit([](const auto& g) -> const PopulationStructure& { return g.structure(); }, game);
  }
  const MixedAutonomyGame* mixed_autonomy() const { return std::get_if<MixedAutonomyGame>(&game); }

  IpcProtocol protocol() const {
    if (ipc_power == 1.0) return IpcProtocol::smith(structure());
    return IpcProtocol(structure(), SwitchRate::power(ipc_power));
  }

  Vector resolve_weights(const WeightSpec& w) const {
    const int rho = structure().populations();
    switch (w.kind) {
      case WeightSpec::Kind::kUnit: return Vector::Ones(rho);
      case WeightSpec::Kind::kContraction:
        if (const auto* m = mixed_autonomy()) return m->contraction_weights();
        return Vector::Ones(rho);
      case WeightSpec::Kind::kExplicit:
        if (w.values.size() != rho) {
          throw SchemaError("weights: expected " + std::to_string(rho) + " entries, got " +
                            std::to_string(w.values.size()));
        }
        return w.values;
      case WeightSpec::Kind::kSearch: break;
    }
    throw SchemaError("weights: \"search\" is only valid under certify");
  }

  /// Storage weights of the simulated Lyapunov function.
  Vector simulation_weights() const {
    return resolve_weights(sim_weights.value_or(WeightSpec{WeightSpec::Kind::kContraction, {}}));
  }
};

namespace detail {

inline std::string line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

inline void allow_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw SchemaError(where + ": expected an object");
  std::set<std::string> ok(keys.begin(), keys.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!ok.count(it.key())) throw SchemaError(where + ": unknown key \"" + it.key() + "\"");
  }
}

inline const json& need(const json& j, const std::string& where, const char* key) {
  if (!j.contains(key)) throw SchemaError(where + ": missing \"" + key + "\"");
  return j.at(key);
}

inline double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw SchemaError(where + ": expected a number");
  return j.get<double>();
}

inline double number_or(const json& j, const char* key, const std::string& where, double fallback) {
  return j.contains(key) ? number(j.at(key), where + "." + key) : fallback;
}

inline int integer_or(const json& j, const char* key, const std::string& where, int fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw SchemaError(where + "." + key + ": expected an integer");
  return v.get<int>();
}

inline bool bool_or(const json& j, const char* key, const std::string& where, bool fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_boolean()) throw SchemaError(where + "." + key + ": expected true or false");
  return j.at(key).get<bool>();
}

inline Vector vector_of(const json& j, const std::string& where) {
  if (!j.is_array()) throw SchemaError(where + ": expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j[i], where);
  return v;
}

inline Matrix matrix_of(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw SchemaError(where + ": expected a non-empty array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) throw SchemaError(where + ": rows must be non-empty arrays");
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Vector row = vector_of(j[r], where);
    if (static_cast<std::size_t>(row.size()) != cols) throw SchemaError(where + ": ragged rows");
    m.row(static_cast<Eigen::Index>(r)) = row;
  }
  return m;
}

inline std::array<double, 2> pair_of(const json& j, const char* key, const std::string& where,
                                     std::optional<std::array<double, 2>> fallback = {}) {
  if (!j.contains(key)) {
    if (fallback) return *fallback;
    throw SchemaError(where + ": missing \"" + key + "\"");
  }
  const Vector v = vector_of(j.at(key), where + "." + key);
  if (v.size() != 2) throw SchemaError(where + "." + key + ": expected two entries");
  return {v(0), v(1)};
}

inline DelayFunction parse_delay(const json& j, const std::string& where) {
  const std::string type = need(j, where, "type").get<std::string>();
  if (type == "affine") {
    allow_keys(j, where, {"type", "a", "alpha"});
    return DelayFunction::affine(number(need(j, where, "a"), where + ".a"),
                                 number(need(j, where, "alpha"), where + ".alpha"));
  }
  if (type == "bpr") {
    allow_keys(j, where, {"type", "alpha", "beta", "capacity"});
    return DelayFunction::bpr(number(need(j, where, "alpha"), where + ".alpha"),
                              number_or(j, "beta", where, 0.15), number(need(j, where, "capacity"), where + ".capacity"));
  }
  throw SchemaError(where + ".type: unknown delay type \"" + type + "\"");
}

inline AnyGame parse_game(const json& g) {
  const std::string where = "game";
  if (!g.is_object()) throw SchemaError("game: expected an object");
  const json& t = need(g, where, "type");
  if (!t.is_string()) throw SchemaError("game.type: expected a string");
  const std::string type = t.get<std::string>();
  if (type == "mixed_autonomy") {
    allow_keys(g, where, {"type", "R", "delays", "mu", "od"});
    const Matrix r = matrix_of(need(g, where, "R"), "game.R");
    const json& dj = need(g, where, "delays");
    if (!dj.is_array()) throw SchemaError("game.delays: expected an array");
    std::vector<DelayFunction> delays;
    for (std::size_t l = 0; l < dj.size(); ++l) delays.push_back(parse_delay(dj[l], "game.delays[" + std::to_string(l) + "]"));
    std::vector<OdPair> od;
    if (g.contains("od")) {
      const json& oj = g.at("od");
      if (!oj.is_array()) throw SchemaError("game.od: expected an array");
      for (std::size_t k = 0; k < oj.size(); ++k) {
        const std::string w = "game.od[" + std::to_string(k) + "]";
        allow_keys(oj[k], w, {"routes", "mass_aut", "mass_reg"});
        od.push_back({integer_or(oj[k], "routes", w, 0), number_or(oj[k], "mass_aut", w, 1.0),
                      number_or(oj[k], "mass_reg", w, 1.0)});
      }
    } else {
      od.push_back({static_cast<int>(r.rows()), 1.0, 1.0});
    }
    return MixedAutonomyGame(r, delays, number(need(g, where, "mu"), "game.mu"), od);
  }
  if (type == "road_split") {
    allow_keys(g, where, {"type", "ct", "cc", "theta", "mass"});
    RoadSplitParams p;
    p.traversal = pair_of(g, "ct", where);
    p.crossing = pair_of(g, "cc", where);
    p.detour = pair_of(g, "theta", where, std::array<double, 2>{2.7, 2.7});
    p.mass = pair_of(g, "mass", where, std::array<double, 2>{0.5, 0.5});
    return RoadSplitGame(p);
  }
  if (type == "linear") {
    allow_keys(g, where, {"type", "populations", "A", "b"});
    const json& pj = need(g, where, "populations");
    if (!pj.is_array()) throw SchemaError("game.populations: expected an array");
    std::vector<int> counts;
    std::vector<double> masses;
    for (std::size_t r = 0; r < pj.size(); ++r) {
      const std::string w = "game.populations[" + std::to_string(r) + "]";
      allow_keys(pj[r], w, {"n", "mass"});
      counts.push_back(integer_or(pj[r], "n", w, 0));
      masses.push_back(number_or(pj[r], "mass", w, 1.0));
    }
    PopulationStructure s(counts, masses);
    const Matrix a = matrix_of(need(g, where, "A"), "game.A");
    const Vector b = g.contains("b") ? vector_of(g.at("b"), "game.b") : Vector(Vector::Zero(a.rows()));
    return linear_game(s, a, b);
  }
  throw SchemaError("game.type: unknown game \"" + type + "\"");
}

inline WeightSpec parse_weights(const json& j, const std::string& where, bool allow_search) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "unit") return {WeightSpec::Kind::kUnit, {}};
    if (s == "contraction") return {WeightSpec::Kind::kContraction, {}};
    if (s == "search" && allow_search) return {WeightSpec::Kind::kSearch, {}};
    throw SchemaError(where + ": unknown weight mode \"" + s + "\"");
  }
  return {WeightSpec::Kind::kExplicit, vector_of(j, where)};
}

}  // namespace detail

/// Parses and validates a scenario document. Throws SchemaError.
inline Scenario parse_scenario(const json& doc, std::string name = "scenario") {
  using namespace detail;
  allow_keys(doc, "scenario",
             {"name", "game", "edm", "pdm", "initial", "sim", "certify", "verify", "seed", "output", "test_hooks"});
  Scenario sc{name, doc, parse_game(need(doc, "scenario", "game"))};
  if (doc.contains("name")) sc.name = doc.at("name").get<std::string>();

  if (doc.contains("edm")) {
    const json& e = doc.at("edm");
    allow_keys(e, "edm", {"type", "phi", "exponent"});
    const std::string type = e.value("type", std::string("smith"));
    if (type == "smith") {
      sc.ipc_power = 1.0;
    } else if (type == "ipc") {
      if (e.value("phi", std::string("power")) != "power") throw SchemaError("edm.phi: only \"power\" is supported");
      sc.ipc_power = number_or(e, "exponent", "edm", 2.0);
      if (!(sc.ipc_power > 0.0)) throw SchemaError("edm.exponent: must be positive");
    } else {
      throw SchemaError("edm.type: unknown protocol \"" + type + "\"");
    }
  }

  if (doc.contains("pdm") && !doc.at("pdm").is_null()) {
    const json& p = doc.at("pdm");
    allow_keys(p, "pdm", {"type", "tau", "q0", "q0_perturbation"});
    const std::string type = p.value("type", std::string("smoothing"));
    if (type == "smoothing") {
      const MixedAutonomyGame* m = sc.mixed_autonomy();
      if (!m) throw SchemaError("pdm: the smoothing PDM needs a mixed_autonomy game");
      sc.tau = number(need(p, "pdm", "tau"), "pdm.tau");
      if (!(*sc.tau > 0.0)) throw SchemaError("pdm.tau: must be positive");
      if (p.contains("q0")) {
        const json& q = p.at("q0");
        if (q.is_string()) {
          if (q.get<std::string>() != "consistent") throw SchemaError("pdm.q0: expected \"consistent\" or an array");
        } else {
          sc.q0 = vector_of(q, "pdm.q0");
          if (sc.q0->size() != m->links()) throw SchemaError("pdm.q0: one entry per link required");
        }
      }
      sc.q_perturbation = number_or(p, "q0_perturbation", "pdm", 0.0);
    } else if (type != "memoryless") {
      throw SchemaError("pdm.type: unknown PDM \"" + type + "\"");
    }
  }

  const PopulationStructure& s = sc.structure();
  if (doc.contains("initial")) {
    const json& i = doc.at("initial");
    allow_keys(i, "initial", {"x"});
    if (i.contains("x")) {
      sc.x0 = vector_of(i.at("x"), "initial.x");
      if (sc.x0->size() != s.strategies()) {
        throw SchemaError("initial.x: expected " + std::to_string(s.strategies()) + " entries, got " +
                          std::to_string(sc.x0->size()));
      }
      if (auto why = social_state_violation(s, *sc.x0); !why.empty()) throw SchemaError("initial.x: " + why);
    }
  }

  if (doc.contains("sim")) {
    const json& j = doc.at("sim");
    allow_keys(j, "sim", {"horizon", "step", "stride", "converge_tol", "lyapunov_tol", "weights"});
    sc.sim.horizon = number_or(j, "horizon", "sim", sc.sim.horizon);
    sc.sim.step = number_or(j, "step", "sim", sc.sim.step);
    sc.sim.stride = integer_or(j, "stride", "sim", sc.sim.stride);
    sc.converge_tol = number_or(j, "converge_tol", "sim", sc.converge_tol);
    sc.lyapunov_tol = number_or(j, "lyapunov_tol", "sim", sc.lyapunov_tol);
    if (j.contains("weights")) sc.sim_weights = parse_weights(j.at("weights"), "sim.weights", false);
    if (!(sc.sim.step > 0.0)) throw SchemaError("sim.step: must be positive");
    if (!(sc.sim.horizon >= 0.0)) throw SchemaError("sim.horizon: must be >= 0");
    if (sc.sim.stride < 1) throw SchemaError("sim.stride: must be >= 1");
  }
  if (sc.sim_weights) sc.resolve_weights(*sc.sim_weights);

  if (doc.contains("certify")) {
    const json& j = doc.at("certify");
    allow_keys(j, "certify",
               {"weights", "margin", "semidefinite_tol", "iterations", "restarts", "grid_refine", "polish",
                "theta_min", "theta_max", "soundness_samples"});
    auto& o = sc.certify.options;
    if (j.contains("weights")) sc.certify.weights = parse_weights(j.at("weights"), "certify.weights", true);
    o.tolerances.margin = number_or(j, "margin", "certify", o.tolerances.margin);
    o.tolerances.semidefinite = number_or(j, "semidefinite_tol", "certify", o.tolerances.semidefinite);
    o.budget.iterations = integer_or(j, "iterations", "certify", o.budget.iterations);
    o.budget.restarts = integer_or(j, "restarts", "certify", o.budget.restarts);
    o.budget.grid_refine = bool_or(j, "grid_refine", "certify", o.budget.grid_refine);
    o.budget.polish = bool_or(j, "polish", "certify", o.budget.polish);
    o.theta_min = number_or(j, "theta_min", "certify", o.theta_min);
    o.theta_max = number_or(j, "theta_max", "certify", o.theta_max);
    sc.certify.soundness_samples = integer_or(j, "soundness_samples", "certify", sc.certify.soundness_samples);
    if (o.tolerances.margin < 0) throw SchemaError("certify.margin: must be >= 0");
    if (o.budget.iterations < 0 || o.budget.restarts < 1) throw SchemaError("certify: need iterations >= 0, restarts >= 1");
    if (!(o.theta_min > 0.0) || !(o.theta_max >= o.theta_min)) throw SchemaError("certify: need 0 < theta_min <= theta_max");
  }
  if (sc.certify.weights.kind != WeightSpec::Kind::kSearch) sc.resolve_weights(sc.certify.weights);

  if (doc.contains("verify")) {
    const json& j = doc.at("verify");
    allow_keys(j, "verify", {"samples", "magnitude", "weights"});
    sc.verify.samples = integer_or(j, "samples", "verify", sc.verify.samples);
    sc.verify.magnitude = number_or(j, "magnitude", "verify", sc.verify.magnitude);
    if (j.contains("weights")) {
      sc.verify.weights = parse_weights(j.at("weights"), "verify.weights", false);
      sc.resolve_weights(*sc.verify.weights);
    }
    if (sc.verify.samples < 1) throw SchemaError("verify.samples: must be >= 1");
  }

  if (doc.contains("seed")) {
    const json& j = doc.at("seed");
    if (!j.is_number_unsigned()) throw SchemaError("seed: expected a non-negative integer");
    sc.seed = j.get<std::uint64_t>();
  }
  if (doc.contains("output")) {
    if (!doc.at("output").is_string()) throw SchemaError("output: expected a directory path");
    sc.output = doc.at("output").get<std::string>();
  }
  if (doc.contains("test_hooks")) {
    const json& j = doc.at("test_hooks");
    allow_keys(j, "test_hooks", {"negate_sigma"});
    sc.negate_sigma = bool_or(j, "negate_sigma", "test_hooks", false);
  }
  return sc;
}

/// Parses JSON text; syntax errors report line and column.
inline Scenario parse_scenario_text(const std::string& text, std::string name = "scenario") {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("malformed JSON at " + detail::line_column(text, e.byte) + ": " + e.what());
  }
  try {
    return parse_scenario(doc, std::move(name));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("scenario: ") + e.what());
  } catch (const SchemaError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw SchemaError(e.what());
  }
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open scenario file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  std::string stem = path;
  if (auto slash = stem.find_last_of('/'); slash != std::string::npos) stem = stem.substr(slash + 1);
  if (auto dot = stem.rfind('.'); dot != std::string::npos) stem = stem.substr(0, dot);
  try {
    return parse_scenario_text(buf.str(), stem);
  } catch (const SchemaError& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Serialisation

inline json to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline json to_json(const Witness& w) {
  json j{{"zeta", to_json(w.zeta)}, {"condition", w.condition}, {"index", w.index}, {"value", w.value}};
  if (w.x) j["x"] = to_json(*w.x);
  if (w.gamma) j["gamma"] = to_json(*w.gamma);
  return j;
}

inline json to_json(const Certificate& c) {
  json j{{"verdict", verdict_name(c.verdict)},
         {"weights", to_json(c.weights)},
         {"omegas", to_json(c.omegas)},
         {"lambda_max", c.lambda_max},
         {"margin", c.margin},
         {"seed", c.seed},
         {"method", c.method},
         {"evaluations", c.evaluations}};
  if (c.witness) j["witness"] = to_json(*c.witness);
  return j;
}

}  // namespace popgame
