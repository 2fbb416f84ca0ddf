#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>

#include "popgame/scenario.hpp"

namespace popgame::app {

/// Exit codes shared by the subcommands.
enum ExitCode : int {
  kOk = 0,
  kRefuted = 1,      // certify: refuted; verify: violations found
  kSchema = 2,       // malformed scenario or missing envelope
  kNumerical = 3,    // integration aborted
  kInconclusive = 4  // certify: budget exhausted
};

struct SimulationRun {
  Trajectory trajectory;
  LyapunovReport lyapunov;
  bool converged = false;
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline Vector initial_state(const Scenario& sc) { return sc.x0.value_or(barycenter(sc.structure())); }

inline Vector initial_pdm_state(const Scenario& sc, const SmoothingPdm& pdm, const Vector& x0) {
  if (sc.q0) return *sc.q0;
  return Vector(pdm.consistent_state(x0).array() + sc.q_perturbation);
}

/// Runs the scenario's closed loop. Throws NumericalAbort on integration failure.
inline SimulationRun simulate(const Scenario& sc) {
  SimOptions opts = sc.sim;
  opts.weights = sc.simulation_weights();
  const IpcProtocol edm = sc.protocol();
  const Vector x0 = initial_state(sc);
  SimulationRun run;
  if (sc.tau) {
    const SmoothingPdm pdm(*sc.mixed_autonomy(), *sc.tau);
    const Vector q0 = initial_pdm_state(sc, pdm, x0);
    if (!pdm.admissible(q0)) throw SchemaError("initial.q: below the delay floor alpha");
    run.trajectory = integrate_closed_loop(pdm, edm, x0, q0, opts);
  } else {
    run.trajectory = std::visit([&](const auto& g) { return integrate_memoryless(g, edm, x0, opts); }, sc.game);
  }
  const Trajectory& tr = run.trajectory;
  run.lyapunov = lyapunov_monitor(tr, sc.lyapunov_tol);
  const std::size_t k = tr.size() - 1;
  run.converged = tr.nash_gaps[k] < sc.converge_tol &&
                  (!tr.has_pdm() || tr.velocity_norms[k] + tr.pdm_rate_norms[k] < sc.converge_tol);
  return run;
}

inline void write_csv(std::ostream& out, const Trajectory& tr) {
  const Eigen::Index n = tr.states.front().size();
  const Eigen::Index m = tr.has_pdm() ? tr.pdm_states.front().size() : 0;
  out << "t";
  for (Eigen::Index i = 1; i <= n; ++i) out << ",x_" << i;
  for (Eigen::Index l = 1; l <= m; ++l) out << ",q_" << l;
  for (Eigen::Index i = 1; i <= n; ++i) out << ",p_" << i;
  out << ",V,nash_gap\n";
  for (std::size_t k = 0; k < tr.size(); ++k) {
    out << format_double(tr.times[k]);
    for (Eigen::Index i = 0; i < n; ++i) out << ',' << format_double(tr.states[k](i));
    for (Eigen::Index l = 0; l < m; ++l) out << ',' << format_double(tr.pdm_states[k](l));
    for (Eigen::Index i = 0; i < n; ++i) out << ',' << format_double(tr.payoffs[k](i));
    out << ',' << format_double(tr.lyapunov[k]) << ',' << format_double(tr.nash_gaps[k]) << '\n';
  }
}

inline json summary_json(const SimulationRun& run) {
  const Trajectory& tr = run.trajectory;
  return json{{"converged", run.converged},
              {"final_nash_gap", tr.nash_gaps.back()},
              {"lyapunov_violations", run.lyapunov.flags()}};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

/// Like json::dump(2) but floats use 17 significant digits.
inline void dump17(std::ostream& out, const json& j, int depth = 0) {
  const std::string pad(2 * (depth + 1), ' '), close(2 * depth, ' ');
  switch (j.type()) {
    case json::value_t::number_float: {
      const double v = j.get<double>();
      out << (std::isfinite(v) ? format_double(v) : std::string("null"));
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out << "[]";
        return;
      }
      out << "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        out << pad;
        dump17(out, j[i], depth + 1);
        out << (i + 1 < j.size() ? ",\n" : "\n");
      }
      out << close << ']';
      return;
    }
    case json::value_t::object: {
      if (j.empty()) {
        out << "{}";
        return;
      }
      out << "{\n";
      std::size_t i = 0;
      for (auto it = j.begin(); it != j.end(); ++it, ++i) {
        out << pad << json(it.key()).dump() << ": ";
        dump17(out, it.value(), depth + 1);
        out << (i + 1 < j.size() ? ",\n" : "\n");
      }
      out << close << '}';
      return;
    }
    default: out << j.dump();
  }
}

inline std::string dump17(const json& j) {
  std::ostringstream out;
  dump17(out, j);
  return out.str();
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_text(path, dump17(j) + "\n"); }

inline int cmd_simulate(const Scenario& sc, const std::filesystem::path& out_dir, std::ostream& log) {
  SimulationRun run;
  try {
    run = simulate(sc);
  } catch (const NumericalAbort& e) {
    log << sc.name << ": numerical abort: " << e.what() << "\n";
    return kNumerical;
  }
  std::filesystem::create_directories(out_dir);
  std::ostringstream csv;
  write_csv(csv, run.trajectory);
  write_text(out_dir / "trajectory.csv", csv.str());
  write_json(out_dir / "summary.json", summary_json(run));
  log << sc.name << ": converged=" << (run.converged ? "true" : "false")
      << " final_nash_gap=" << format_double(run.trajectory.nash_gaps.back())
      << " lyapunov_violations=" << run.lyapunov.flags() << "\n";
  return kOk;
}

inline CertifyOptions certify_options(const Scenario& sc) {
  CertifyOptions o = sc.certify.options;
  o.budget.seed = sc.seed;
  if (sc.certify.weights.kind != WeightSpec::Kind::kSearch) o.weights = sc.resolve_weights(sc.certify.weights);
  return o;
}

inline Certificate certify(const Scenario& sc) {
  return std::visit(
      [&](const auto& g) -> Certificate {
        Certificate c = certify_game(g, certify_options(sc));
        c.seed = sc.seed;
        return c;
      },
      sc.game);
}

inline int exit_code(const Certificate& c) {
  switch (c.verdict) {
    case Verdict::kCertified: return kOk;
    case Verdict::kRefuted: return kRefuted;
    default: return kInconclusive;
  }
}

inline int cmd_certify(const Scenario& sc, const std::filesystem::path& out_dir, std::ostream& log) {
  Certificate c;
  try {
    c = certify(sc);
  } catch (const MissingEnvelope& e) {
    log << sc.name << ": " << e.what() << "\n";
    return kSchema;
  }
  std::filesystem::create_directories(out_dir);
  write_json(out_dir / "certificate.json", to_json(c));
  log << sc.name << ": " << verdict_name(c.verdict) << " lambda_max=" << format_double(c.lambda_max) << "\n";
  return exit_code(c);
}

inline json to_json(const DissipativityReport& r) {
  return json{{"samples", r.samples},
              {"inequality_violations", r.inequality_violations},
              {"negativity_violations", r.negativity_violations},
              {"equivalence_violations", r.equivalence_violations},
              {"worst_slack", r.worst_slack},
              {"passed", r.passed()}};
}

inline json to_json(const PdmDissipativityReport& r) {
  return json{{"samples", r.samples},
              {"inequality_violations", r.inequality_violations},
              {"fd_inequality_violations", r.fd_inequality_violations},
              {"identity_violations", r.identity_violations},
              {"negativity_violations", r.negativity_violations},
              {"equivalence_violations", r.equivalence_violations},
              {"worst_slack", r.worst_slack},
              {"worst_fd_slack", r.worst_fd_slack},
              {"worst_identity_residual", r.worst_identity_residual},
              {"passed", r.passed()}};
}

inline json to_json(const SoundnessReport& r) {
  return json{{"samples", r.samples}, {"violations", r.violations}, {"worst", r.worst}, {"passed", r.passed()}};
}

/// Sampling reports: EDM delta-dissipativity, PDM dissipativity (if any) and
/// S-procedure soundness for box games whose certificate is issued.
inline json verify(const Scenario& sc) {
  const Vector w = sc.verify.weights ? sc.resolve_weights(*sc.verify.weights) : sc.simulation_weights();
  const SupplyRate pi = SupplyRate::delta_passive(sc.structure(), w);
  const IpcProtocol edm = sc.protocol();
  DissipativityOptions eo;
  eo.samples = sc.verify.samples;
  eo.seed = sc.seed;
  eo.magnitude = sc.verify.magnitude;
  eo.weights = w;
  const DissipativityReport er = sc.negate_sigma ? verify_delta_dissipativity(SigmaSignFlip(edm), pi, eo)
                                                 : verify_delta_dissipativity(edm, pi, eo);
  json out{{"edm", to_json(er)}};
  int violations = er.violations();

  if (sc.tau) {
    const SmoothingPdm pdm(*sc.mixed_autonomy(), *sc.tau);
    PdmDissipativityOptions po;
    po.samples = sc.verify.samples;
    po.seed = sc.seed;
    po.magnitude = sc.verify.magnitude;
    const PdmDissipativityReport pr = verify_pdm_dissipativity(pdm, pi, po);
    out["pdm"] = to_json(pr);
    violations += pr.violations();
  }

  if (const auto* rs = std::get_if<RoadSplitGame>(&sc.game)) {
    const Certificate c = certify_game(*rs, certify_options(sc));
    if (c.certified()) {
      const SupplyRate cpi = SupplyRate::delta_passive(sc.structure(), c.weights);
      const SoundnessReport sr = sproc_soundness_check(c, rs->box_envelope(), cpi, sc.structure(),
                                                       sc.certify.soundness_samples, sc.seed);
      out["sproc"] = to_json(sr);
      violations += sr.violations;
    }
  }
  out["violations"] = violations;
  out["passed"] = violations == 0;
  return out;
}

inline int cmd_verify(const Scenario& sc, const std::filesystem::path& out_dir, std::ostream& log) {
  const json report = verify(sc);
  std::filesystem::create_directories(out_dir);
  write_json(out_dir / "verify.json", report);
  log << sc.name << ": violations=" << report["violations"].get<int>() << "\n";
  return report["passed"].get<bool>() ? kOk : kRefuted;
}

}  // namespace popgame::app
