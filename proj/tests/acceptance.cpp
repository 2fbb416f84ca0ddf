// Runs the acceptance criteria and prints one PASS/FAIL line per criterion.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "popgame/app.hpp"

using namespace popgame;
namespace fs = std::filesystem;

namespace {

const std::string kScenarios = POPGAME_SCENARIO_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) out(i++) = d;
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("popgame_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

MixedAutonomyGame two_link() {
  return MixedAutonomyGame(Matrix::Identity(2, 2), {DelayFunction::affine(1, 1), DelayFunction::affine(1, 1)}, 0.5,
                           {{2, 1.0, 1.0}});
}

MixedAutonomyGame bpr_network() {
  Matrix r(3, 3);
  r << 1, 0, 1,
      0, 1, 1,
      1, 1, 0;
  return MixedAutonomyGame(r,
                           {DelayFunction::bpr(1.0, 0.15, 1.0), DelayFunction::bpr(2.0, 0.5, 0.5),
                            DelayFunction::affine(0.7, 0.3)},
                           0.6, {{3, 1.0, 0.8}});
}

Outcome road_split_lmi() {
  const Scenario sc = load_scenario(kScenarios + "/road_split.json");
  const RoadSplitGame& g = std::get<RoadSplitGame>(sc.game);
  const fs::path out = scratch("c1");
  std::ostringstream log;
  const auto start = std::chrono::steady_clock::now();
  const int code = app::cmd_certify(sc, out, log);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const json c = json::parse(slurp(out / "certificate.json"));
  Certificate cert;
  cert.verdict = Verdict::kCertified;
  cert.weights = Vector::Ones(2);
  cert.omegas = Vector(c["omegas"].size());
  for (std::size_t i = 0; i < c["omegas"].size(); ++i) cert.omegas(i) = c["omegas"][i].get<double>();
  const Certificate again = reverify(cert, g.box_envelope(), g.structure(), sc.certify.options.tolerances, std::nullopt);
  const bool positive = cert.omegas.size() == 4 && (cert.omegas.array() > 0.0).all();
  // independent eigenvalue of the deflated Scheck matrix
  const SupplyRate pi = SupplyRate::delta_passive(g.structure());
  const BoxEnvelope box = g.box_envelope();
  const Matrix P = tangent_projection(g.structure());
  const Matrix basis = scheck_basis(P, box);
  const double lam =
      sym_eig(basis.transpose() * assemble_scheck(pi, box, P, cert.omegas) * basis).values.maxCoeff();
  return {code == 0 && positive && lam <= -1e-8 && again.certified() && secs < 10.0,
          "lambda_max=" + fmt(lam) + " omega>0=" + (positive ? "yes" : "no") + " time=" + fmt(secs) + "s"};
}

Outcome mixed_autonomy_cone() {
  const MixedAutonomyGame g = two_link();
  const Matrix P = tangent_projection(g.structure());
  const ConeEnvelope cone = g.cone_envelope();
  const Certificate weighted =
      check_cone(SupplyRate::delta_passive(g.structure(), g.contraction_weights()), cone, P, 1e-9);
  const Vector w = g.contraction_weights();
  const bool w_ok = std::abs(w(0) - 0.5) <= 1e-15 && w(1) == 1.0;
  const SupplyRate unit = SupplyRate::delta_passive(g.structure());
  const Certificate plain = check_cone(unit, cone, P, 1e-9);
  const bool witnessed = plain.verdict == Verdict::kRefuted && plain.witness && plain.witness->value > 1e-9;
  // the hand-derived direction a = 1, b = -0.75
  const Vector zeta = vec({1, -1, -0.75, 0.75});
  double hand = -std::numeric_limits<double>::infinity();
  for (const Matrix& b : cone.generators) hand = std::max(hand, unit.evaluate(b * zeta, zeta));
  return {weighted.certified() && w_ok && witnessed && hand > 1e-9,
          "weighted lambda_max=" + fmt(weighted.lambda_max) + " unweighted=" + verdict_name(plain.verdict) +
              " hand witness value=" + fmt(hand)};
}

Outcome smith_convergence() {
  const MixedAutonomyGame g = two_link();
  const IpcProtocol smith = IpcProtocol::smith(g.structure());
  SimOptions o;
  o.horizon = 200;
  o.step = 1e-2;
  o.weights = g.contraction_weights();
  std::mt19937_64 rng(2024);
  double worst_gap = 0.0;
  int flags = 0, runs = 0;
  while (runs < 10) {
    const Vector x0 = sample_social_state(g.structure(), rng);
    if (x0.minCoeff() < 1e-3) continue;
    ++runs;
    const Trajectory tr = integrate_memoryless(g, smith, x0, o);
    worst_gap = std::max(worst_gap, tr.nash_gaps.back());
    flags += lyapunov_monitor(tr, 1e-7).flags();
  }
  return {worst_gap < 1e-6 && flags == 0, "worst gap=" + fmt(worst_gap) + " flags=" + std::to_string(flags)};
}

Outcome smoothing_convergence() {
  const MixedAutonomyGame g = two_link();
  const IpcProtocol smith = IpcProtocol::smith(g.structure());
  const Vector x0 = vec({0.9, 0.1, 0.2, 0.8});
  SimOptions o;
  o.horizon = 500;
  o.step = 1e-2;
  o.weights = g.contraction_weights();
  double worst = 0.0;
  int flags = 0;
  for (double tau : {0.5, 1.0, 2.0}) {
    const SmoothingPdm pdm(g, tau);
    const Vector q = pdm.consistent_state(x0);
    for (const Vector& q0 : {q, Vector(q.array() + 1.0)}) {
      const Trajectory tr = integrate_closed_loop(pdm, smith, x0, q0, o);
      worst = std::max(worst, tr.velocity_norms.back() + tr.pdm_rate_norms.back());
      flags += lyapunov_monitor(tr, 1e-7).flags();
    }
  }
  return {worst < 1e-6 && flags == 0, "worst |nu|+|f|=" + fmt(worst) + " flags=" + std::to_string(flags)};
}

Outcome delta_dissipativity() {
  const PopulationStructure s({3, 2}, {1.0, 2.0});
  DissipativityOptions o;
  o.samples = 10000;
  o.slack_tolerance = 1e-8;
  o.sigma_zero = 1e-10;
  o.velocity_zero = 1e-8;
  const SupplyRate pi = SupplyRate::delta_passive(s);
  const DissipativityReport a = verify_delta_dissipativity(IpcProtocol::smith(s), pi, o);
  const DissipativityReport b = verify_delta_dissipativity(IpcProtocol(s, SwitchRate::power(2.0)), pi, o);
  return {a.passed() && b.passed() && a.samples == 10000 && b.samples == 10000,
          "smith violations=" + std::to_string(a.violations()) + " power2 violations=" +
              std::to_string(b.violations()) + " worst slack=" + fmt(std::min(a.worst_slack, b.worst_slack))};
}

Outcome pdm_identity() {
  int violations = 0;
  double residual = 0.0, fd_slack = std::numeric_limits<double>::infinity();
  for (const MixedAutonomyGame& g : {two_link(), bpr_network()}) {
    const SmoothingPdm pdm(g, 0.8);
    PdmDissipativityOptions o;
    o.samples = 10000;
    o.identity_tolerance = 1e-8;
    o.fd_slack_tolerance = 1e-6;
    const PdmDissipativityReport r =
        verify_pdm_dissipativity(pdm, SupplyRate::delta_passive(g.structure(), g.contraction_weights()), o);
    violations += r.violations() + (r.samples == 10000 ? 0 : 1);
    residual = std::max(residual, r.worst_identity_residual);
    fd_slack = std::min(fd_slack, r.worst_fd_slack);
  }
  return {violations == 0, "identity residual=" + fmt(residual) + " worst fd slack=" + fmt(fd_slack) +
                               " violations=" + std::to_string(violations)};
}

Outcome sproc_soundness() {
  const Scenario sc = load_scenario(kScenarios + "/road_split.json");
  const RoadSplitGame& g = std::get<RoadSplitGame>(sc.game);
  const Certificate c = app::certify(sc);
  if (!c.certified()) return {false, "no certificate issued"};
  const SupplyRate pi = SupplyRate::delta_passive(g.structure(), c.weights);
  const BoxEnvelope box = g.box_envelope();
  const SoundnessReport r = sproc_soundness_check(c, box, pi, g.structure(), 10000, 7, 1e-8);
  const std::vector<Matrix> corners = box.corners();
  const Certificate hull = check_convhull(pi, {corners}, tangent_projection(g.structure()), 0.0);
  return {r.passed() && r.samples == 10000 && corners.size() == 16 && hull.certified(),
          "worst sample=" + fmt(r.worst) + " corners=" + std::to_string(corners.size()) +
              " convhull=" + verdict_name(hull.verdict)};
}

Outcome numerical_kernels() {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 1.0);
  double eig_residual = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    Matrix m(50, 50);
    for (int i = 0; i < 50; ++i)
      for (int j = 0; j < 50; ++j) m(i, j) = normal(rng);
    m = symmetrize(m);
    const SymEig e = sym_eig(m);
    const double scale = std::max(1.0, m.norm());
    eig_residual = std::max(eig_residual, (m * e.vectors - e.vectors * e.values.asDiagonal()).norm() / scale);
  }

  const SmoothingPdm pdm(bpr_network(), 1.0);
  std::exponential_distribution<double> expo(0.5);
  double legendre_residual = 0.0;
  for (int k = 0; k < 1000; ++k) {
    Vector q(3);
    for (int l = 0; l < 3; ++l) q(l) = pdm.lower_bounds()(l) + expo(rng);
    const Vector z = pdm.legendre_transform(q).minimizer;
    for (int l = 0; l < 3; ++l) {
      legendre_residual = std::max(legendre_residual, std::abs(pdm.game().delays()[l].value(z(l)) - q(l)));
    }
  }

  const GenericGame g = linear_game(PopulationStructure({2}, {1.0}), -Matrix::Identity(2, 2), Vector::Zero(2));
  const IpcProtocol smith = IpcProtocol::smith(g.structure());
  auto final_state = [&](double h) {
    SimOptions o;
    o.horizon = 1.0;
    o.step = h;
    o.stride = 1;
    return integrate_memoryless(g, smith, vec({0.9, 0.1}), o).states.back();
  };
  const Vector a = final_state(0.1), b = final_state(0.05), c = final_state(0.025);
  const double ratio = (a - b).norm() / (b - c).norm();
  return {eig_residual <= 1e-10 && legendre_residual <= 1e-10 && ratio >= 12.0 && ratio <= 20.0,
          "eig residual=" + fmt(eig_residual) + " legendre residual=" + fmt(legendre_residual) +
              " richardson=" + fmt(ratio)};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(POPGAME_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism() {
  const std::vector<std::string> names{"mixed_autonomy_2link", "mixed_autonomy_smoothing", "road_split"};
  std::string files;
  for (const auto& n : names) files += " " + kScenarios + "/" + n + ".json";
  const fs::path a = scratch("c9a"), b = scratch("c9b");
  for (const fs::path& out : {a, b}) {
    for (const char* cmd : {"simulate", "certify", "verify"}) {
      if (run_cli(std::string(cmd) + files + " --seed 5 --out " + out.string()) != 0) {
        return {false, std::string(cmd) + " exited nonzero"};
      }
    }
  }
  int compared = 0, differing = 0;
  for (const auto& n : names) {
    for (const char* f : {"trajectory.csv", "summary.json", "certificate.json", "verify.json"}) {
      ++compared;
      const fs::path pa = a / n / f, pb = b / n / f;
      if (!fs::exists(pa) || slurp(pa) != slurp(pb)) ++differing;
    }
  }
  return {differing == 0, std::to_string(compared) + " files compared, " + std::to_string(differing) + " differ"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"road-split LMI reproduction", road_split_lmi},
      {"weighted contraction certificate for mixed autonomy", mixed_autonomy_cone},
      {"convergence under Smith dynamics", smith_convergence},
      {"smoothing PDM convergence", smoothing_convergence},
      {"delta-dissipativity property suite", delta_dissipativity},
      {"PDM storage identity", pdm_identity},
      {"S-procedure soundness sampling", sproc_soundness},
      {"numerical kernels", numerical_kernels},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
