#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "popgame/app.hpp"

using namespace popgame;
namespace fs = std::filesystem;

namespace {

const std::string kScenarios = POPGAME_SCENARIO_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("popgame_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_scenario(const fs::path& dir, const std::string& name, const std::string& text) {
  const fs::path p = dir / (name + ".json");
  std::ofstream(p) << text;
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(POPGAME_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kTwoLinkGame = R"("game": {"type": "mixed_autonomy", "R": [[1, 0], [0, 1]], "mu": 0.5,
  "delays": [{"type": "affine", "a": 1, "alpha": 1}, {"type": "affine", "a": 1, "alpha": 1}],
  "od": [{"routes": 2, "mass_aut": 1, "mass_reg": 1}]})";

}  // namespace

TEST(ParseScenario, BundledScenariosLoad) {
  for (const char* name : {"mixed_autonomy_2link", "mixed_autonomy_smoothing", "road_split"}) {
    const Scenario sc = load_scenario(kScenarios + "/" + name + ".json");
    EXPECT_EQ(sc.name, name);
    EXPECT_EQ(sc.seed, 1u);
  }
  const Scenario sm = load_scenario(kScenarios + "/mixed_autonomy_smoothing.json");
  ASSERT_TRUE(sm.tau.has_value());
  EXPECT_EQ(*sm.tau, 1.0);
  EXPECT_EQ(sm.q_perturbation, 1.0);
  EXPECT_EQ(sm.simulation_weights(), sm.mixed_autonomy()->contraction_weights());
}

TEST(ParseScenario, MalformedJsonReportsPosition) {
  try {
    parse_scenario_text("{\n  \"game\": {\n    \"type\": ,\n  }\n}");
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(ParseScenario, UnknownKeysAreRejected) {
  EXPECT_THROW(parse_scenario_text(std::string("{") + kTwoLinkGame + R"(, "bogus": 1})"), SchemaError);
  EXPECT_THROW(parse_scenario_text(std::string("{") + kTwoLinkGame + R"(, "sim": {"horizn": 1}})"), SchemaError);
  try {
    parse_scenario_text(std::string("{") + kTwoLinkGame + R"(, "bogus": 1})");
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos);
  }
}

TEST(ParseScenario, ValidationErrors) {
  const std::string g = std::string("{") + kTwoLinkGame;
  EXPECT_THROW(parse_scenario_text(R"({"sim": {}})"), SchemaError);
  EXPECT_THROW(parse_scenario_text(R"({"game": {"type": "nope"}})"), SchemaError);
  EXPECT_THROW(parse_scenario_text(g + R"(, "initial": {"x": [1, 0, 0]}})"), SchemaError);
  EXPECT_THROW(parse_scenario_text(g + R"(, "initial": {"x": [0.5, 0.6, 0.5, 0.5]}})"), SchemaError);
  EXPECT_THROW(parse_scenario_text(g + R"(, "sim": {"step": 0}})"), SchemaError);
  EXPECT_THROW(parse_scenario_text(g + R"(, "pdm": {"type": "smoothing", "tau": -1}})"), SchemaError);
  EXPECT_THROW(parse_scenario_text(g + R"(, "pdm": {"type": "smoothing", "tau": 1, "q0": [1]}})"), SchemaError);
  EXPECT_THROW(parse_scenario_text(g + R"(, "certify": {"weights": [1]}})"), SchemaError);
  EXPECT_THROW(parse_scenario_text(g + R"(, "sim": {"weights": "search"}})"), SchemaError);
  EXPECT_THROW(parse_scenario_text(g + R"(, "seed": -3})"), SchemaError);
  EXPECT_THROW(parse_scenario_text(R"({"game": {"type": "road_split", "ct": [1, 1], "cc": [1, 1], "mass": [0, 1]}})"),
               SchemaError);
  EXPECT_THROW(parse_scenario_text(R"({"game": {"type": "linear", "populations": [{"n": 2}], "A": [[1]]}})"),
               SchemaError);
  EXPECT_THROW(load_scenario("/nonexistent/scenario.json"), SchemaError);
}

TEST(ParseScenario, DefaultsAndOverrides) {
  const Scenario sc = parse_scenario_text(std::string("{") + kTwoLinkGame +
                                          R"(, "edm": {"type": "ipc", "exponent": 2}, "seed": 42,
                                           "certify": {"weights": [0.5, 1], "iterations": 10}})");
  EXPECT_EQ(sc.ipc_power, 2.0);
  EXPECT_EQ(sc.seed, 42u);
  EXPECT_EQ(sc.certify.options.budget.iterations, 10);
  EXPECT_EQ(app::initial_state(sc), barycenter(sc.structure()));
  EXPECT_FALSE(sc.tau.has_value());
}

TEST(App, MissingEnvelopeIsSchemaExit) {
  Scenario sc{"generic", json::object(),
              generic_game(PopulationStructure({2}, {1.0}), [](const Vector& x) -> Vector { return -x; })};
  std::ostringstream log;
  EXPECT_EQ(app::cmd_certify(sc, scratch("missing_envelope"), log), app::kSchema);
  EXPECT_NE(log.str().find("envelope"), std::string::npos) << log.str();
}

TEST(App, Dump17RoundTrips) {
  const double v = 0.1 + 0.2;
  const json j{{"a", v}, {"b", json::array({1.0 / 3.0, -2.5e-300})}, {"c", std::nan("")}, {"d", 3}};
  const json back = json::parse(app::dump17(j));
  EXPECT_EQ(back["a"].get<double>(), v);
  EXPECT_EQ(back["b"][0].get<double>(), 1.0 / 3.0);
  EXPECT_EQ(back["b"][1].get<double>(), -2.5e-300);
  EXPECT_TRUE(back["c"].is_null());
  EXPECT_EQ(back["d"].get<int>(), 3);
}

TEST(Cli, SimulateWritesOutputs) {
  const fs::path out = scratch("simulate");
  EXPECT_EQ(run_cli("simulate " + kScenarios + "/mixed_autonomy_2link.json --out " + out.string()), 0);
  const json summary = json::parse(slurp(out / "summary.json"));
  EXPECT_TRUE(summary["converged"].get<bool>());
  EXPECT_LT(summary["final_nash_gap"].get<double>(), 1e-6);
  EXPECT_EQ(summary["lyapunov_violations"].get<int>(), 0);
  const std::string csv = slurp(out / "trajectory.csv");
  EXPECT_EQ(csv.rfind("t,x_1,x_2,x_3,x_4,p_1,p_2,p_3,p_4,V,nash_gap\n", 0), 0u);
}

TEST(Cli, ZeroHorizonGivesSingleRow) {
  const fs::path out = scratch("horizon0");
  EXPECT_EQ(run_cli("simulate " + kScenarios + "/mixed_autonomy_smoothing.json --horizon 0 --out " + out.string()), 0);
  const std::string csv = slurp(out / "trajectory.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_EQ(csv.rfind("t,x_1,x_2,x_3,x_4,q_1,q_2,", 0), 0u);
}

TEST(Cli, RunsAreByteIdentical) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  for (const fs::path& out : {a, b}) {
    ASSERT_EQ(run_cli("simulate " + kScenarios + "/mixed_autonomy_smoothing.json --horizon 20 --out " + out.string()), 0);
    ASSERT_EQ(run_cli("certify " + kScenarios + "/mixed_autonomy_2link.json --out " + out.string()), 0);
    ASSERT_EQ(run_cli("verify " + kScenarios + "/road_split.json --out " + out.string()), 0);
  }
  for (const char* f : {"trajectory.csv", "summary.json", "certificate.json", "verify.json"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
}

TEST(Cli, CertificateFields) {
  const fs::path out = scratch("certificate");
  ASSERT_EQ(run_cli("certify " + kScenarios + "/mixed_autonomy_2link.json --out " + out.string()), 0);
  const json c = json::parse(slurp(out / "certificate.json"));
  EXPECT_EQ(c["verdict"], "certified");
  EXPECT_EQ(c["seed"], 1);
  for (const char* key : {"weights", "omegas", "lambda_max", "margin", "method", "evaluations"}) {
    EXPECT_TRUE(c.contains(key)) << key;
  }
  ASSERT_EQ(c["weights"].size(), 2u);
  EXPECT_NEAR(c["weights"][0].get<double>() / c["weights"][1].get<double>(), 0.5, 1e-3);
  EXPECT_LE(c["lambda_max"].get<double>(), 1e-9);
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("exit_codes");
  const std::string out = " --out " + (dir / "out").string();
  const std::string head = std::string("{") + kTwoLinkGame;

  EXPECT_EQ(run_cli("certify " + kScenarios + "/road_split.json" + out), 0);

  const fs::path refuted = write_scenario(dir, "refuted", head + R"(, "certify": {"weights": "unit"}})");
  EXPECT_EQ(run_cli("certify " + refuted.string() + out), 1);
  const json c = json::parse(slurp(dir / "out" / "certificate.json"));
  EXPECT_EQ(c["verdict"], "refuted");
  EXPECT_TRUE(c.contains("witness"));

  const fs::path flipped = write_scenario(dir, "flipped", head + R"(, "test_hooks": {"negate_sigma": true}})");
  EXPECT_EQ(run_cli("verify " + flipped.string() + out), 1);

  const fs::path malformed = write_scenario(dir, "malformed", "{\"game\": [");
  EXPECT_EQ(run_cli("simulate " + malformed.string() + out), 2);
  const fs::path unknown = write_scenario(dir, "unknown", head + R"(, "extra": true})");
  EXPECT_EQ(run_cli("certify " + unknown.string() + out), 2);
  EXPECT_EQ(run_cli("bogus " + malformed.string()), 2);

  const fs::path blowup = write_scenario(dir, "blowup", R"({"game": {"type": "linear", "populations": [{"n": 2}],
      "A": [[0, 1e300], [-1e300, 0]]}, "initial": {"x": [0.9, 0.1]}, "sim": {"horizon": 1}})");
  EXPECT_EQ(run_cli("simulate " + blowup.string() + out), 3);

  const fs::path tiny = write_scenario(dir, "tiny", R"({"game": {"type": "road_split", "ct": [1, 3], "cc": [2, 2]},
      "certify": {"weights": "unit", "iterations": 0, "restarts": 1, "grid_refine": false, "polish": false}})");
  EXPECT_EQ(run_cli("certify " + tiny.string() + out), 4);
}

TEST(Cli, BatchWritesPerScenarioDirectories) {
  const fs::path out = scratch("batch");
  EXPECT_EQ(run_cli("verify " + kScenarios + "/mixed_autonomy_2link.json " + kScenarios +
                    "/mixed_autonomy_smoothing.json --out " + out.string()),
            0);
  EXPECT_TRUE(fs::exists(out / "mixed_autonomy_2link" / "verify.json"));
  const json v = json::parse(slurp(out / "mixed_autonomy_smoothing" / "verify.json"));
  EXPECT_TRUE(v["passed"].get<bool>());
  EXPECT_TRUE(v.contains("pdm"));
}
