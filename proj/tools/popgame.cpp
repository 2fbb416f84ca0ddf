// popgame simulate|certify|verify <scenario.json>... [--out DIR] [--seed N] [--step H] [--horizon T]

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "popgame/app.hpp"

namespace {

struct Overrides {
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<double> step;
  std::optional<double> horizon;
};

unsigned thread_cap(std::size_t jobs) {
  unsigned cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("POPGAME_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) cap = static_cast<unsigned>(v);
    } catch (const std::exception&) {
      std::cerr << "popgame: ignoring invalid POPGAME_THREADS=" << env << "\n";
    }
  }
  return static_cast<unsigned>(std::min<std::size_t>(cap, jobs));
}

int run_one(const std::string& command, const std::string& path, const Overrides& ov, bool batch,
            std::ostream& log) {
  using namespace popgame;
  try {
    Scenario sc = load_scenario(path);
    if (ov.seed) sc.seed = *ov.seed;
    if (ov.step) {
      if (!(*ov.step > 0.0)) throw SchemaError("--step must be positive");
      sc.sim.step = *ov.step;
    }
    if (ov.horizon) {
      if (!(*ov.horizon >= 0.0)) throw SchemaError("--horizon must be >= 0");
      sc.sim.horizon = *ov.horizon;
    }
    std::filesystem::path out = ov.out ? *ov.out : sc.output.value_or("popgame_out");
    if (batch) out /= sc.name;
    if (command == "simulate") return app::cmd_simulate(sc, out, log);
    if (command == "certify") return app::cmd_certify(sc, out, log);
    return app::cmd_verify(sc, out, log);
  } catch (const SchemaError& e) {
    log << "popgame: schema error: " << e.what() << "\n";
    return app::kSchema;
  } catch (const NumericalAbort& e) {
    log << "popgame: numerical abort: " << e.what() << "\n";
    return app::kNumerical;
  } catch (const std::domain_error& e) {
    log << "popgame: numerical abort: " << e.what() << "\n";
    return app::kNumerical;
  } catch (const std::invalid_argument& e) {
    log << "popgame: schema error: " << e.what() << "\n";
    return app::kSchema;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Evolutionary dynamics in feedback with payoff mechanisms: simulation and stability certificates"};
  cli.require_subcommand(1, 1);

  std::vector<std::string> files;
  Overrides ov;
  std::string out;
  std::uint64_t seed = 0;
  double step = 0.0, horizon = 0.0;

  for (const char* name : {"simulate", "certify", "verify"}) {
    auto* sub = cli.add_subcommand(name);
    sub->add_option("scenarios", files, "Scenario JSON files")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "Output directory");
    sub->add_option("--seed", seed, "Random seed");
    sub->add_option("--step", step, "Integration step");
    sub->add_option("--horizon", horizon, "Integration horizon");
  }

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : popgame::app::kSchema;
  }

  const CLI::App* sub = cli.get_subcommands().front();
  if (sub->count("--out")) ov.out = out;
  if (sub->count("--seed")) ov.seed = seed;
  if (sub->count("--step")) ov.step = step;
  if (sub->count("--horizon")) ov.horizon = horizon;
  const std::string command = sub->get_name();
  const bool batch = files.size() > 1;

  std::vector<int> codes(files.size(), 0);
  std::vector<std::string> logs(files.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < files.size(); i = next++) {
      std::ostringstream log;
      codes[i] = run_one(command, files[i], ov, batch, log);
      logs[i] = log.str();
    }
  };
  std::vector<std::thread> pool;
  const unsigned threads = thread_cap(files.size());
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  int code = 0;
  for (std::size_t i = 0; i < files.size(); ++i) {
    std::cerr << logs[i];
    code = std::max(code, codes[i]);
  }
  return code;
}
