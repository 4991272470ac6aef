#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "autotune/harness.hpp"

int main(int argc, char** argv) {
  using namespace autotune;

  CLI::App app{"Sampling-based MPC parameter tuning workbench"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string out_dir;
  bool ned = false;
  std::vector<std::string> overrides;
  std::string method;

  app.add_option("--config", config_path, "Config file (section.key = value)");
  auto* seed_opt = app.add_option("--seed", seed, "Global seed, overrides the config");
  auto* jobs_opt = app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  auto* out_opt = app.add_option("--out", out_dir, "Output directory");
  app.add_flag("--ned", ned, "Reference CSV uses north-east-down coordinates");
  app.add_option("--set", overrides, "Config override key=value (repeatable)");

  for (const auto& name : command_names()) {
    auto* sub = app.add_subcommand(name);
    if (name == "baseline") {
      sub->add_option("--method", method, "random, pso, cmaes or regressor")
          ->check(CLI::IsMember({"random", "pso", "cmaes", "regressor"}));
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  std::vector<std::string> all = overrides;
  if (*seed_opt) all.push_back("seed=" + std::to_string(seed));
  if (*jobs_opt) all.push_back("jobs=" + std::to_string(jobs));
  if (*out_opt) all.push_back("out=" + out_dir);
  if (ned) all.push_back("track.ned=true");
  if (!method.empty()) all.push_back("method=" + method);

  const std::string command = app.get_subcommands().front()->get_name();
  ExperimentConfig cfg;
  try {
    cfg = load_experiment(config_path, all);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  if (command == "baseline" && cfg.method == "autotune") {
    std::cerr << "config error: baseline needs --method or method = random|pso|cmaes|regressor\n";
    return kExitConfig;
  }
  return run_command(command, cfg, std::cout, std::cerr);
}
