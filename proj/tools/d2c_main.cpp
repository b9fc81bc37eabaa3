#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "d2c/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"d2c: open-loop optimization, LTV identification and LQG feedback design for black-box simulators"};
  app.require_subcommand(1);

  d2c::cli::Options options;
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::string nominal;
  std::string rom;
  std::string policy;

  const std::map<std::string, std::string> about = {
      {"optimize", "solve the open-loop problem, write nominal.txt"},
      {"sysid", "identify an LTV model around the nominal, write rom.txt"},
      {"design", "LQR and Kalman gains on the identified model, write policy.txt"},
      {"evaluate", "Monte Carlo closed-loop runs over the nsr grid, write report.csv"},
      {"pipeline", "all four stages in order, plus summary.txt"},
  };
  for (const auto& name : d2c::cli::command_names()) {
    auto* sub = app.add_subcommand(name, about.count(name) ? about.at(name) : "");
    sub->add_option("--config", config, "pipeline config (JSON)")->required();
    sub->add_option("--seed", seed, "master seed, overrides the config");
    sub->add_option("--out", out, "output directory, overrides the config");
    sub->add_flag("--dry-run", options.dry_run, "validate inputs and exit");
    sub->add_option("--threads", options.threads, "worker threads, 0 = auto")->check(CLI::NonNegativeNumber);
    if (name == "sysid" || name == "design") sub->add_option("--nominal", nominal, "nominal artifact");
    if (name == "design") sub->add_option("--rom", rom, "ROM artifact");
    if (name == "evaluate") sub->add_option("--policy", policy, "policy artifact");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : d2c::cli::kFailure;
  }

  auto* sub = app.get_subcommands().front();
  options.config = config;
  if (sub->count("--seed") > 0) options.seed = seed;
  if (!out.empty()) options.out = out;
  if (!nominal.empty()) options.nominal = nominal;
  if (!rom.empty()) options.rom = rom;
  if (!policy.empty()) options.policy = policy;
  return d2c::cli::run_command(sub->get_name(), options, std::cout, std::cerr);
}
