#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "d2c/artifacts.hpp"
#include "d2c/cli.hpp"
#include "d2c/textio.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace {

namespace fs = std::filesystem;
using d2c::textio::read_file;

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

// Runs the d2c executable; stdout and stderr are captured separately.
Result run(const std::string& args) {
  const fs::path err_file = fs::temp_directory_path() / "d2c_cli_test_stderr.txt";
  const std::string cmd = std::string(D2C_CLI_PATH) + " " + args + " 2>" + err_file.string();
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  char buf[4096];
  for (std::size_t n; (n = fread(buf, 1, sizeof buf, pipe)) > 0;) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = read_file(err_file);
  return r;
}

fs::path config(const std::string& name) { return fs::path(D2C_CONFIG_DIR) / (name + ".json"); }

// Copy of a shipped config with some fields replaced.
fs::path variant(const std::string& name, const fs::path& dir, const nlohmann::json& patch) {
  nlohmann::json j = nlohmann::json::parse(read_file(config(name)));
  j.merge_patch(patch);
  const fs::path path = dir / (name + "_variant.json");
  std::ofstream(path) << j.dump(2);
  return path;
}

std::string flags(const fs::path& cfg, const fs::path& out) {
  return "--config " + cfg.string() + " --out " + out.string();
}

const char* kArtifacts[] = {"nominal.txt", "convergence.csv", "rom.txt", "singular_values.csv", "policy.txt",
                            "gains.csv", "report.csv", "report_open_loop.csv", "summary.txt"};

TEST(Cli, MissingConfigNamesPath) {
  const Result r = run("optimize --config /nonexistent/none.json --out /tmp/d2c_never");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("/nonexistent/none.json"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists("/tmp/d2c_never/nominal.txt"));
}

TEST(Cli, MissingRequiredFlagIsUsageError) {
  EXPECT_EQ(run("optimize").code, 1);
  EXPECT_EQ(run("frobnicate --config x").code, 1);
  EXPECT_EQ(run("--help").code, 0);
}

TEST(Cli, ToyOptimizeConverges) {
  const auto dir = fixtures::scratch_dir("cli_toy_optimize");
  const Result r = run("optimize " + flags(config("linear_toy"), dir));
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("optimize.converged 1"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(dir / "nominal.txt"));
  EXPECT_EQ(read_file(dir / "convergence.csv").rfind("iteration,cost,gradient_norm,rollouts\n", 0), 0u);
}

TEST(Cli, ToyOptimumMatchesRiccati) {
  const auto dir = fixtures::scratch_dir("cli_toy_riccati");
  ASSERT_EQ(run("optimize " + flags(config("linear_toy"), dir)).code, 0);
  const auto nominal = d2c::artifacts::load_nominal(dir / "nominal.txt");
  const double dt = nominal.header.dt;
  d2c::Matrix a(2, 2), b(2, 1);
  a << 1, dt, 0, 1;
  b << 0.5 * dt * dt, dt;
  const std::size_t n = nominal.trajectory.horizon();
  const auto lqr = oracle::lqr(std::vector<d2c::Matrix>(n, a), std::vector<d2c::Matrix>(n, b),
                               nominal.cost.state_weight, 0.5 * nominal.cost.control_weight,
                               nominal.cost.terminal_weight);
  const d2c::Vector x0 = nominal.trajectory.states.front();
  const double best = x0.dot(lqr.p[0] * x0);
  EXPECT_LE(std::abs(nominal.final_cost - best), 0.01 * best);
}

TEST(Cli, NotConvergedExitsTwoButWrites) {
  const auto dir = fixtures::scratch_dir("cli_not_converged");
  const Result r = run("optimize " + flags(variant("linear_toy", dir, {{"optimizer", {{"max_iterations", 3}}}}), dir));
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(fs::exists(dir / "nominal.txt"));
}

TEST(Cli, DryRunValidatesOnly) {
  const auto dir = fixtures::scratch_dir("cli_dry_run");
  EXPECT_EQ(run("pipeline --dry-run " + flags(config("cartpole"), dir / "out")).code, 0);
  EXPECT_FALSE(fs::exists(dir / "out" / "nominal.txt"));
  const fs::path bad = variant("linear_toy", dir, {{"optimizer", {{"step_size", -1.0}}}});
  EXPECT_EQ(run("pipeline --dry-run " + flags(bad, dir / "out")).code, 1);
}

TEST(Cli, CorruptNominalReportsLine) {
  const auto dir = fixtures::scratch_dir("cli_corrupt");
  ASSERT_EQ(run("optimize " + flags(config("linear_toy"), dir)).code, 0);
  std::istringstream in(read_file(dir / "nominal.txt"));
  std::string text, line;
  for (int i = 1; std::getline(in, line); ++i) text += (i == 12 ? "garbage here" : line) + "\n";
  d2c::textio::write_file_atomic(dir / "nominal.txt", text);
  const Result r = run("sysid " + flags(config("linear_toy"), dir));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("nominal.txt:12"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir / "rom.txt"));
}

TEST(Cli, HorizonMismatchReportsExpectedAndActual) {
  const auto dir = fixtures::scratch_dir("cli_horizon");
  ASSERT_EQ(run("pipeline " + flags(config("linear_toy"), dir)).code, 0);
  const fs::path shorter = variant("linear_toy", dir, {{"system", {{"horizon", 1.0}}}});
  for (const char* cmd : {"sysid", "design", "evaluate"}) {
    const Result r = run(std::string(cmd) + " " + flags(shorter, dir));
    EXPECT_EQ(r.code, 1) << cmd;
    EXPECT_NE(r.err.find("20"), std::string::npos) << r.err;
    EXPECT_NE(r.err.find("40"), std::string::npos) << r.err;
  }
}

TEST(Cli, BenchmarkMismatchRejected) {
  const auto dir = fixtures::scratch_dir("cli_benchmark");
  ASSERT_EQ(run("optimize " + flags(config("linear_toy"), dir)).code, 0);
  const Result r = run("sysid --config " + config("scalar_linear").string() + " --out " + dir.string() +
                       " --nominal " + (dir / "nominal.txt").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("benchmark"), std::string::npos) << r.err;
}

TEST(Cli, DesignRejectsRomFromAnotherNominal) {
  const auto dir = fixtures::scratch_dir("cli_parent");
  ASSERT_EQ(run("optimize " + flags(config("linear_toy"), dir / "a")).code, 0);
  ASSERT_EQ(run("sysid " + flags(config("linear_toy"), dir / "a")).code, 0);
  const fs::path other = variant("linear_toy", dir, {{"cost", {{"terminal_weight", 50.0}}}});
  ASSERT_EQ(run("optimize " + flags(other, dir / "b")).code, 0);
  const Result r = run("design " + flags(other, dir / "b") + " --rom " + (dir / "a" / "rom.txt").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("parent"), std::string::npos) << r.err;
}

TEST(Cli, PipelineWritesEverythingAndSumsRollouts) {
  const auto dir = fixtures::scratch_dir("cli_pipeline");
  const Result r = run("pipeline " + flags(config("linear_toy"), dir));
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : kArtifacts) EXPECT_TRUE(fs::exists(dir / f)) << f;
  for (const char* stage : {"optimize", "sysid", "design", "evaluate"})
    EXPECT_NE(r.err.find(std::string("stage ") + stage), std::string::npos) << r.err;
  std::istringstream in(read_file(dir / "summary.txt"));
  std::size_t opt = 0, sys = 0, total = 0;
  for (std::string key; in >> key;) {
    if (key == "optimize.rollouts") in >> opt;
    else if (key == "sysid.rollouts") in >> sys;
    else if (key == "total_rollouts") in >> total;
    else in.ignore(1 << 20, '\n');
  }
  EXPECT_GT(opt, 0u);
  EXPECT_GT(sys, 0u);
  EXPECT_EQ(total, opt + sys);
}

TEST(Cli, NoiselessReportShowsNominalCost) {
  const auto dir = fixtures::scratch_dir("cli_nsr0");
  ASSERT_EQ(run("pipeline " + flags(config("linear_toy"), dir)).code, 0);
  const auto nominal = d2c::artifacts::load_nominal(dir / "nominal.txt");
  std::istringstream in(read_file(dir / "report.csv"));
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  std::vector<std::string> cells;
  std::stringstream ss(row);
  for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
  ASSERT_EQ(cells.size(), 8u);
  EXPECT_EQ(cells[0], "0");
  EXPECT_EQ(d2c::textio::parse_double(cells[4]), nominal.cost.total(nominal.trajectory));
  EXPECT_EQ(cells[5], "0");
}

TEST(Cli, LinearPlantRomAndGainsMatchDirectDesign) {
  const auto dir = fixtures::scratch_dir("cli_linear_rom");
  ASSERT_EQ(run("pipeline " + flags(config("linear_toy"), dir)).code, 0);
  const auto policy = d2c::artifacts::load_policy(dir / "policy.txt").policy;
  const double dt = 0.05;
  d2c::Matrix a(2, 2), b(2, 1);
  a << 1, dt, 0, 1;
  b << 0.5 * dt * dt, dt;
  const std::size_t n = policy.horizon();
  const std::vector<d2c::Matrix> as(n, a), bs(n, b), cs(n + 1, d2c::Matrix::Identity(2, 2));
  const auto& rom = policy.rom;
  double markov_err = 0.0;
  for (std::size_t k = 1; k <= n; ++k)
    for (std::size_t j = 0; j < k; ++j)
      markov_err = std::max(markov_err, (rom.markov(k, j) - oracle::markov(as, bs, cs, k, j)).norm());
  EXPECT_LT(markov_err, 1e-6);
  // The ROM state is an invertible change of basis, so L_k pinv(C_k) is the
  // plant-coordinate gain. Before step n_x the input has not reached every
  // direction, and the data say nothing about A_k there.
  const auto lqr = oracle::lqr(as, bs, policy.cost.state_weight, 0.5 * policy.cost.control_weight,
                               policy.cost.terminal_weight);
  for (std::size_t k = 2; k < n; ++k) {
    const d2c::Matrix plant_gain = policy.lqr_gains[k] * d2c::numerics::pinv(rom.c[k]);
    EXPECT_LE((plant_gain - lqr.k[k]).norm(), 1e-6 * (1.0 + lqr.k[k].norm())) << "k=" << k;
  }
}

TEST(Cli, FailedStageLeavesEarlierArtifactsIntact) {
  const auto dir = fixtures::scratch_dir("cli_intact");
  ASSERT_EQ(run("pipeline " + flags(config("linear_toy"), dir)).code, 0);
  const std::string nominal = read_file(dir / "nominal.txt"), policy = read_file(dir / "policy.txt");
  d2c::textio::write_file_atomic(dir / "rom.txt", "# d2c rom v1\nbroken\n");
  EXPECT_EQ(run("design " + flags(config("linear_toy"), dir)).code, 1);
  EXPECT_EQ(read_file(dir / "nominal.txt"), nominal);
  EXPECT_EQ(read_file(dir / "policy.txt"), policy);
}

TEST(Cli, RerunsAreByteIdentical) {
  const auto dir = fixtures::scratch_dir("cli_determinism");
  for (const char* sub : {"a", "b"}) ASSERT_EQ(run("pipeline " + flags(config("linear_toy"), dir / sub)).code, 0);
  for (const char* f : kArtifacts) EXPECT_EQ(read_file(dir / "a" / f), read_file(dir / "b" / f)) << f;
}

TEST(Cli, ThreadCountDoesNotChangeArtifacts) {
  const auto dir = fixtures::scratch_dir("cli_threads");
  ASSERT_EQ(run("pipeline --threads 1 " + flags(config("linear_toy"), dir / "a")).code, 0);
  ASSERT_EQ(run("pipeline --threads 3 " + flags(config("linear_toy"), dir / "b")).code, 0);
  for (const char* f : kArtifacts) EXPECT_EQ(read_file(dir / "a" / f), read_file(dir / "b" / f)) << f;
}

TEST(Cli, SeedOverrideChangesNoiseNotNominal) {
  const auto dir = fixtures::scratch_dir("cli_seed");
  ASSERT_EQ(run("pipeline " + flags(config("linear_toy"), dir / "a")).code, 0);
  ASSERT_EQ(run("pipeline --seed 2 " + flags(config("linear_toy"), dir / "b")).code, 0);
  const auto na = d2c::artifacts::load_nominal(dir / "a" / "nominal.txt");
  const auto nb = d2c::artifacts::load_nominal(dir / "b" / "nominal.txt");
  EXPECT_EQ(na.trajectory.states.back(), nb.trajectory.states.back());
  EXPECT_NE(read_file(dir / "a" / "report.csv"), read_file(dir / "b" / "report.csv"));
}

TEST(Cli, InProcessCommandsMatchExecutable) {
  const auto dir = fixtures::scratch_dir("cli_in_process");
  d2c::cli::Options opt;
  opt.config = config("linear_toy");
  opt.out = dir / "a";
  std::ostringstream out, err;
  ASSERT_EQ(d2c::cli::cmd_pipeline(opt, out, err), 0) << err.str();
  ASSERT_EQ(run("pipeline " + flags(config("linear_toy"), dir / "b")).code, 0);
  for (const char* f : kArtifacts) EXPECT_EQ(read_file(dir / "a" / f), read_file(dir / "b" / f)) << f;
}

TEST(Cli, CartPolePipelineProducesAllArtifacts) {
  const auto dir = fixtures::scratch_dir("cli_cartpole");
  const Result r = run("pipeline " + flags(config("cartpole"), dir));
  EXPECT_EQ(r.code, 0) << r.err;
  for (const char* f : kArtifacts) EXPECT_TRUE(fs::exists(dir / f)) << f;
}

}  // namespace
