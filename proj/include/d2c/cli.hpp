#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace d2c::cli {

enum ExitCode : int {
  kSuccess = 0,
  kFailure = 1,
  kWarnings = 2,  // finished, artifacts written, but not converged or rank warnings
};

struct Options {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;         // overrides the config seed
  std::optional<std::filesystem::path> out;  // overrides the config output directory
  bool dry_run = false;
  std::size_t threads = 0;  // 0 = THREADS or hardware concurrency
  // Input artifacts; default to the files in the output directory.
  std::optional<std::filesystem::path> nominal;
  std::optional<std::filesystem::path> rom;
  std::optional<std::filesystem::path> policy;
};

/// Output file names inside the output directory.
namespace files {
inline constexpr const char* kNominal = "nominal.txt";
inline constexpr const char* kConvergence = "convergence.csv";
inline constexpr const char* kRom = "rom.txt";
inline constexpr const char* kSingularValues = "singular_values.csv";
inline constexpr const char* kPolicy = "policy.txt";
inline constexpr const char* kGains = "gains.csv";
inline constexpr const char* kReport = "report.csv";
inline constexpr const char* kOpenLoopReport = "report_open_loop.csv";
inline constexpr const char* kTail = "tail.csv";
inline constexpr const char* kRanking = "ranking.csv";
inline constexpr const char* kSummary = "summary.txt";
}  // namespace files

/// Each command prints a key/value summary to `out` and stage timings to
/// `err`, and returns an exit code. Errors are reported on `err` and give
/// kFailure; nothing is thrown.
int cmd_optimize(const Options& options, std::ostream& out, std::ostream& err);
int cmd_sysid(const Options& options, std::ostream& out, std::ostream& err);
int cmd_design(const Options& options, std::ostream& out, std::ostream& err);
int cmd_evaluate(const Options& options, std::ostream& out, std::ostream& err);
/// All four stages in order, stopping at the first failure; also writes
/// summary.txt with the per-stage and total rollout counts.
int cmd_pipeline(const Options& options, std::ostream& out, std::ostream& err);

std::vector<std::string> command_names();
int run_command(const std::string& name, const Options& options, std::ostream& out, std::ostream& err);

}  // namespace d2c::cli
