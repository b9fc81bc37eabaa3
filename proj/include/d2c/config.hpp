#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "d2c/evaluation.hpp"

namespace d2c::config {

struct SystemConfig {
  std::string benchmark;
  double dt = 0.01;
  double horizon = 0.0;  // seconds; 0 = benchmark default
  Vector initial_state;  // empty = benchmark default
  Vector target_state;   // empty = benchmark default
};

struct SysidConfig {
  sysid::CollectConfig collect;  // band is set to p + q - 1 for windowed excitation
  sysid::IdentifyConfig identify;
};

struct TailConfig {
  std::vector<double> epsilons;
  double threshold = 0.0;
  std::size_t runs = 10000;
};

struct RankingConfig {
  std::string policy;  // second policy file
  std::vector<double> epsilons;
  std::size_t runs = 200;
};

struct EvaluationConfig {
  std::vector<double> nsr_grid{0.0};
  std::size_t runs = 100;
  double success_threshold = 0.1;
  bool open_loop_baseline = true;
  std::optional<TailConfig> tail;
  std::optional<RankingConfig> ranking;
};

/// Everything a pipeline run depends on besides input artifacts.
struct PipelineConfig {
  SystemConfig system;
  openloop::CostSpec cost;
  openloop::OptimizerConfig optimizer;
  SysidConfig sysid;
  feedback::FeedbackConfig feedback;
  EvaluationConfig evaluation;
  std::uint64_t seed = 0;
  std::string output = "out";

  /// Canonical JSON of the effective settings; stable across reruns.
  std::string canonical() const;
  /// Hash of canonical().
  std::string provenance() const;

  std::size_t horizon_steps() const;
  Vector initial_state() const;
};

/// Parses a JSON config. Sections: system, cost, optimizer, sysid, feedback,
/// evaluation, plus top-level seed and output. Unknown keys, wrong types and
/// out-of-range values throw ConfigError naming the key.
PipelineConfig parse(std::string_view json_text, const std::string& source = "<config>");
PipelineConfig load(const std::filesystem::path& path);

}  // namespace d2c::config
