#pragma once

#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>

#include "d2c/artifacts.hpp"
#include "d2c/cli.hpp"
#include "d2c/feedback.hpp"

namespace fixtures {

namespace fs = std::filesystem;

// Fresh empty directory under the system temp dir.
inline fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("d2c_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// ROM equal to a linear plant's own matrices with identity outputs.
inline d2c::sysid::LtvRom pass_through(const std::vector<d2c::Matrix>& a, const std::vector<d2c::Matrix>& b) {
  d2c::sysid::LtvRom rom;
  rom.horizon = a.size();
  rom.order = rom.output_dim = static_cast<std::size_t>(a[0].rows());
  rom.input_dim = static_cast<std::size_t>(b[0].cols());
  rom.window_lo = 1;
  rom.window_hi = a.size() - 1;
  rom.a = a;
  rom.b = b;
  rom.c.assign(a.size() + 1, d2c::Matrix::Identity(a[0].rows(), a[0].rows()));
  return rom;
}

// Runs optimize, sysid and design from a config file into `out` and loads
// the resulting policy.
inline d2c::artifacts::PolicyArtifact design_from_config(const fs::path& config, const fs::path& out) {
  d2c::cli::Options opt;
  opt.config = config;
  opt.out = out;
  std::ostringstream log, err;
  for (const char* stage : {"optimize", "sysid", "design"}) {
    const int code = d2c::cli::run_command(stage, opt, log, err);
    if (code == d2c::cli::kFailure) throw std::runtime_error(std::string(stage) + " failed: " + err.str());
  }
  return d2c::artifacts::load_policy(out / d2c::cli::files::kPolicy);
}

}  // namespace fixtures
