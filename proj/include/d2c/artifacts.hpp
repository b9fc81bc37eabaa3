#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "d2c/feedback.hpp"

namespace d2c::artifacts {

inline constexpr int kFormatVersion = 1;

/// Fields shared by every artifact. provenance hashes the effective config;
/// parent is the provenance of the artifact this one was derived from.
struct Header {
  std::string provenance;
  std::string parent;
  std::string benchmark;
  double dt = 0.0;
};

struct NominalArtifact {
  Header header;
  openloop::CostSpec cost;
  Trajectory trajectory;
  std::string method;
  bool converged = false;
  std::size_t iterations = 0;
  std::size_t rollouts = 0;
  double final_cost = 0.0;
};

struct RomArtifact {
  Header header;
  double sigma = 0.0;
  std::size_t p = 0;
  std::size_t q = 0;
  std::size_t rollouts = 0;
  sysid::LtvRom rom;
};

struct PolicyArtifact {
  Header header;
  feedback::FeedbackPolicy policy;
};

std::string to_text(const NominalArtifact& a);
std::string to_text(const RomArtifact& a);
std::string to_text(const PolicyArtifact& a);

/// Parsers throw ParseError naming `source` and the offending line.
NominalArtifact parse_nominal(std::string_view text, const std::string& source = "<nominal>");
RomArtifact parse_rom(std::string_view text, const std::string& source = "<rom>");
PolicyArtifact parse_policy(std::string_view text, const std::string& source = "<policy>");

/// Atomic write of to_text(a).
void save(const std::filesystem::path& path, const NominalArtifact& a);
void save(const std::filesystem::path& path, const RomArtifact& a);
void save(const std::filesystem::path& path, const PolicyArtifact& a);

NominalArtifact load_nominal(const std::filesystem::path& path);
RomArtifact load_rom(const std::filesystem::path& path);
PolicyArtifact load_policy(const std::filesystem::path& path);

}  // namespace d2c::artifacts
