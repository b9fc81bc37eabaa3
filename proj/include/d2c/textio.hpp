#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace d2c::textio {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

/// Parses a full token as a double; throws std::invalid_argument otherwise.
double parse_double(std::string_view token);

/// Writes via a temporary sibling file and rename, so readers never observe a
/// partially written artifact.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

/// 64-bit FNV-1a, hex encoded. Used as a provenance tag, not for security.
std::string fnv1a_hex(std::string_view data);

}  // namespace d2c::textio
