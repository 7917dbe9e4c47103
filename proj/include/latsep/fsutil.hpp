#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace latsep {

/// Writes `content` to a sibling temporary file and renames it into place, so
/// readers only ever observe complete files.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

}  // namespace latsep
