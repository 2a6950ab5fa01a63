#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace nexusflow::io {

// Shortest representation that round-trips exactly; locale independent.
std::string format_double(double v);
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

std::vector<std::string_view> split(std::string_view line, char sep);

std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temp file and renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace nexusflow::io
