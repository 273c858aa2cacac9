#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cloudvote {

inline constexpr std::string_view kToolVersion = "cloudvote 0.1.0";

namespace text {

// Fixed 17 significant digits; parses back to the identical double.
std::string format_g17(double value);

// Shortest representation that round-trips.
std::string format_shortest(double value);

double parse_double(std::string_view token, std::string_view what);
std::int64_t parse_int(std::string_view token, std::string_view what);
std::uint64_t parse_uint(std::string_view token, std::string_view what);

std::vector<std::string_view> split(std::string_view line, char sep);

// Reads a whole file and splits on LF. A trailing empty line is dropped.
std::vector<std::string> read_lines(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

// Parses "#key=value"; returns false when the line is not a header line.
bool parse_header(std::string_view line, std::string_view& key, std::string_view& value);

bool has_control_chars(std::string_view s);

}  // namespace text
}  // namespace cloudvote
