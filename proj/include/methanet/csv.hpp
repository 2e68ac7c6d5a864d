#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Minimal comma-separated helpers. Fields never contain quoted commas in any
// of the schemas this project reads or writes.
namespace methanet::csv {

std::vector<std::string> split(std::string_view line);

/// Reads one logical line, stripping a trailing '\r'. Returns false at EOF.
bool next_line(std::istream& in, std::string& line);

/// Strict parse: the whole (trimmed) field must be a finite or non-finite number.
std::optional<double> parse_number(std::string_view field);

/// Shortest text that round-trips to the same double.
std::string format_number(double value);

std::string join(const std::vector<std::string>& fields);

/// Index of `name` in `header`, or nullopt.
std::optional<std::size_t> column(const std::vector<std::string>& header, std::string_view name);

std::ifstream open_input(const std::filesystem::path& path);
std::ofstream open_output(const std::filesystem::path& path);

}  // namespace methanet::csv
