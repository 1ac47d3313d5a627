#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cffe::csv {

/// Parsed CSV file: one header row plus string cells. Row numbers reported in
/// errors are 1-based file lines (the header is line 1).
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::optional<std::size_t> column(std::string_view name) const;
};

Table read(const std::filesystem::path& path);

std::vector<std::string> split_line(std::string_view line);

/// Parses a numeric cell; surrounding whitespace is ignored.
std::optional<double> parse_number(std::string_view cell);

/// Shortest text that parses back to exactly `value`.
std::string format_number(double value);

/// Parses `path` cell (row, col) or throws NonNumericCell with the location.
double number_at(const Table& table, std::size_t row, std::size_t col);

} // namespace cffe::csv
