#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dosebound/matrix.hpp"

namespace dosebound::csv {

/// Numeric table with a header row.
struct Table {
    std::vector<std::string> header;
    Matrix values;

    /// Index of a named column; throws UsageError if absent.
    std::size_t column_index(const std::string& name) const;
};

/// Shortest text that reloads to the same double (17 significant digits,
/// '.' decimal separator regardless of locale).
std::string format_double(double value);

Table read(const std::filesystem::path& path);

/// Serializes a table; cells are formatted with format_double.
std::string to_string(const Table& table);

/// Writes `contents` to a temporary sibling and renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace dosebound::csv
