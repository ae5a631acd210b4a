#pragma once
// Minimal CSV reader/writer for the pipeline's plain numeric tables. Fields
// never contain commas or quotes, so no quoting is handled.

#include <filesystem>
#include <string>
#include <vector>

namespace milg {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column; throws UserError when absent.
  std::size_t column(const std::string& name) const;
};

/// Reads a CSV with a header row. When `expected_header` is non-empty the
/// header must match it exactly.
CsvTable read_csv(const std::filesystem::path& path, const std::vector<std::string>& expected_header = {});

void write_csv(const std::filesystem::path& path, const CsvTable& table);

std::vector<std::string> split_fields(const std::string& line, char sep = ',');

long parse_long(const std::string& field, const std::string& what);
double parse_double(const std::string& field, const std::string& what);

/// Shortest round-tripping decimal text for a double.
std::string format_number(double v);

}  // namespace milg
