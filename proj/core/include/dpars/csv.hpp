#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dpars/matrix.hpp"

namespace dpars::csv {

/// Numeric CSV with a header row. Leading `#` lines are comments (used to
/// embed run manifests) and are preserved on read.
struct Table {
  std::vector<std::string> comments;
  std::vector<std::string> header;
  Matrix values;

  /// Index of a header column, or throws FormatError.
  std::size_t column(const std::string& name) const;
};

Table read(const std::filesystem::path& path);
Table parse(const std::string& text, const std::string& source = "<string>");

void write(const std::filesystem::path& path, const Table& table);
std::string format(const Table& table);

/// Shortest representation that parses back to the identical double.
std::string format_double(double v);
void append_double(std::string& out, double v);

}  // namespace dpars::csv
