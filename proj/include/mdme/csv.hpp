#pragma once

#include <string>
#include <vector>

namespace mdme {

/// Shortest text that reads back to the same double.
std::string format_number(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header cell, matching either the full cell or its name
  /// before a "[unit]" suffix. Throws ParseError when absent.
  std::size_t column(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::string& path);

std::string read_text(const std::string& path);
/// Creates parent directories as needed.
void write_text(const std::string& path, const std::string& content);

}  // namespace mdme
