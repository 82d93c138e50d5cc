#pragma once

#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace popmf {

/// Shortest decimal form that round-trips to the same double. Locale- and
/// platform-independent, so CSV output is byte-stable.
std::string format_double(double value);

/// Minimal CSV writer: fields are joined with commas, no quoting (all fields
/// written by this project are numbers or plain labels).
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  CsvWriter& field(std::string_view text);
  CsvWriter& field(double value);
  CsvWriter& field(long long value);
  CsvWriter& field(unsigned long long value);
  CsvWriter& field(std::size_t value) { return field(static_cast<unsigned long long>(value)); }
  CsvWriter& field(int value) { return field(static_cast<long long>(value)); }
  void end_row();

  void header(std::span<const std::string> names);

 private:
  std::ostream& out_;
  bool first_ = true;
};

/// Splits one CSV line on commas (no quoting).
std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace popmf
