#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace euler_resnet {

/// Shortest-safe lossless text for a double: "%.17g".
std::string format_double(double v);

/// Comma-separated writer with LF line endings. Fields are written as
/// given; callers never emit commas inside a field.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);

  CsvWriter& field(const std::string& s);
  CsvWriter& field(double v);
  CsvWriter& field(long long v);
  CsvWriter& field(int v) { return field(static_cast<long long>(v)); }
  CsvWriter& field(std::size_t v) { return field(static_cast<long long>(v)); }
  void end_row();

 private:
  std::ofstream out_;
  std::size_t columns_;
  std::size_t in_row_ = 0;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws if absent.
  std::size_t column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

/// Splits on `sep`, trimming ASCII whitespace around each item.
std::vector<std::string> split_trimmed(const std::string& s, char sep);
std::string trim(const std::string& s);

}  // namespace euler_resnet
