#include "euler_resnet/csv.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace euler_resnet {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path,
                     const std::vector<std::string>& header)
    : out_(path, std::ios::binary), columns_(header.size()) {
  if (!out_) throw std::runtime_error("cannot write " + path.string());
  for (const auto& h : header) field(h);
  end_row();
}

CsvWriter& CsvWriter::field(const std::string& s) {
  if (in_row_ > 0) out_ << ',';
  out_ << s;
  ++in_row_;
  return *this;
}

CsvWriter& CsvWriter::field(double v) { return field(format_double(v)); }

CsvWriter& CsvWriter::field(long long v) { return field(std::to_string(v)); }

void CsvWriter::end_row() {
  if (in_row_ != columns_)
    throw std::logic_error("CsvWriter: row has " + std::to_string(in_row_) +
                           " fields, header has " + std::to_string(columns_));
  out_ << '\n';
  in_row_ = 0;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_trimmed(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw std::out_of_range("csv: no column '" + name + "'");
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("csv: empty file " + path.string());
  table.header = split_trimmed(line, ',');
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto row = split_trimmed(line, ',');
    if (row.size() != table.header.size())
      throw std::runtime_error("csv: ragged row in " + path.string());
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace euler_resnet
