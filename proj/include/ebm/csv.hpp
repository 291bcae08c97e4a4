#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace ebm {

// 17 significant digits, round-trips doubles exactly.
std::string format_double(double value);

// UTF-8, header row, ',' delimiter.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);

  CsvWriter& cell(double value);
  CsvWriter& cell(long long value);
  CsvWriter& cell(std::size_t value) { return cell(static_cast<long long>(value)); }
  CsvWriter& cell(int value) { return cell(static_cast<long long>(value)); }
  CsvWriter& cell(const std::string& value);
  void end_row();

 private:
  void separator();

  std::ofstream out_;
  std::size_t columns_;
  std::size_t filled_ = 0;
  std::string path_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column; throws if absent.
  std::size_t column(const std::string& name) const;
  std::vector<double> numeric_column(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);

}  // namespace ebm
