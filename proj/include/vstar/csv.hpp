#pragma once

#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

namespace vstar {

// Comma separated, LF endings, shortest round-trip number formatting.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);
  void row(std::initializer_list<double> values);
  void row(const std::vector<double>& values);

 private:
  std::ofstream out_;
};

std::string format_number(double v);

}  // namespace vstar
