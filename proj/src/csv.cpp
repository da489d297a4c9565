#include "vstar/csv.hpp"

#include <fmt/format.h>

#include "vstar/error.hpp"

namespace vstar {

std::string format_number(double v) { return fmt::format("{}", v); }

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : out_(path, std::ios::binary) {
  if (!out_) throw Error(Errc::invalid_argument, "cannot open " + path);
  for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
  out_ << '\n';
}

void CsvWriter::row(std::initializer_list<double> values) { row(std::vector<double>(values)); }

void CsvWriter::row(const std::vector<double>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << format_number(values[i]);
  out_ << '\n';
}

}  // namespace vstar
