#ifndef SEGP_CSV_HPP
#define SEGP_CSV_HPP

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "segp/linalg.hpp"

namespace segp {

/// 17 significant digits, enough for a lossless float64 round trip.
std::string format_double(double value);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);

  void row(const std::vector<std::string>& cells);
  void row(const std::vector<double>& values);

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t columns_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws std::out_of_range if absent.
  std::size_t column(const std::string& name) const;
  std::vector<double> numeric_column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

/// Header c0..c{cols-1}, one matrix row per line.
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix_csv(const std::filesystem::path& path);

}  // namespace segp

#endif  // SEGP_CSV_HPP
