#pragma once

// Plain comma-separated tables with a header row. Numbers are written with
// 17 significant digits so values round-trip exactly.

#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chaosop/error.hpp"
#include "chaosop/io.hpp"

namespace chaosop {

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {
    if (header_.empty()) throw ParameterError("CsvTable: empty header");
  }

  std::size_t columns() const { return header_.size(); }
  std::size_t rows() const { return rows_.size(); }

  void add_row(std::vector<std::string> cells) {
    if (cells.size() != header_.size()) throw ShapeError("CsvTable: row width differs from the header");
    rows_.push_back(std::move(cells));
  }

  void add_row(const Eigen::Ref<const Eigen::RowVectorXd>& values) {
    std::vector<std::string> cells;
    for (Eigen::Index i = 0; i < values.size(); ++i) cells.push_back(format_double(values(i)));
    add_row(std::move(cells));
  }

  /// One row per matrix row.
  void add_rows(const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) add_row(m.row(i));
  }

  std::string str() const {
    std::string out;
    auto line = [&out](const std::vector<std::string>& cells) {
      for (std::size_t c = 0; c < cells.size(); ++c) {
        if (c) out += ',';
        out += cells[c];
      }
      out += '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out;
  }

  void write(const std::filesystem::path& path) const { atomic_write(path, str()); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Column names "prefix0, prefix1, ...".
inline std::vector<std::string> numbered(const std::string& prefix, Eigen::Index count) {
  std::vector<std::string> out;
  for (Eigen::Index i = 0; i < count; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

inline std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

/// Reads a numeric table written by CsvTable; returns the header and values.
inline std::pair<std::vector<std::string>, Eigen::MatrixXd> read_numeric_csv(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty file");
  std::vector<std::string> header;
  {
    std::istringstream h(line);
    std::string cell;
    while (std::getline(h, cell, ',')) header.push_back(cell);
  }
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream l(line);
    std::string cell;
    while (std::getline(l, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw IoError(path.string() + ":" + std::to_string(lineno) + ": not a number: '" + cell + "'");
      }
    }
    if (row.size() != header.size())
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                    " fields");
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < header.size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return {header, m};
}

}  // namespace chaosop
