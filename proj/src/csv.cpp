#include "pve/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string_view>
#include <vector>

#include "pve/errors.hpp"

namespace pve {

namespace {

constexpr std::string_view kBlank = " \t\r";

double parse_cell(std::string_view cell, int line, int column) {
  const std::string where =
      "line " + std::to_string(line) + ", column " + std::to_string(column);
  const auto begin = cell.find_first_not_of(kBlank);
  if (begin == std::string_view::npos)
    throw ParseError("empty cell at " + where, line, column);
  const auto end = cell.find_last_not_of(kBlank);
  cell = cell.substr(begin, end - begin + 1);

  double value = 0.0;
  const auto [ptr, ec] =
      std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc{} || ptr != cell.data() + cell.size())
    throw ParseError("cannot parse '" + std::string(cell) + "' as a number at " + where,
                     line, column);
  if (!std::isfinite(value))
    throw ParseError("non-finite value '" + std::string(cell) + "' at " + where,
                     line, column);
  return value;
}

}  // namespace

Eigen::MatrixXd parse_csv(const std::string& text, bool skip_header) {
  std::vector<std::vector<double>> rows;
  bool header_pending = skip_header;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto line_end = (nl == std::string::npos) ? text.size() : nl;
    const std::string_view line(text.data() + pos, line_end - pos);
    pos = line_end + 1;
    ++line_no;
    if (line.find_first_not_of(kBlank) == std::string_view::npos) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }

    std::vector<double> row;
    std::size_t cell_start = 0;
    int column = 0;
    while (true) {
      const auto comma = line.find(',', cell_start);
      const auto cell_end =
          (comma == std::string_view::npos) ? line.size() : comma;
      ++column;
      row.push_back(
          parse_cell(line.substr(cell_start, cell_end - cell_start), line_no,
                     column));
      if (comma == std::string_view::npos) break;
      cell_start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw DimensionError("line " + std::to_string(line_no) + " has " +
                           std::to_string(row.size()) + " cells, expected " +
                           std::to_string(rows.front().size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InvalidInputError("csv input contains no data rows");

  Eigen::MatrixXd m(static_cast<int>(rows.size()),
                    static_cast<int>(rows.front().size()));
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
  return m;
}

Eigen::MatrixXd load_csv(const std::string& path, bool skip_header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInputError("cannot open input file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str(), skip_header);
}

}  // namespace pve
