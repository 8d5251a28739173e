#pragma once

#include <Eigen/Dense>
#include <string>

namespace pve {

// Comma-separated numeric table to matrix.  Decimal-point floats only; cells
// may carry surrounding blanks; blank lines are skipped.  skip_header drops
// the first nonblank line.  Non-numeric or non-finite cells raise ParseError
// with 1-based line/column; ragged rows raise DimensionError.
Eigen::MatrixXd parse_csv(const std::string& text, bool skip_header);

// Reads the whole file and delegates to parse_csv; an unreadable path raises
// InvalidInputError.
Eigen::MatrixXd load_csv(const std::string& path, bool skip_header);

}  // namespace pve
