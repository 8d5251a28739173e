#pragma once

#include <stdexcept>

namespace pve {

// Violated precondition: bad index, empty input, out-of-range parameter.
struct InvalidInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape problem: wide matrix, ragged rows, too few rows to center.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Iterative numerics failed: non-convergence, non-finite intermediate.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The conditional density carries no usable mass on its allowed region.
struct DegenerateDensityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A text cell that failed numeric parsing; carries its 1-based location.
struct ParseError : std::runtime_error {
  int line = 0;
  int column = 0;
  ParseError(const std::string& msg, int line_at, int column_at)
      : std::runtime_error(msg), line(line_at), column(column_at) {}
};

// A selection region with more pieces than its expected structure allows.
struct StructureViolationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace pve
