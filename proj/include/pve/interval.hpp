#pragma once

#include <limits>

namespace pve {

// Closed interval on the real line; hi may be +infinity.
struct RealInterval {
  double lo = 0.0;
  double hi = 0.0;

  bool empty() const { return !(lo <= hi); }
  double width() const { return hi - lo; }
  bool contains(double x) const { return lo <= x && x <= hi; }
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace pve
