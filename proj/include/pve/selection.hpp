#pragma once

#include <Eigen/Dense>
#include <vector>

#include "pve/interval.hpp"

namespace pve {

enum class RuleKind { derivative, zg, none };

struct SelectionRule {
  RuleKind kind = RuleKind::zg;
};

// Values that component k can take while remaining selected; always a union
// of at most two disjoint closed intervals on [0, inf).
class TruncationSet {
 public:
  TruncationSet() = default;
  // Sorts, drops empty pieces, merges overlaps; throws StructureViolationError
  // if more than two disjoint pieces survive.
  explicit TruncationSet(std::vector<RealInterval> pieces);

  static TruncationSet full() { return TruncationSet({{0.0, kInf}}); }

  const std::vector<RealInterval>& pieces() const { return pieces_; }
  bool contains(double t) const;
  // Pieces intersected with [lo, hi]; degenerate slivers are dropped.
  std::vector<RealInterval> clip(double lo, double hi) const;

 private:
  std::vector<RealInterval> pieces_;
};

// Discrete curvature of the squared spectrum at 1-based position i; -inf
// outside 2..p-1 so boundary positions never win a maximum.
double second_diff(const Eigen::VectorXd& lambda, int i);

// Rank choice by the largest curvature drop; valid range 1..p-2.
int derivative_rule(const Eigen::VectorXd& s);

// Two-group Gaussian profile log-likelihood of splitting the squared
// spectrum after position k; +inf when the pooled variance degenerates.
double zg_loglik(const Eigen::VectorXd& lambda, int k);

// Rank choice by the best likelihood split; valid range 2..p.
int zg_rule(const Eigen::VectorXd& s);

// Dispatch on the rule; `none` keeps every component (rank = p).
int select_rank(const Eigen::VectorXd& s, SelectionRule rule);

TruncationSet truncation_set_derivative(const Eigen::VectorXd& s, int k);

// Grid search over the admissible range for component k with bisection-
// refined boundaries; k1_cap bounds the search when k = 1 leaves it open
// above.  grid_size >= 64.
TruncationSet truncation_set_zg(const Eigen::VectorXd& s, int k,
                                int grid_size, double k1_cap);

TruncationSet truncation_set(const Eigen::VectorXd& s, int k,
                             SelectionRule rule, int grid_size, double k1_cap);

}  // namespace pve
