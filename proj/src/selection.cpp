#include "pve/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pve/errors.hpp"

namespace pve {

TruncationSet::TruncationSet(std::vector<RealInterval> pieces) {
  std::erase_if(pieces, [](const RealInterval& iv) { return iv.empty(); });
  std::sort(pieces.begin(), pieces.end(),
            [](const RealInterval& a, const RealInterval& b) { return a.lo < b.lo; });
  for (const auto& iv : pieces) {
    if (pieces_.empty() || iv.lo > pieces_.back().hi) {
      pieces_.push_back(iv);
    } else {
      pieces_.back().hi = std::max(pieces_.back().hi, iv.hi);
    }
  }
  if (pieces_.size() > 2) {
    throw StructureViolationError("selection region has more than two pieces");
  }
}

bool TruncationSet::contains(double t) const {
  for (const auto& iv : pieces_) {
    if (iv.contains(t)) return true;
  }
  return false;
}

std::vector<RealInterval> TruncationSet::clip(double lo, double hi) const {
  std::vector<RealInterval> out;
  for (const auto& iv : pieces_) {
    const double a = std::max(lo, iv.lo);
    const double b = std::min(hi, iv.hi);
    if (a < b) out.push_back({a, b});
  }
  return out;
}

double second_diff(const Eigen::VectorXd& lambda, int i) {
  const int p = static_cast<int>(lambda.size());
  if (i < 2 || i > p - 1) return -kInf;
  return lambda(i - 2) - 2.0 * lambda(i - 1) + lambda(i);
}

int derivative_rule(const Eigen::VectorXd& s) {
  const int p = static_cast<int>(s.size());
  if (p < 3) throw InvalidInputError("curvature rule needs at least 3 components");
  const Eigen::VectorXd lambda = s.array().square();
  int best = 1;
  double best_val = second_diff(lambda, 2);
  for (int k = 2; k <= p - 2; ++k) {
    const double val = second_diff(lambda, k + 1);
    if (val > best_val) {
      best_val = val;
      best = k;
    }
  }
  return best;
}

double zg_loglik(const Eigen::VectorXd& lambda, int k) {
  const int p = static_cast<int>(lambda.size());
  if (p < 2) throw InvalidInputError("likelihood split needs at least 2 components");
  if (k < 1 || k > p - 1) throw InvalidInputError("split index out of range");
  const double mu1 = lambda.head(k).mean();
  const double mu2 = lambda.tail(p - k).mean();
  const double rss = (lambda.head(k).array() - mu1).square().sum() +
                     (lambda.tail(p - k).array() - mu2).square().sum();
  const double var = p > 2 ? rss / double(p - 2) : 0.0;
  if (var <= 0.0) return kInf;  // exact clusters: degenerate, dominates
  return -0.5 * p * std::log(2.0 * std::numbers::pi * var) -
         rss / (2.0 * var);
}

int zg_rule(const Eigen::VectorXd& s) {
  const int p = static_cast<int>(s.size());
  if (p < 2) throw InvalidInputError("likelihood rule needs at least 2 components");
  const Eigen::VectorXd lambda = s.array().square();
  int best = 1;
  double best_val = zg_loglik(lambda, 1);
  for (int k = 2; k <= p - 1; ++k) {
    const double val = zg_loglik(lambda, k);
    if (val > best_val) {
      best_val = val;
      best = k;
    }
  }
  return 1 + best;
}

int select_rank(const Eigen::VectorXd& s, SelectionRule rule) {
  switch (rule.kind) {
    case RuleKind::derivative:
      return derivative_rule(s);
    case RuleKind::zg:
      return zg_rule(s);
    case RuleKind::none:
      return static_cast<int>(s.size());
  }
  throw InvalidInputError("unknown selection rule");
}

TruncationSet truncation_set_derivative(const Eigen::VectorXd& s, int k) {
  const int p = static_cast<int>(s.size());
  if (p < 3) throw InvalidInputError("curvature rule needs at least 3 components");
  if (k < 1 || k > p - 2) throw InvalidInputError("component outside the selectable range");
  if (k == 1) return TruncationSet::full();

  // All bound arithmetic happens on squared values; square roots only at the
  // end.  lam(i) follows the 1-based spectrum indexing.
  const Eigen::VectorXd lambda = s.array().square();
  const auto lam = [&](int i) { return lambda(i - 1); };

  // Curvatures of positions untouched by imputing component k.
  double c1 = -kInf;
  for (int i = 2; i <= k - 2; ++i) c1 = std::max(c1, second_diff(lambda, i));
  double c2 = -kInf;
  for (int i = k + 2; i <= p - 1; ++i) c2 = std::max(c2, second_diff(lambda, i));

  std::vector<RealInterval> pieces;

  // Piece A: the curvature at position k+1 dominates.  Exists unless the
  // t-free comparison against position k-1 already fails.
  const bool a_ok =
      k < 3 || lam(k - 2) - 2.0 * lam(k - 1) <= -2.0 * lam(k + 1) + lam(k + 2);
  if (a_ok) {
    double u_lo = (lam(k - 1) + 3.0 * lam(k + 1) - lam(k + 2)) / 3.0;
    if (std::isfinite(c1)) {
      u_lo = std::max(u_lo, c1 + 2.0 * lam(k + 1) - lam(k + 2));
    }
    pieces.push_back({std::sqrt(std::max(u_lo, 0.0)), kInf});
  }

  // Piece B: a later untouched curvature dominates.  Needs that curvature to
  // be finite and at least as large as every earlier untouched one.
  if (std::isfinite(c2) && c1 <= c2) {
    const double u_lo = 0.5 * (lam(k - 1) + lam(k + 1) - c2);
    const double u_hi =
        k >= 3 ? 2.0 * lam(k - 1) - lam(k - 2) + c2 : kInf;
    if (u_lo <= u_hi && u_hi >= 0.0) {
      pieces.push_back({std::sqrt(std::max(u_lo, 0.0)),
                        std::isinf(u_hi) ? kInf : std::sqrt(u_hi)});
    }
  }

  if (pieces.empty()) {
    throw InvalidInputError("component is not selected by the curvature rule");
  }
  return TruncationSet(std::move(pieces));
}

namespace {

// Does imputing value t at position k keep component k selected?
bool zg_keeps(const Eigen::VectorXd& s, int k, double t) {
  Eigen::VectorXd imputed = s;
  imputed(k - 1) = t;
  return k <= zg_rule(imputed);
}

}  // namespace

TruncationSet truncation_set_zg(const Eigen::VectorXd& s, int k,
                                int grid_size, double k1_cap) {
  const int p = static_cast<int>(s.size());
  if (p < 2) throw InvalidInputError("likelihood rule needs at least 2 components");
  if (k < 1 || k > p) throw InvalidInputError("component index out of range");
  if (grid_size < 64) throw InvalidInputError("grid too coarse; need >= 64 nodes");
  if (!zg_keeps(s, k, s(k - 1))) {
    throw InvalidInputError("component is not selected by the likelihood rule");
  }

  const double lo = k < p ? s(k) : 0.0;
  const double hi = k > 1 ? s(k - 2) : k1_cap;
  if (!(std::isfinite(hi) && hi > lo)) {
    if (hi == lo) return TruncationSet({{lo, hi}});  // tied neighbors
    throw InvalidInputError("invalid search range for the selection grid");
  }

  const double step = (hi - lo) / double(grid_size - 1);
  std::vector<bool> keep(grid_size);
  for (int i = 0; i < grid_size; ++i) {
    keep[i] = zg_keeps(s, k, lo + i * step);
  }

  // A change of indicator between neighboring nodes is pinned down by
  // bisection before the node runs become intervals.
  const auto refine = [&](int i_false, int i_true) {
    double a = lo + i_false * step;  // indicator false here
    double b = lo + i_true * step;   // indicator true here
    for (int it = 0; it < 60 && std::abs(b - a) > 1e-10 * (1.0 + std::abs(b));
         ++it) {
      const double mid = 0.5 * (a + b);
      (zg_keeps(s, k, mid) ? b : a) = mid;
    }
    return 0.5 * (a + b);
  };

  std::vector<RealInterval> pieces;
  int i = 0;
  while (i < grid_size) {
    if (!keep[i]) {
      ++i;
      continue;
    }
    int j = i;
    while (j + 1 < grid_size && keep[j + 1]) ++j;
    const double left = i == 0 ? lo : refine(i - 1, i);
    double right = j == grid_size - 1 ? hi : refine(j + 1, j);
    if (k == 1 && j == grid_size - 1) {
      right = kInf;  // the leading component stays selected however large it grows
    }
    pieces.push_back({left, right});
    i = j + 1;
  }
  if (pieces.size() > 2) {
    throw StructureViolationError("selection region has more than two pieces");
  }
  return TruncationSet(std::move(pieces));
}

TruncationSet truncation_set(const Eigen::VectorXd& s, int k,
                             SelectionRule rule, int grid_size, double k1_cap) {
  switch (rule.kind) {
    case RuleKind::derivative:
      return truncation_set_derivative(s, k);
    case RuleKind::zg:
      return truncation_set_zg(s, k, grid_size, k1_cap);
    case RuleKind::none:
      return TruncationSet::full();
  }
  throw InvalidInputError("unknown selection rule");
}

}  // namespace pve
