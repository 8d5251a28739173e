#include "pve/inference.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pve/distributions.hpp"
#include "pve/errors.hpp"

namespace pve {

namespace {

constexpr double kLevelTol = 1e-6;
constexpr int kMaxDoublings = 200;
constexpr int kMaxBisect = 300;

// Expands [lo, hi] around center until fn crosses target, then bisects until
// the function value is within kLevelTol of the target.  fn must be
// nondecreasing in its argument.
template <typename Fn>
double invert_monotone(const Fn& fn, double target, double center,
                       double step, const char* what) {
  double lo = center - step;
  double hi = center + step;
  double f_lo = fn(lo);
  double f_hi = fn(hi);
  int doublings = 0;
  while (f_lo > target) {
    step *= 2.0;
    lo -= step;
    f_lo = fn(lo);
    if (++doublings > kMaxDoublings)
      throw NumericalError(std::string("bracket expansion failed for ") +
                           what);
  }
  doublings = 0;
  while (f_hi < target) {
    step *= 2.0;
    hi += step;
    f_hi = fn(hi);
    if (++doublings > kMaxDoublings)
      throw NumericalError(std::string("bracket expansion failed for ") +
                           what);
  }
  for (int it = 0; it < kMaxBisect; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f_mid = fn(mid);
    if (std::abs(f_mid - target) < kLevelTol) return mid;
    (f_mid < target ? lo : hi) = mid;
  }
  throw NumericalError(std::string("bisection did not converge for ") + what);
}

}  // namespace

ThinnedPair thin(const DataMatrix& x, double c, const NoiseModel& noise,
                 Rng& rng) {
  if (!(c > 0.0)) throw InvalidInputError("thinning constant must be > 0");
  const double sd = std::sqrt(noise.sigma2);
  Eigen::MatrixXd draw(x.n(), x.p());
  for (Eigen::Index j = 0; j < draw.cols(); ++j)
    for (Eigen::Index i = 0; i < draw.rows(); ++i)
      draw(i, j) = sd * rng.gaussian();

  ThinnedPair pair;
  pair.x1 = DataMatrix::from(x.values + c * draw);
  pair.x2 = DataMatrix::from(x.values - draw / c);
  pair.c = c;
  pair.sigma1_2 = noise.sigma2 * (1.0 + c * c);
  pair.sigma_c2 = noise.sigma2 * (1.0 + 1.0 / (c * c));
  pair.source = noise.source;
  return pair;
}

ThinnedPair thin(const DataMatrix& x, double c, const NoiseModel& noise,
                 std::uint64_t seed) {
  Rng rng(seed);
  return thin(x, c, noise, rng);
}

double p_value(const SvdFactorization& svd, int k, SelectionRule rule,
               const NoiseModel& noise) {
  const auto ctx = make_context(svd, k, rule, noise);
  return survival_prob(0.0, ctx, svd.s(k - 1));
}

RealInterval ci_numerator(const SvdFactorization& svd, int k,
                          SelectionRule rule, const NoiseModel& noise,
                          double alpha1) {
  if (!(alpha1 > 0.0 && alpha1 < 1.0))
    throw InvalidInputError("alpha1 must lie in (0, 1)");
  const auto ctx = make_context(svd, k, rule, noise);
  const double s_obs = svd.s(k - 1);
  const auto surv = [&](double delta) {
    return survival_prob(delta, ctx, s_obs);
  };
  const double step = std::sqrt(ctx.sigma2);
  const double lo =
      invert_monotone(surv, alpha1 / 2.0, s_obs, step, "numerator lower");
  const double hi = invert_monotone(surv, 1.0 - alpha1 / 2.0, s_obs, step,
                                    "numerator upper");
  return {std::min(lo, hi), std::max(lo, hi)};
}

RealInterval square_interval(const RealInterval& iv) {
  const double a = std::abs(iv.lo);
  const double b = std::abs(iv.hi);
  const double hi = std::max(a, b) * std::max(a, b);
  if (iv.lo <= 0.0 && iv.hi >= 0.0) return {0.0, hi};
  const double lo = std::min(a, b) * std::min(a, b);
  return {lo, hi};
}

double mle_delta(const SvdFactorization& svd, int k, SelectionRule rule,
                 const NoiseModel& noise) {
  const auto ctx = make_context(svd, k, rule, noise);
  const double s_obs = svd.s(k - 1);
  const auto mean = [&](double delta) { return conditional_mean(delta, ctx); };
  // The conditional mean is monotone in the tilt, so the stationarity
  // condition mean(delta) = s_obs has a unique root.
  double lo = s_obs - std::sqrt(ctx.sigma2);
  double hi = s_obs + std::sqrt(ctx.sigma2);
  double step = std::sqrt(ctx.sigma2);
  int doublings = 0;
  while (mean(lo) > s_obs) {
    step *= 2.0;
    lo -= step;
    if (++doublings > kMaxDoublings)
      throw NumericalError("bracket expansion failed for tilt estimate");
  }
  doublings = 0;
  step = std::sqrt(ctx.sigma2);
  while (mean(hi) < s_obs) {
    step *= 2.0;
    hi += step;
    if (++doublings > kMaxDoublings)
      throw NumericalError("bracket expansion failed for tilt estimate");
  }
  // When s_obs sits close to a truncation edge the root drifts far from the
  // observation and the mean becomes nearly constant in the tilt, so a loose
  // mean-space tolerance would accept points far from the stationary tilt.
  const double tol = 1e-8 * s_obs;
  for (int it = 0; it < kMaxBisect; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double m = mean(mid);
    if (std::abs(m - s_obs) < tol) return mid;
    // A near-vertical mean can step across s_obs between adjacent doubles;
    // the bracket width is then the sharper convergence measure.
    if (hi - lo <= 1e-10 * (1.0 + std::abs(mid))) return mid;
    (m < s_obs ? lo : hi) = mid;
  }
  throw NumericalError("bisection did not converge for tilt estimate");
}

InferenceReport ci_pve(const ThinnedPair& pair, const SvdFactorization& svd1,
                       int k, SelectionRule rule, double alpha1,
                       double alpha2) {
  InferenceReport rep;
  rep.k = k;
  rep.rule = rule.kind;
  rep.r_selected = select_rank(svd1.s, rule);
  rep.alpha1 = alpha1;
  rep.alpha2 = alpha2;

  rep.delta_interval = ci_numerator(svd1, k, rule, pair.noise1(), alpha1);
  rep.num_sq_interval = square_interval(rep.delta_interval);

  const double q_obs = pair.x2.values.squaredNorm();
  const int df = static_cast<int>(pair.x2.n() * pair.x2.p());
  rep.denom_interval = denom_ci(q_obs, df, pair.sigma_c2, alpha2);

  if (rep.denom_interval.hi <= 0.0) {
    rep.interval_degenerate = true;
    rep.pve_interval = {0.0, 1.0};
    rep.pve_interval_raw = {0.0, kInf};
    return rep;
  }
  const double raw_lo = rep.num_sq_interval.lo / rep.denom_interval.hi;
  const double raw_hi = rep.denom_interval.lo > 0.0
                            ? rep.num_sq_interval.hi / rep.denom_interval.lo
                            : kInf;
  rep.pve_interval_raw = {raw_lo, raw_hi};
  rep.pve_interval = {std::clamp(raw_lo, 0.0, 1.0),
                      std::clamp(raw_hi, 0.0, 1.0)};
  return rep;
}

namespace {

std::optional<double> pve_from_delta(const ThinnedPair& pair, double delta) {
  const double denom =
      pair.x2.values.squaredNorm() -
      double(pair.x2.n() * pair.x2.p()) * pair.sigma_c2;
  if (denom <= 0.0) return std::nullopt;
  return delta * delta / denom;
}

}  // namespace

std::optional<double> mle_pve(const ThinnedPair& pair,
                              const SvdFactorization& svd1, int k,
                              SelectionRule rule) {
  return pve_from_delta(pair, mle_delta(svd1, k, rule, pair.noise1()));
}

std::vector<InferenceReport> infer_selected(const ThinnedPair& pair,
                                            SelectionRule rule, double alpha1,
                                            double alpha2) {
  const auto svd1 = compute_svd(pair.x1);
  const int r = select_rank(svd1.s, rule);
  std::vector<InferenceReport> reports;
  reports.reserve(r);
  for (int k = 1; k <= r; ++k) {
    auto rep = ci_pve(pair, svd1, k, rule, alpha1, alpha2);
    rep.p_value = p_value(svd1, k, rule, pair.noise1());
    rep.delta_mle = mle_delta(svd1, k, rule, pair.noise1());
    rep.pve_mle = pve_from_delta(pair, rep.delta_mle);
    reports.push_back(std::move(rep));
  }
  return reports;
}

}  // namespace pve
