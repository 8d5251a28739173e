#include "pve/distributions.hpp"

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numbers>
#include <vector>

#include "pve/errors.hpp"

namespace pve {

namespace {

constexpr double kPoissonTail = 1e-14;
constexpr long long kMaxSeriesTerms = 10'000'000;

void validate(const NoncentralChiSq& dist) {
  if (dist.df < 1) throw InvalidInputError("degrees of freedom must be >= 1");
  if (!(dist.lambda >= 0.0) || !std::isfinite(dist.lambda)) {
    throw InvalidInputError("noncentrality must be finite and nonnegative");
  }
}

// Poisson(h) weight at j, evaluated in log space.
double poisson_weight(double h, long long j) {
  return std::exp(-h + double(j) * std::log(h) - std::lgamma(double(j) + 1.0));
}

}  // namespace

double ncchisq_cdf(double x, const NoncentralChiSq& dist) {
  validate(dist);
  if (std::isnan(x)) throw InvalidInputError("cdf argument is NaN");
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;

  const double a = 0.5 * dist.df;
  const double y = 0.5 * x;
  const double h = 0.5 * dist.lambda;
  if (h == 0.0) return boost::math::gamma_p(a, y);

  // Mixture of central chi-squared CDFs with Poisson(h) weights.  Terms are
  // taken outward from the Poisson mode until the omitted weight is below
  // kPoissonTail; since every central CDF lies in [0,1] this bounds the
  // truncation error by the same amount.
  const long long j0 = static_cast<long long>(std::floor(h));
  const double w0 = poisson_weight(h, j0);
  if (!std::isfinite(w0)) throw NumericalError("mixture weight overflow");

  long long j_hi = j0;
  long long j_lo = j0;
  {
    double cover = w0;
    double w_up = w0 * h / double(j0 + 1);
    double w_dn = j0 > 0 ? w0 * double(j0) / h : 0.0;
    while (cover < 1.0 - kPoissonTail) {
      if (j_hi - j0 + j0 - j_lo > kMaxSeriesTerms) {
        throw NumericalError("mixture series failed to cover the Poisson mass");
      }
      const bool take_up = j_lo == 0 || w_up >= w_dn;
      if (take_up) {
        ++j_hi;
        cover += w_up;
        w_up *= h / double(j_hi + 1);
      } else {
        --j_lo;
        cover += w_dn;
        w_dn *= double(j_lo) / h;
      }
      if (w_up < 1e-320 && (j_lo == 0 || w_dn < 1e-320)) break;
    }
  }

  // Central-CDF and term recurrences anchored at the mode.  Upward steps
  // subtract the density term (values shrink toward 0); downward steps add
  // it (values grow toward 1).  Both stay clamped inside [0,1].
  const double p0 = boost::math::gamma_p(a + double(j0), y);
  const double t0 =
      std::exp((a + double(j0)) * std::log(y) - y -
               std::lgamma(a + double(j0) + 1.0));

  double sum = w0 * p0;
  {
    double w = w0, p = p0, t = t0;
    for (long long j = j0; j < j_hi; ++j) {
      p -= t;
      if (p < 0.0) p = 0.0;
      t *= y / (a + double(j) + 1.0);
      w *= h / double(j + 1);
      sum += w * p;
    }
  }
  {
    double w = w0, p = p0, t = t0;
    for (long long j = j0; j > j_lo; --j) {
      t *= (a + double(j)) / y;
      p += t;
      if (p > 1.0) p = 1.0;
      w *= double(j) / h;
      sum += w * p;
    }
  }
  return std::clamp(sum, 0.0, 1.0);
}

double ncchisq_quantile(double q, const NoncentralChiSq& dist) {
  validate(dist);
  if (!(q > 0.0 && q < 1.0)) {
    throw InvalidInputError("quantile level must lie strictly inside (0,1)");
  }
  double lo = 0.0;
  double hi = dist.df + dist.lambda +
              10.0 * std::sqrt(2.0 * dist.df + 4.0 * dist.lambda) + 10.0;
  int doublings = 0;
  while (ncchisq_cdf(hi, dist) < q) {
    hi *= 2.0;
    if (++doublings > 200) throw NumericalError("quantile bracket failed");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-13 * (1.0 + hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    (ncchisq_cdf(mid, dist) < q ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

namespace {

// Solves ncchisq_cdf(x; df, lambda) = target in lambda (the CDF is strictly
// decreasing in lambda).  Returns 0 when even lambda = 0 undershoots.
double invert_noncentrality(double x, int df, double target) {
  if (ncchisq_cdf(x, {df, 0.0}) <= target) return 0.0;
  double lo = 0.0;
  double hi = x + 10.0 * std::sqrt(double(df));
  int doublings = 0;
  while (ncchisq_cdf(x, {df, hi}) > target) {
    hi *= 2.0;
    if (++doublings > 200) throw NumericalError("noncentrality bracket failed");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-12 * (1.0 + hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    (ncchisq_cdf(x, {df, mid}) > target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

RealInterval denom_ci(double q_obs, int df, double sigma_c2, double alpha2) {
  if (!(q_obs >= 0.0) || !std::isfinite(q_obs)) {
    throw InvalidInputError("observed squared norm must be finite and nonnegative");
  }
  if (df < 1) throw InvalidInputError("degrees of freedom must be >= 1");
  if (!(sigma_c2 > 0.0)) throw InvalidInputError("noise variance must be positive");
  if (!(alpha2 > 0.0 && alpha2 < 1.0)) {
    throw InvalidInputError("alpha2 must lie strictly inside (0,1)");
  }
  const double w = q_obs / sigma_c2;
  const double lam_hi = invert_noncentrality(w, df, 0.5 * alpha2);
  const double lam_lo = invert_noncentrality(w, df, 1.0 - 0.5 * alpha2);
  return RealInterval{sigma_c2 * lam_lo, sigma_c2 * lam_hi};
}

namespace {

// 15-point Gauss-Legendre nodes/weights on [-1, 1] (symmetric halves).
constexpr int kGlPoints = 15;
constexpr double kGlNode[kGlPoints] = {
    -0.9879925180204854, -0.9372733924007060, -0.8482065834104272,
    -0.7244177313601701, -0.5709721726085388, -0.3941513470775634,
    -0.2011940939974345, 0.0,                 0.2011940939974345,
    0.3941513470775634,  0.5709721726085388,  0.7244177313601701,
    0.8482065834104272,  0.9372733924007060,  0.9879925180204854};
constexpr double kGlWeight[kGlPoints] = {
    0.0307532419961173, 0.0703660474881081, 0.1071592204671719,
    0.1395706779261543, 0.1662692058169939, 0.1861610000155622,
    0.1984314853271116, 0.2025782419255613, 0.1984314853271116,
    0.1861610000155622, 0.1662692058169939, 0.1395706779261543,
    0.1071592204671719, 0.0703660474881081, 0.0307532419961173};

// Bulk CDF evaluated through the substitution x = a + (b-a) sin^2(theta),
// which removes both edge singularities of the density.  Panels are graded
// geometrically toward theta = 0 because for aspect ratios just below 1 the
// integrand has a boundary layer of width ~sqrt(a) there.
double mp_mass_below_angle(double beta, double theta_star) {
  const double sb = std::sqrt(beta);
  const double a = (1.0 - sb) * (1.0 - sb);
  const double span = (1.0 + sb) * (1.0 + sb) - a;
  double total = 0.0;
  double hi = theta_star;
  while (hi > 1e-14 * theta_star && hi > 0.0) {
    const double lo = 0.5 * hi;
    const double mid = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    for (int g = 0; g < kGlPoints; ++g) {
      const double th = mid + half * kGlNode[g];
      const double sin2 = std::sin(th) * std::sin(th);
      const double cos2 = 1.0 - sin2;
      const double x = a + span * sin2;
      total += kGlWeight[g] * half * span * span * sin2 * cos2 /
               (std::numbers::pi * beta * x);
    }
    hi = lo;
  }
  return total;
}

}  // namespace

double mp_median(MPRatio ratio) {
  const double beta = ratio.beta;
  if (!(beta > 0.0 && beta <= 1.0)) {
    throw InvalidInputError("aspect ratio must lie in (0, 1]");
  }
  const double half_pi = 0.5 * std::numbers::pi;
  const double total = mp_mass_below_angle(beta, half_pi);
  if (std::abs(total - 1.0) > 1e-8) {
    throw NumericalError("bulk density failed to normalize");
  }
  double lo = 0.0, hi = half_pi;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mp_mass_below_angle(beta, mid) < 0.5 * total ? lo : hi) = mid;
  }
  const double theta = 0.5 * (lo + hi);
  const double sb = std::sqrt(beta);
  const double a = (1.0 - sb) * (1.0 - sb);
  const double b = (1.0 + sb) * (1.0 + sb);
  const double sin2 = std::sin(theta) * std::sin(theta);
  return a + (b - a) * sin2;
}

NoiseModel estimate_sigma2(const Eigen::VectorXd& s, int n, int p) {
  if (p < 1 || s.size() != p) {
    throw InvalidInputError("spectrum length must equal p >= 1");
  }
  if (n < p) throw DimensionError("estimator requires n >= p");
  std::vector<double> sorted(s.data(), s.data() + p);
  std::sort(sorted.begin(), sorted.end());
  const double med = p % 2 == 1
                         ? sorted[p / 2]
                         : 0.5 * (sorted[p / 2 - 1] + sorted[p / 2]);
  if (!(med > 0.0)) {
    throw NumericalError("median singular value is zero; variance not identifiable");
  }
  const double bulk_med = mp_median(MPRatio{double(p) / double(n)});
  return NoiseModel{med * med / (double(n) * bulk_med), NoiseSource::estimated};
}

}  // namespace pve
