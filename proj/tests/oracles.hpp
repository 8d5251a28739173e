#pragma once

// Test-only reference implementations, kept deliberately independent of the
// library's numerics: different algorithms, different special-function
// routes, brute-force enumeration where possible.

#include <cmath>
#include <functional>
#include <stdexcept>

namespace pve::oracle {

// Regularized lower incomplete gamma via the classic series / continued
// fraction pair (std::lgamma only; no shared code with the library path).
inline double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_p domain");
  if (x == 0.0) return 0.0;
  const double log_prefactor = a * std::log(x) - x - std::lgamma(a);
  if (x < a + 1.0) {
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 10000; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(log_prefactor);
  }
  // Lentz continued fraction for the upper tail.
  double b = x + 1.0 - a;
  double c = 1e300;
  double d = 1.0 / b;
  double frac = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -double(i) * (double(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double delta = d * c;
    frac *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return 1.0 - std::exp(log_prefactor) * frac;
}

inline double central_chisq_cdf(double x, int df) {
  return x <= 0.0 ? 0.0 : gamma_p(0.5 * df, 0.5 * x);
}

// Noncentral chi-squared density in its closed Bessel form; valid for df >= 2
// so the Bessel order is nonnegative.
inline double ncchisq_density(double x, int df, double lambda) {
  if (x <= 0.0) return 0.0;
  const double nu = 0.5 * df - 1.0;
  const double z = std::sqrt(lambda * x);
  return 0.5 * std::exp(-0.5 * (x + lambda)) *
         std::pow(x / lambda, 0.5 * nu) * std::cyl_bessel_i(nu, z);
}

// Adaptive Simpson quadrature.
inline double adaptive_simpson(const std::function<double(double)>& f,
                               double a, double b, double tol, int depth = 30) {
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  // Tolerance halves with each split so the panel errors sum to ~tol.
  const std::function<double(double, double, double, double, double, double,
                             double, int)>
      rec = [&](double lo, double hi, double flo, double fmid, double fhi,
                double acc, double eps, int d) -> double {
    const double mid = 0.5 * (lo + hi);
    const double lm = 0.5 * (lo + mid), rm = 0.5 * (mid + hi);
    const double flm = f(lm), frm = f(rm);
    const double left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
    const double right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
    if (d <= 0 || std::abs(left + right - acc) < 15.0 * eps) {
      return left + right + (left + right - acc) / 15.0;
    }
    return rec(lo, mid, flo, flm, fmid, left, 0.5 * eps, d - 1) +
           rec(mid, hi, fmid, frm, fhi, right, 0.5 * eps, d - 1);
  };
  return rec(a, b, fa, fm, fb, whole, tol, depth);
}

// Noncentral chi-squared CDF by direct integration of the Bessel-form
// density (df >= 2).  The substitution t = u^2 makes the integrand analytic
// at the origin, where the raw density has a sqrt-type kink.
inline double ncchisq_cdf_by_quadrature(double x, int df, double lambda) {
  if (x <= 0.0) return 0.0;
  return adaptive_simpson(
      [&](double u) { return 2.0 * u * ncchisq_density(u * u, df, lambda); },
      0.0, std::sqrt(x), 1e-13);
}

// Midpoint Riemann sum.
inline double riemann(const std::function<double(double)>& f, double a,
                      double b, long long nodes) {
  const double h = (b - a) / double(nodes);
  double sum = 0.0;
  for (long long i = 0; i < nodes; ++i) sum += f(a + (double(i) + 0.5) * h);
  return sum * h;
}

}  // namespace pve::oracle
