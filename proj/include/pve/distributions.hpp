#pragma once

#include <Eigen/Dense>

#include "pve/interval.hpp"
#include "pve/matrix.hpp"

namespace pve {

// Noncentral chi-squared with df degrees of freedom and noncentrality lambda.
struct NoncentralChiSq {
  int df = 1;
  double lambda = 0.0;
};

// Aspect ratio p/n of a tall matrix; parameterizes the Marchenko-Pastur bulk.
struct MPRatio {
  double beta = 1.0;
};

double ncchisq_cdf(double x, const NoncentralChiSq& dist);

double ncchisq_quantile(double q, const NoncentralChiSq& dist);

// Equal-tailed interval for the squared Frobenius norm of the mean matrix,
// obtained by inverting the noncentral chi-squared family in its
// noncentrality parameter at the observed squared norm q_obs.  Lower
// endpoints that have no nonnegative solution clamp to zero.
RealInterval denom_ci(double q_obs, int df, double sigma_c2, double alpha2);

// Median of the Marchenko-Pastur bulk with unit variance.
double mp_median(MPRatio ratio);

// Noise-variance estimate from the median singular value of a pure-noise-
// dominated spectrum.
NoiseModel estimate_sigma2(const Eigen::VectorXd& s, int n, int p);

}  // namespace pve
