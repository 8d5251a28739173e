#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "pve/cond_density.hpp"
#include "pve/interval.hpp"
#include "pve/matrix.hpp"
#include "pve/rng.hpp"
#include "pve/selection.hpp"

namespace pve {

// Two independent views of the same mean matrix produced by adding and
// subtracting a scaled copy of fresh Gaussian noise.
struct ThinnedPair {
  DataMatrix x1;  // carries variance sigma1_2, used for selection and tests
  DataMatrix x2;  // carries variance sigma_c2, used for the norm estimate
  double c = 1.0;
  double sigma1_2 = 0.0;
  double sigma_c2 = 0.0;
  NoiseSource source = NoiseSource::known;

  NoiseModel noise1() const { return {sigma1_2, source}; }
  NoiseModel noise2() const { return {sigma_c2, source}; }
};

ThinnedPair thin(const DataMatrix& x, double c, const NoiseModel& noise,
                 Rng& rng);
ThinnedPair thin(const DataMatrix& x, double c, const NoiseModel& noise,
                 std::uint64_t seed);

// Survival probability of the observed k-th singular value under the null
// tilt, restricted to the selection region; uniform under the null.
double p_value(const SvdFactorization& svd, int k, SelectionRule rule,
               const NoiseModel& noise);

// Equal-tailed interval for the signal strength of component k, found by
// inverting the survival probability (monotone in the tilt) at its two
// target levels.
RealInterval ci_numerator(const SvdFactorization& svd, int k,
                          SelectionRule rule, const NoiseModel& noise,
                          double alpha1);

// Image of an interval under squaring: touches zero iff the input straddles
// zero.
RealInterval square_interval(const RealInterval& iv);

// Tilt whose restricted conditional mean equals the observed singular value
// (the stationarity condition of the conditional likelihood).
double mle_delta(const SvdFactorization& svd, int k, SelectionRule rule,
                 const NoiseModel& noise);

// Everything reported for one tested component.
struct InferenceReport {
  int k = 0;
  double p_value = 1.0;
  RealInterval delta_interval{0.0, 0.0};
  RealInterval num_sq_interval{0.0, 0.0};
  RealInterval denom_interval{0.0, 0.0};
  RealInterval pve_interval{0.0, 1.0};      // clamped to the unit interval
  RealInterval pve_interval_raw{0.0, 1.0};  // before clamping; hi may be +inf
  double delta_mle = 0.0;
  std::optional<double> pve_mle;  // empty when the norm estimate is <= 0
  bool interval_degenerate = false;
  RuleKind rule = RuleKind::zg;
  int r_selected = 0;
  double alpha1 = 0.0;
  double alpha2 = 0.0;
};

// Confidence-interval assembly for one component: numerator interval from
// the first view, denominator interval from the second, ratio clamped to the
// unit interval with raw bounds kept for diagnostics.
InferenceReport ci_pve(const ThinnedPair& pair, const SvdFactorization& svd1,
                       int k, SelectionRule rule, double alpha1,
                       double alpha2);

// Point estimate: squared tilt estimate over the debiased squared norm of
// the second view; empty when that norm estimate is not positive.
std::optional<double> mle_pve(const ThinnedPair& pair,
                              const SvdFactorization& svd1, int k,
                              SelectionRule rule);

// Full per-component reports for every index the rule keeps on the first
// view.
std::vector<InferenceReport> infer_selected(const ThinnedPair& pair,
                                            SelectionRule rule, double alpha1,
                                            double alpha2);

}  // namespace pve
